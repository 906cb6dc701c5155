from __future__ import annotations

import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from clinsynth.ngram import (NGramModel, SamplerConfig, ZeroProbabilityError,
                             apply_temperature, load_ngram, sample_sequence,
                             save_ngram, score_perplexity, train_ngram,
                             truncate_top_k, truncate_top_p)
from clinsynth.preprocess import Vocabulary, build_vocabulary

distribution_strategy = st.lists(
    st.floats(min_value=1e-6, max_value=1.0), min_size=2, max_size=12
).map(lambda xs: np.array(xs) / sum(xs))


def uniform_model(extra_tokens=("a",), alpha=1.0, order=1):
    """Zero-count smoothed model: every conditional is uniform over |V|."""
    vocab = Vocabulary.from_tokens(extra_tokens)
    return NGramModel(order=order, vocabulary=vocab, alpha=alpha)


class TestTrain:
    def test_single_continuation_mle(self):
        model = train_ngram([["a", "b"]], order=2, alpha=0.0)
        vocab = model.vocabulary
        context = (vocab.encode("a"),)
        assert model.prob(context, vocab.encode("b")) == 1.0

    def test_smoothing_floor_uniform_on_unseen_context(self):
        model = train_ngram([["a", "b"]], order=2, alpha=0.5)
        vocab = model.vocabulary
        dist = model.conditional((vocab.unk_id,))
        assert np.allclose(dist, np.full(len(vocab), 1.0 / len(vocab)))

    def test_unigram_window_counts(self):
        # over the raw windows (no end padding) the counts are 3/5 vs 2/5
        model = train_ngram([["a", "b", "a", "b", "a"]], order=1, alpha=0.0,
                            include_end=False)
        vocab = model.vocabulary
        assert model.prob((), vocab.encode("a")) == pytest.approx(3 / 5)
        assert model.prob((), vocab.encode("b")) == pytest.approx(2 / 5)

    def test_default_padding_counts_end_event(self):
        model = train_ngram([["a", "b", "a", "b", "a"]], order=1, alpha=0.0)
        vocab = model.vocabulary
        assert model.prob((), vocab.eos_id) == pytest.approx(1 / 6)
        assert model.prob((), vocab.encode("a")) == pytest.approx(3 / 6)

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train_ngram([], order=1, alpha=0.1)

    def test_invalid_order_and_alpha(self):
        with pytest.raises(ValueError):
            train_ngram([["a"]], order=0, alpha=0.1)
        with pytest.raises(ValueError):
            train_ngram([["a"]], order=1, alpha=-0.1)

    def test_conditionals_are_normalized_distributions(self):
        rng = random.Random(8)
        for _ in range(20):
            corpus = [[rng.choice("abc") for _ in range(rng.randint(1, 8))]
                      for _ in range(rng.randint(1, 6))]
            model = train_ngram(corpus, order=rng.randint(1, 3),
                                alpha=rng.choice([0.0, 0.01, 1.0]))
            for context in model.counts:
                dist = model.conditional(context)
                assert abs(float(dist.sum()) - 1.0) <= 1e-9
                assert np.all(dist >= 0)


class TestPerplexity:
    def test_uniform_model_ppl_equals_vocab_size(self):
        model = uniform_model(extra_tokens=("a",))  # |V| = 4 with specials
        assert len(model.vocabulary) == 4
        ppl = score_perplexity(model, [["a", "a"], ["a"]])
        assert ppl == pytest.approx(4.0, abs=1e-12)

    def test_deterministic_model_ppl_one(self):
        # chain a -> b -> end, each continuation certain
        vocab = Vocabulary.from_tokens(("a", "b"))
        model = NGramModel(order=2, vocabulary=vocab, alpha=0.0)
        model.add_count((vocab.bos_id,), vocab.encode("a"))
        model.add_count((vocab.encode("a"),), vocab.encode("b"))
        model.add_count((vocab.encode("b"),), vocab.eos_id)
        assert score_perplexity(model, [["a", "b"]]) == pytest.approx(1.0, abs=1e-12)

    def test_mle_unigram_example(self):
        vocab = Vocabulary.from_tokens(("a", "b"))
        model = NGramModel(order=1, vocabulary=vocab, alpha=0.0)
        model.add_count((), vocab.encode("a"), 3.0)
        model.add_count((), vocab.encode("b"), 1.0)
        ppl = score_perplexity(model, [["a", "b"]], include_end=False)
        assert ppl == pytest.approx((3 / 16) ** -0.5, abs=1e-12)

    def test_zero_probability_names_the_event(self):
        model = train_ngram([["a", "b"]], order=1, alpha=0.0)
        with pytest.raises(ZeroProbabilityError, match="never-seen|unk"):
            score_perplexity(model, [["never-seen"]])

    def test_ordering_invariance(self):
        model = train_ngram([["a", "b"], ["b", "a", "a"]], order=2, alpha=0.1)
        sequences = [["a", "b"], ["b"], ["a", "a", "b"]]
        forward = score_perplexity(model, sequences)
        backward = score_perplexity(model, list(reversed(sequences)))
        assert forward == pytest.approx(backward, abs=1e-12)

    @pytest.mark.parametrize("include_end", [True, False])
    def test_mle_beats_smoothed_on_training_set(self, include_end):
        rng = random.Random(5)
        for _ in range(25):
            alphabet = ["a", "b", "c", "d"][: rng.randint(2, 4)]
            corpus = [[rng.choice(alphabet) for _ in range(rng.randint(1, 12))]
                      for _ in range(rng.randint(1, 10))]
            order = rng.randint(1, 3)
            vocab = build_vocabulary(corpus)
            mle = train_ngram(corpus, order, 0.0, vocab, include_end=include_end)
            smoothed = train_ngram(corpus, order, 0.5, vocab, include_end=include_end)
            ppl_mle = score_perplexity(mle, corpus, include_end=include_end)
            ppl_smoothed = score_perplexity(smoothed, corpus, include_end=include_end)
            assert ppl_mle <= ppl_smoothed + 1e-12


class TestTemperature:
    def test_identity_at_one(self):
        dist = np.array([0.2, 0.5, 0.3])
        assert np.max(np.abs(apply_temperature(dist, 1.0) - dist)) <= 1e-12

    def test_argmax_limit(self):
        out = apply_temperature(np.array([0.2, 0.7, 0.1]), 1e-9)
        assert out.tolist() == [0.0, 1.0, 0.0]

    def test_square_example(self):
        out = apply_temperature(np.array([2 / 3, 1 / 3]), 0.5)
        assert abs(out[0] - 0.8) <= 1e-12
        assert abs(out[1] - 0.2) <= 1e-12

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ValueError):
            apply_temperature(np.array([0.5, 0.5]), 0.0)
        with pytest.raises(ValueError):
            apply_temperature(np.array([0.5, 0.5]), -1.0)

    def test_tie_breaks_to_lowest_index(self):
        out = apply_temperature(np.array([0.4, 0.4, 0.2]), 1e-9)
        assert out.tolist() == [1.0, 0.0, 0.0]

    @given(dist=distribution_strategy, temperature=st.floats(0.05, 20.0))
    @settings(max_examples=150, deadline=None)
    def test_valid_distribution_and_argmax_preserved(self, dist, temperature):
        out = apply_temperature(dist, temperature)
        assert abs(out.sum() - 1.0) <= 1e-9
        assert np.all(out >= 0)
        # near-ties (sub-1e-9 gaps) can collapse to exact ties in double
        # precision; the argmax contract needs a decisive maximum
        top, runner_up = np.sort(dist)[-2:][::-1]
        assume(top - runner_up > 1e-9 * top)
        assert int(np.argmax(out)) == int(np.argmax(dist))


class TestTruncation:
    def test_k_at_least_vocab_is_identity(self):
        dist = np.array([0.5, 0.3, 0.2])
        assert truncate_top_k(dist, 3).tolist() == dist.tolist()
        assert truncate_top_k(dist, "all").tolist() == dist.tolist()

    def test_k_one_is_argmax(self):
        assert truncate_top_k(np.array([0.5, 0.3, 0.2]), 1).tolist() == [1.0, 0.0, 0.0]

    def test_k_two_renormalization(self):
        out = truncate_top_k(np.array([0.5, 0.3, 0.2]), 2)
        assert abs(out[0] - 0.625) <= 1e-12
        assert abs(out[1] - 0.375) <= 1e-12
        assert out[2] == 0.0

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            truncate_top_k(np.array([1.0]), 0)

    @given(dist=distribution_strategy, k=st.integers(1, 12))
    @settings(max_examples=150, deadline=None)
    def test_surviving_ratios_preserved(self, dist, k):
        out = truncate_top_k(dist, k)
        assert abs(out.sum() - 1.0) <= 1e-9
        survivors = np.flatnonzero(out)
        assert len(survivors) == min(k, len(dist))
        for i in survivors:
            for j in survivors:
                assert out[i] / out[j] == pytest.approx(dist[i] / dist[j], rel=1e-9)

    def test_top_p_keeps_smallest_prefix(self):
        out = truncate_top_p(np.array([0.5, 0.3, 0.2]), 0.5)
        assert out.tolist() == [1.0, 0.0, 0.0]
        out = truncate_top_p(np.array([0.5, 0.3, 0.2]), 0.6)
        assert abs(out[0] - 0.625) <= 1e-12 and out[2] == 0.0

    def test_top_p_one_keeps_mass(self):
        dist = np.array([0.5, 0.3, 0.2])
        assert np.allclose(truncate_top_p(dist, 1.0), dist)


class TestSamplerConfig:
    def test_both_truncations_rejected(self):
        with pytest.raises(ValueError):
            SamplerConfig(top_k=5, top_p=0.9)

    def test_top_p_alone_accepted(self):
        config = SamplerConfig(top_p=0.9)
        assert config.top_p == 0.9


class TestSampling:
    def test_deterministic_chain(self):
        vocab = Vocabulary.from_tokens(("a", "b"))
        model = NGramModel(order=2, vocabulary=vocab, alpha=0.0)
        model.add_count((vocab.bos_id,), vocab.encode("a"))
        model.add_count((vocab.encode("a"),), vocab.encode("b"))
        model.add_count((vocab.encode("b"),), vocab.eos_id)
        for seed in range(5):
            assert sample_sequence(model, SamplerConfig(seed=seed)) == ["a", "b"]

    def test_same_seed_identical(self):
        model = train_ngram([["a", "b", "c"], ["b", "c", "a"]], order=2, alpha=0.05)
        config = SamplerConfig(seed=42, max_length=20)
        assert sample_sequence(model, config) == sample_sequence(model, config)

    def test_max_length_respected(self):
        vocab = Vocabulary.from_tokens(("a",))
        model = NGramModel(order=1, vocabulary=vocab, alpha=0.0)
        model.add_count((), vocab.encode("a"))  # never emits the end token
        assert sample_sequence(model, SamplerConfig(max_length=7, seed=0)) == ["a"] * 7

    def test_unigram_frequencies(self):
        vocab = Vocabulary.from_tokens(("a", "b"))
        model = NGramModel(order=1, vocabulary=vocab, alpha=0.0)
        model.add_count((), vocab.encode("a"), 8.0)
        model.add_count((), vocab.encode("b"), 2.0)
        draws = Counter()
        for seed in range(4000):
            seq = sample_sequence(model, SamplerConfig(max_length=1, seed=seed))
            draws[seq[0]] += 1
        assert abs(draws["a"] / 4000 - 0.8) < 0.03


class TestSerialization:
    def test_roundtrip_equality_and_stability(self, tmp_path):
        model = train_ngram([["a", "b", "a"], ["b", "b"]], order=2, alpha=0.25)
        path = tmp_path / "model.json"
        save_ngram(model, path)
        loaded = load_ngram(path)
        assert loaded.order == model.order
        assert loaded.alpha == model.alpha
        assert loaded.vocabulary == model.vocabulary
        assert loaded.counts == model.counts
        again = tmp_path / "again.json"
        save_ngram(loaded, again)
        assert path.read_bytes() == again.read_bytes()

    def test_kind_checked(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"format": "clinsynth-model", "version": 1, "kind": "gan"}')
        with pytest.raises(ValueError, match="kind"):
            load_ngram(path)
