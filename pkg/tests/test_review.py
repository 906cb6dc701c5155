from __future__ import annotations

import random

import pytest

from clinsynth.review import (CRITERIA, ReviewRecord, ReviewStore, cohen_kappa,
                              summarize_reviews)


def make_record(note_id="n1", reviewer_id="r1", coherence=4, clinical_relevance=3,
                format_adherence=5, **kwargs):
    return ReviewRecord(note_id=note_id, reviewer_id=reviewer_id, coherence=coherence,
                        clinical_relevance=clinical_relevance,
                        format_adherence=format_adherence, **kwargs)


class TestStore:
    def test_record_and_reload(self, tmp_path):
        path = tmp_path / "reviews.jsonl"
        store = ReviewStore(note_ids=["n1", "n2"], path=path)
        store.record_review(make_record("n1", "alice"))
        store.record_review(make_record("n2", "alice", coherence=2))
        reloaded = ReviewStore.load(path, note_ids=["n1", "n2"])
        assert reloaded.records == store.records

    def test_out_of_range_score_rejected(self):
        with pytest.raises(ValueError, match="coherence"):
            make_record(coherence=6)
        with pytest.raises(ValueError):
            make_record(format_adherence=0)
        with pytest.raises(ValueError):
            ReviewRecord(note_id="n", reviewer_id="r", coherence=4.5,  # type: ignore
                         clinical_relevance=3, format_adherence=3)

    def test_duplicate_pair_rejected(self):
        store = ReviewStore(note_ids=["n1"])
        store.record_review(make_record("n1", "alice"))
        with pytest.raises(ValueError, match="duplicate"):
            store.record_review(make_record("n1", "alice", coherence=1))

    def test_unknown_note_rejected(self):
        store = ReviewStore(note_ids=["n1"])
        with pytest.raises(ValueError, match="unknown note"):
            store.record_review(make_record("n999", "alice"))

    def test_same_note_different_reviewers_allowed(self):
        store = ReviewStore(note_ids=["n1"])
        store.record_review(make_record("n1", "alice"))
        store.record_review(make_record("n1", "bob"))
        assert len(store.records) == 2


class TestKappa:
    def test_perfect_agreement_is_one(self):
        assert cohen_kappa([3, 3, 3], [3, 3, 3]) == 1.0
        assert cohen_kappa([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]) == 1.0

    def test_self_agreement_is_one(self):
        labels = [random.Random(0).randint(1, 5) for _ in range(50)]
        assert cohen_kappa(labels, labels) == 1.0

    def test_symmetry(self):
        rng = random.Random(1)
        a = [rng.randint(1, 5) for _ in range(200)]
        b = [rng.randint(1, 5) for _ in range(200)]
        assert cohen_kappa(a, b) == pytest.approx(cohen_kappa(b, a), abs=1e-12)

    def test_independent_uniform_raters_near_zero(self):
        rng = random.Random(2)
        a = [rng.randint(1, 5) for _ in range(1000)]
        b = [rng.randint(1, 5) for _ in range(1000)]
        assert -0.1 <= cohen_kappa(a, b) <= 0.1

    def test_constant_disagreement(self):
        # both constant but different: observed 0, expected 0 -> kappa 0
        assert cohen_kappa([2, 2], [5, 5]) == 0.0

    def test_in_range(self):
        rng = random.Random(3)
        for _ in range(50):
            n = rng.randint(1, 30)
            a = [rng.randint(1, 5) for _ in range(n)]
            b = [rng.randint(1, 5) for _ in range(n)]
            assert -1.0 <= cohen_kappa(a, b) <= 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            cohen_kappa([], [])
        with pytest.raises(ValueError):
            cohen_kappa([1], [1, 2])


class TestSummary:
    def test_single_record_mean_and_zero_stddev(self):
        summary = summarize_reviews([make_record(coherence=4)])
        assert summary.criterion_means["coherence"] == 4
        assert summary.criterion_stddevs["coherence"] == 0.0
        assert summary.reviewer_counts == {"r1": 1}

    def test_identical_raters_kappa_one_per_criterion(self):
        records = []
        rng = random.Random(5)
        for i in range(20):
            scores = {c: rng.randint(1, 5) for c in CRITERIA}
            records.append(make_record(f"n{i}", "alice", **scores))
            records.append(make_record(f"n{i}", "bob", **scores))
        summary = summarize_reviews(records)
        assert summary.pairwise_kappa[("alice", "bob")] == {c: 1.0 for c in CRITERIA}
        assert summary.shared_note_counts[("alice", "bob")] == 20

    def test_uniform_random_raters_kappa_near_zero(self):
        rng = random.Random(6)
        records = []
        for i in range(1000):
            records.append(make_record(f"n{i}", "alice",
                                       **{c: rng.randint(1, 5) for c in CRITERIA}))
            records.append(make_record(f"n{i}", "bob",
                                       **{c: rng.randint(1, 5) for c in CRITERIA}))
        summary = summarize_reviews(records)
        for value in summary.pairwise_kappa[("alice", "bob")].values():
            assert -0.1 <= value <= 0.1

    def test_order_invariance_of_means(self):
        rng = random.Random(7)
        records = [make_record(f"n{i}", "alice",
                               **{c: rng.randint(1, 5) for c in CRITERIA})
                   for i in range(30)]
        forward = summarize_reviews(records)
        backward = summarize_reviews(list(reversed(records)))
        assert forward.criterion_means == backward.criterion_means
        for criterion in CRITERIA:
            assert forward.criterion_stddevs[criterion] == pytest.approx(
                backward.criterion_stddevs[criterion], abs=1e-12)

    def test_pairs_without_shared_notes_omitted(self):
        records = [make_record("n1", "alice"), make_record("n2", "bob")]
        summary = summarize_reviews(records)
        assert summary.pairwise_kappa == {}

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            summarize_reviews([])

    def test_as_dict_is_json_friendly(self):
        import json
        records = [make_record("n1", "alice"), make_record("n1", "bob")]
        payload = summarize_reviews(records).as_dict()
        assert json.dumps(payload)
        assert "alice|bob" in payload["pairwise_kappa"]
