"""N-gram language models: training, perplexity, and temperature/truncation decoding."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import serialize
from .preprocess import TokenSequence, Vocabulary, build_vocabulary

Context = tuple[int, ...]


class ZeroProbabilityError(ValueError):
    """An unsmoothed model assigned probability zero to a scored event."""


@dataclass
class NGramModel:
    """Order-k conditional token distributions with additive smoothing.

    ``counts`` maps a context (tuple of order-1 token ids) to continuation
    counts. Conditional probabilities are (count + alpha) / (total + alpha*|V|),
    so any alpha > 0 model assigns positive mass to every token in every
    context.
    """

    order: int
    vocabulary: Vocabulary
    alpha: float
    counts: dict[Context, dict[int, float]] = field(default_factory=dict)
    context_totals: dict[Context, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not self.context_totals and self.counts:
            self.context_totals = {
                ctx: float(sum(c.values())) for ctx, c in self.counts.items()
            }

    def _events(self, tokens: Sequence[str], include_end: bool) -> list[tuple[Context, int]]:
        ids = [self.vocabulary.bos_id] * (self.order - 1)
        ids += self.vocabulary.encode_sequence(tokens)
        if include_end:
            ids.append(self.vocabulary.eos_id)
        k = self.order - 1
        return [(tuple(ids[i - k : i]), ids[i]) for i in range(k, len(ids))]

    def add_count(self, context: Context, token: int, weight: float = 1.0) -> None:
        slot = self.counts.setdefault(context, {})
        slot[token] = slot.get(token, 0.0) + weight
        self.context_totals[context] = self.context_totals.get(context, 0.0) + weight

    def prob(self, context: Context, token: int) -> float:
        total = self.context_totals.get(context, 0.0)
        count = self.counts.get(context, {}).get(token, 0.0)
        denom = total + self.alpha * len(self.vocabulary)
        if denom == 0.0:
            return 0.0
        return (count + self.alpha) / denom

    def conditional(self, context: Context) -> np.ndarray:
        """Full conditional distribution over the vocabulary for one context."""
        size = len(self.vocabulary)
        total = self.context_totals.get(context, 0.0)
        denom = total + self.alpha * size
        if denom == 0.0:
            raise ZeroProbabilityError(
                f"context {self._context_repr(context)} was never observed and alpha is 0"
            )
        dist = np.full(size, self.alpha, dtype=float)
        for token, count in self.counts.get(context, {}).items():
            dist[token] += count
        return dist / denom

    def sequence_log_prob(
        self, tokens: Sequence[str], include_end: bool = True
    ) -> tuple[float, int]:
        """Total log probability and event count for one sequence."""
        log_prob = 0.0
        events = self._events(tokens, include_end)
        for context, token in events:
            p = self.prob(context, token)
            if p <= 0.0:
                raise ZeroProbabilityError(
                    f"zero probability for token {self.vocabulary.decode(token)!r}"
                    f" after context {self._context_repr(context)}"
                )
            log_prob += math.log(p)
        return log_prob, len(events)

    def _context_repr(self, context: Context) -> str:
        return "(" + " ".join(self.vocabulary.decode(i) for i in context) + ")"


def train_ngram(
    sequences: Iterable[TokenSequence],
    order: int,
    alpha: float,
    vocabulary: Vocabulary | None = None,
    include_end: bool = True,
) -> NGramModel:
    """Count all order-length windows over start-padded sequences.

    Each sequence is padded with order-1 start tokens; when ``include_end``
    is set (the default) a terminating end token is counted as well, which
    gives sampled sequences a learned stopping event.
    """
    sequences = [list(s) for s in sequences]
    if not sequences:
        raise ValueError("empty training set")
    if vocabulary is None:
        vocabulary = build_vocabulary(sequences)
    model = NGramModel(order=order, vocabulary=vocabulary, alpha=alpha)
    for seq in sequences:
        for context, token in model._events(seq, include_end):
            model.add_count(context, token)
    return model


def score_perplexity(
    model: NGramModel, sequences: Iterable[TokenSequence], include_end: bool = True
) -> float:
    """exp of the mean negative log probability per scored token event."""
    total_log_prob = 0.0
    total_events = 0
    for seq in sequences:
        log_prob, n_events = model.sequence_log_prob(seq, include_end)
        total_log_prob += log_prob
        total_events += n_events
    if total_events == 0:
        raise ValueError("no events to score")
    return math.exp(-total_log_prob / total_events)


def _check_distribution(dist: np.ndarray) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 1 or dist.size == 0:
        raise ValueError("distribution must be a nonempty vector")
    if np.any(dist < 0):
        raise ValueError("distribution entries must be nonnegative")
    if abs(float(dist.sum()) - 1.0) > 1e-9:
        raise ValueError(f"distribution must sum to 1, got {dist.sum()}")
    return dist


GREEDY_TEMPERATURE = 1e-6


def apply_temperature(distribution: Sequence[float], temperature: float) -> np.ndarray:
    """Rescale a distribution to p_i^(1/T), renormalized.

    Temperatures below 1e-6 collapse to the argmax (lowest index on ties).
    """
    dist = _check_distribution(np.asarray(distribution, dtype=float))
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if temperature < GREEDY_TEMPERATURE:
        out = np.zeros_like(dist)
        out[int(np.argmax(dist))] = 1.0
        return out
    with np.errstate(divide="ignore"):
        log_p = np.where(dist > 0, np.log(np.where(dist > 0, dist, 1.0)), -np.inf)
    scaled = log_p / temperature
    scaled -= scaled.max()
    out = np.exp(scaled)
    out[dist == 0] = 0.0
    return out / out.sum()


def truncate_top_k(distribution: Sequence[float], k: int | str) -> np.ndarray:
    """Keep the k most probable entries (lower index wins ties), renormalize."""
    dist = _check_distribution(np.asarray(distribution, dtype=float))
    if k == "all" or (isinstance(k, int) and k >= dist.size):
        return dist.copy()
    if not isinstance(k, int) or k < 1:
        raise ValueError("k must be a positive integer or 'all'")
    order = np.argsort(-dist, kind="stable")
    keep = order[:k]
    out = np.zeros_like(dist)
    out[keep] = dist[keep]
    return out / out.sum()


def truncate_top_p(distribution: Sequence[float], p: float) -> np.ndarray:
    """Keep the smallest high-probability prefix with cumulative mass >= p."""
    dist = _check_distribution(np.asarray(distribution, dtype=float))
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    order = np.argsort(-dist, kind="stable")
    cumulative = np.cumsum(dist[order])
    cutoff = int(np.searchsorted(cumulative, p - 1e-12)) + 1
    keep = order[:cutoff]
    out = np.zeros_like(dist)
    out[keep] = dist[keep]
    return out / out.sum()


@dataclass(frozen=True)
class SamplerConfig:
    """Decoding settings: temperature scaling plus top-k or top-p truncation."""

    temperature: float = 1.0
    top_k: int | str = "all"
    top_p: float | None = None
    max_length: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.top_k != "all" and (not isinstance(self.top_k, int) or self.top_k < 1):
            raise ValueError("top_k must be a positive integer or 'all'")
        if self.top_p is not None and not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.top_p is not None and self.top_k != "all":
            raise ValueError("choose either top_k or top_p truncation, not both")
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")


def _decode_step(dist: np.ndarray, config: SamplerConfig) -> np.ndarray:
    dist = apply_temperature(dist, config.temperature)
    if config.top_p is not None:
        return truncate_top_p(dist, config.top_p)
    return truncate_top_k(dist, config.top_k)


def _draw(dist: np.ndarray, rng: random.Random) -> int:
    r = rng.random()
    acc = 0.0
    for i, p in enumerate(dist):
        acc += p
        if r < acc:
            return i
    return int(np.flatnonzero(dist)[-1])


def sample_sequence(model: NGramModel, config: SamplerConfig) -> TokenSequence:
    """Autoregressive sampling with the shared decoding stack.

    Stops at the end token or at max_length; identical (model, config) pairs
    produce identical sequences.
    """
    rng = random.Random(config.seed)
    return _sample_with_rng(model, config, rng)


def _sample_with_rng(model: NGramModel, config: SamplerConfig, rng: random.Random) -> TokenSequence:
    vocab = model.vocabulary
    context = (vocab.bos_id,) * (model.order - 1)
    tokens: TokenSequence = []
    for _ in range(config.max_length):
        dist = _decode_step(model.conditional(context), config)
        token_id = _draw(dist, rng)
        if token_id == vocab.eos_id:
            break
        tokens.append(vocab.decode(token_id))
        if model.order > 1:
            context = context[1:] + (token_id,)
    return tokens


def save_ngram(model: NGramModel, path: str | Path) -> None:
    vocab = model.vocabulary
    counts = {
        serialize.join_context(tuple(vocab.decode(i) for i in ctx)): {
            vocab.decode(t): c for t, c in slot.items()
        }
        for ctx, slot in model.counts.items()
    }
    serialize.dump_model(
        "ngram",
        {
            "order": model.order,
            "alpha": model.alpha,
            "vocab": list(vocab.tokens),
            "counts": counts,
        },
        path,
    )


def load_ngram(path: str | Path) -> NGramModel:
    doc = serialize.load_model(path, kind="ngram")
    vocab = Vocabulary(tokens=tuple(doc["vocab"]))
    model = NGramModel(order=doc["order"], vocabulary=vocab, alpha=doc["alpha"])
    for ctx_key, slot in doc["counts"].items():
        context = tuple(vocab.encode(t) for t in serialize.split_context(ctx_key))
        for token, count in slot.items():
            model.add_count(context, vocab.encode(token), float(count))
    return model
