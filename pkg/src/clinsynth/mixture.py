"""Latent-mixture document model trained by EM with a logged lower bound.

The mixture components are additively smoothed n-gram models. The smoothing
pseudo-counts are treated as part of the complete data, so the logged lower
bound (expected complete-data log-likelihood plus responsibility entropy)
is mathematically guaranteed to be non-decreasing across iterations; the
plain data log-likelihood is reported alongside it.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import serialize
from .ngram import NGramModel, SamplerConfig, _sample_with_rng
from .preprocess import TokenSequence, Vocabulary, build_vocabulary


def _log(x: float) -> float:
    return math.log(x) if x > 0.0 else float("-inf")


def _logsumexp(values: np.ndarray) -> float:
    m = float(np.max(values))
    if m == float("-inf"):
        return m
    return m + math.log(float(np.exp(values - m).sum()))


@dataclass
class MixtureModel:
    weights: np.ndarray
    components: list[NGramModel]
    vocabulary: Vocabulary
    lower_bound_curve: list[float] = field(default_factory=list)
    log_likelihood_curve: list[float] = field(default_factory=list)
    responsibilities: np.ndarray | None = None

    def __post_init__(self):
        if len(self.components) != len(self.weights):
            raise ValueError("need one weight per component")
        if np.any(self.weights < 0) or abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")

    @property
    def k(self) -> int:
        return len(self.components)


def _document_events(
    documents: Sequence[TokenSequence], model: NGramModel
) -> list[list[tuple[tuple[int, ...], int]]]:
    return [model._events(doc, include_end=True) for doc in documents]


def _events_log_prob(model: NGramModel, events) -> float:
    total = 0.0
    for context, token in events:
        total += math.log(model.prob(context, token))
    return total


def _m_step(
    resp: np.ndarray,
    doc_events,
    order: int,
    alpha: float,
    vocabulary: Vocabulary,
) -> tuple[np.ndarray, list[NGramModel]]:
    n_docs, k = resp.shape
    weights = resp.sum(axis=0) / n_docs
    components = []
    for j in range(k):
        component = NGramModel(order=order, vocabulary=vocabulary, alpha=alpha)
        for d, events in enumerate(doc_events):
            weight = float(resp[d, j])
            if weight == 0.0:
                continue
            for context, token in events:
                component.add_count(context, token, weight)
        components.append(component)
    return weights, components


def _loglik_matrix(components: list[NGramModel], doc_events) -> np.ndarray:
    matrix = np.empty((len(doc_events), len(components)))
    for j, component in enumerate(components):
        for d, events in enumerate(doc_events):
            matrix[d, j] = _events_log_prob(component, events)
    return matrix


def pseudo_count_term(model: MixtureModel) -> float:
    """Log-probability mass the smoothing pseudo-observations contribute.

    alpha * sum over components, observed contexts, and vocabulary tokens of
    log p_k(token | context). Together with the data log-likelihood this is
    the quantity EM provably never decreases.
    """
    total = 0.0
    size = len(model.vocabulary)
    for component in model.components:
        alpha = component.alpha
        for context, slot in component.counts.items():
            denom = component.context_totals[context] + alpha * size
            observed = sum(math.log(c + alpha) for c in slot.values())
            total += alpha * (
                observed + (size - len(slot)) * _log(alpha) - size * math.log(denom)
            )
    return total


def fit_em(
    documents: Sequence[TokenSequence],
    k: int,
    alpha: float = 0.01,
    iterations: int = 50,
    seed: int = 0,
    order: int = 1,
    vocabulary: Vocabulary | None = None,
) -> MixtureModel:
    """Fit a K-component mixture of smoothed n-gram models by EM.

    Initialization draws random per-document responsibilities (seeded) and
    applies an M-step, so zero iterations return that initialization with
    empty curves. Each iteration runs E then M and appends the lower bound
    and the data log-likelihood to the training curves.
    """
    documents = [list(d) for d in documents]
    if not documents:
        raise ValueError("documents must be nonempty")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(documents):
        raise ValueError(f"k={k} exceeds the document count {len(documents)}")
    if alpha <= 0:
        raise ValueError("alpha must be > 0 for mixture components")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if vocabulary is None:
        vocabulary = build_vocabulary(documents)

    probe = NGramModel(order=order, vocabulary=vocabulary, alpha=alpha)
    doc_events = _document_events(documents, probe)

    rng = np.random.default_rng(seed)
    resp = rng.dirichlet(np.ones(k), size=len(documents))
    weights, components = _m_step(resp, doc_events, order, alpha, vocabulary)

    lower_bound_curve: list[float] = []
    log_likelihood_curve: list[float] = []
    loglik = _loglik_matrix(components, doc_events)
    log_weights = np.array([_log(float(w)) for w in weights])

    for _ in range(iterations):
        # E-step at the current parameters
        scores = loglik + log_weights
        shifted = scores - scores.max(axis=1, keepdims=True)
        resp = np.exp(shifted)
        resp /= resp.sum(axis=1, keepdims=True)
        # M-step
        weights, components = _m_step(resp, doc_events, order, alpha, vocabulary)
        log_weights = np.array([_log(float(w)) for w in weights])
        loglik = _loglik_matrix(components, doc_events)
        # lower bound: expected complete-data log-likelihood (pseudo-counts
        # included) plus responsibility entropy, at the new parameters
        scores = loglik + log_weights
        expected_complete = float((resp * np.where(resp > 0, scores, 0.0)).sum())
        entropy = -float((resp * np.where(resp > 0, np.log(np.where(resp > 0, resp, 1.0)), 0.0)).sum())
        model_snapshot = MixtureModel(
            weights=np.asarray(weights, dtype=float),
            components=components,
            vocabulary=vocabulary,
        )
        bound = expected_complete + entropy + pseudo_count_term(model_snapshot)
        lower_bound_curve.append(bound)
        log_likelihood_curve.append(
            float(sum(_logsumexp(scores[d]) for d in range(len(documents))))
        )

    return MixtureModel(
        weights=np.asarray(weights, dtype=float),
        components=components,
        vocabulary=vocabulary,
        lower_bound_curve=lower_bound_curve,
        log_likelihood_curve=log_likelihood_curve,
        responsibilities=resp,
    )


def mixture_log_likelihood(model: MixtureModel, documents: Sequence[TokenSequence]) -> float:
    """Total log-likelihood: sum over documents of log sum_k w_k p_k(doc)."""
    for component in model.components:
        if component.alpha <= 0:
            raise ValueError("mixture components must have alpha > 0")
    doc_events = _document_events([list(d) for d in documents], model.components[0])
    log_weights = np.array([_log(float(w)) for w in model.weights])
    total = 0.0
    for events in doc_events:
        scores = np.array(
            [_events_log_prob(c, events) for c in model.components]
        ) + log_weights
        total += _logsumexp(scores)
    return total


def penalized_log_likelihood(model: MixtureModel, documents: Sequence[TokenSequence]) -> float:
    """Data log-likelihood plus the pseudo-count term; non-decreasing under EM."""
    return mixture_log_likelihood(model, documents) + pseudo_count_term(model)


def sample_mixture(model: MixtureModel, config: SamplerConfig) -> TokenSequence:
    """Draw a component by weight, then sample from it with the decoding stack."""
    rng = random.Random(config.seed)
    r = rng.random()
    acc = 0.0
    chosen = model.k - 1
    for j, w in enumerate(model.weights):
        acc += float(w)
        if r < acc:
            chosen = j
            break
    return _sample_with_rng(model.components[chosen], config, rng)


def export_curves(model: MixtureModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,lower_bound,log_likelihood\n")
        rows = zip(model.lower_bound_curve, model.log_likelihood_curve)
        for iteration, (bound, loglik) in enumerate(rows):
            fh.write(f"{iteration},{bound!r},{loglik!r}\n")


def save_mixture(model: MixtureModel, path: str | Path) -> None:
    vocab = model.vocabulary
    components = []
    for component in model.components:
        components.append({
            serialize.join_context(tuple(vocab.decode(i) for i in ctx)): {
                vocab.decode(t): c for t, c in slot.items()
            }
            for ctx, slot in component.counts.items()
        })
    serialize.dump_model(
        "mixture",
        {
            "weights": [float(w) for w in model.weights],
            "order": model.components[0].order if model.components else 1,
            "alpha": model.components[0].alpha if model.components else 0.01,
            "vocab": list(vocab.tokens),
            "components": components,
            "curves": {
                "lower_bound": model.lower_bound_curve,
                "log_likelihood": model.log_likelihood_curve,
            },
        },
        path,
    )


def load_mixture(path: str | Path) -> MixtureModel:
    doc = serialize.load_model(path, kind="mixture")
    vocab = Vocabulary(tokens=tuple(doc["vocab"]))
    components = []
    for counts in doc["components"]:
        component = NGramModel(order=doc["order"], vocabulary=vocab, alpha=doc["alpha"])
        for ctx_key, slot in counts.items():
            context = tuple(vocab.encode(t) for t in serialize.split_context(ctx_key))
            for token, count in slot.items():
                component.add_count(context, vocab.encode(token), float(count))
        components.append(component)
    return MixtureModel(
        weights=np.asarray(doc["weights"], dtype=float),
        components=components,
        vocabulary=vocab,
        lower_bound_curve=list(doc["curves"]["lower_bound"]),
        log_likelihood_curve=list(doc["curves"]["log_likelihood"]),
    )
