"""Text-overlap metrics: BLEU with brevity penalty, token-level WER, noise channel."""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .preprocess import SPECIALS, TokenSequence, Vocabulary


@dataclass(frozen=True)
class BleuReport:
    """BLEU score together with every intermediate the score is built from."""

    bleu: float
    brevity_penalty: float
    precisions: tuple[float, ...]
    weights: tuple[float, ...]
    candidate_length: int
    reference_length: int
    max_order: int
    clipped_counts: tuple[int, ...]
    total_counts: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "brevity_penalty": self.brevity_penalty,
            "precisions": list(self.precisions),
            "weights": list(self.weights),
            "candidate_length": self.candidate_length,
            "reference_length": self.reference_length,
            "max_order": self.max_order,
            "clipped_counts": list(self.clipped_counts),
            "total_counts": list(self.total_counts),
        }


@dataclass(frozen=True)
class WerReport:
    wer: float
    substitutions: int
    deletions: int
    insertions: int
    reference_length: int
    alignment: tuple[tuple[str, str | None, str | None], ...]

    @property
    def edits(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def as_dict(self) -> dict:
        return {
            "wer": self.wer,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "reference_length": self.reference_length,
        }


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_reference_length(candidate_length: int, reference_lengths: Sequence[int]) -> int:
    # Closest to the candidate; the shorter reference wins ties.
    return min(reference_lengths, key=lambda r: (abs(r - candidate_length), r))


def _clip_stats(
    candidate: Sequence[str], references: Sequence[Sequence[str]], max_order: int
) -> tuple[list[int], list[int]]:
    clipped, totals = [], []
    for n in range(1, max_order + 1):
        cand_counts = _ngram_counts(candidate, n)
        ref_counts: Counter = Counter()
        for ref in references:
            for ngram, count in _ngram_counts(ref, n).items():
                ref_counts[ngram] = max(ref_counts[ngram], count)
        clipped.append(sum(min(c, ref_counts[g]) for g, c in cand_counts.items()))
        totals.append(sum(cand_counts.values()))
    return clipped, totals


def _combine(
    clipped: Sequence[int],
    totals: Sequence[int],
    candidate_length: int,
    reference_length: int,
    weights: tuple[float, ...],
    smooth: bool,
) -> BleuReport:
    max_order = len(weights)
    precisions = []
    for n in range(max_order):
        num, den = clipped[n], totals[n]
        if smooth and n >= 1:
            num, den = num + 1, den + 1
        precisions.append(num / den if den > 0 else 0.0)
    brevity_penalty = min(1.0, math.exp(1.0 - reference_length / candidate_length))
    if all(p > 0 for p in precisions):
        bleu_score = brevity_penalty * math.exp(
            sum(w * math.log(p) for w, p in zip(weights, precisions))
        )
    else:
        bleu_score = 0.0
    return BleuReport(
        bleu=bleu_score,
        brevity_penalty=brevity_penalty,
        precisions=tuple(precisions),
        weights=weights,
        candidate_length=candidate_length,
        reference_length=reference_length,
        max_order=max_order,
        clipped_counts=tuple(clipped),
        total_counts=tuple(totals),
    )


def _check_weights(max_order: int, weights: Sequence[float] | None) -> tuple[float, ...]:
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    if weights is None:
        return (1.0 / max_order,) * max_order
    weights = tuple(float(w) for w in weights)
    if len(weights) != max_order:
        raise ValueError("need one weight per n-gram order")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    return weights


def bleu(
    candidate: TokenSequence,
    references: Sequence[TokenSequence],
    max_order: int = 4,
    weights: Sequence[float] | None = None,
    smooth: bool = False,
) -> BleuReport:
    """BLEU = BP * exp(sum_n w_n log p_n) over modified n-gram precisions.

    p_n clips each candidate n-gram count at its maximum count in any single
    reference; BP = min(1, exp(1 - r/c)) with r the reference length closest
    to the candidate's. Any p_n of zero makes the score zero unless
    ``smooth`` adds one to numerator and denominator for orders >= 2.
    """
    weights = _check_weights(max_order, weights)
    if not candidate:
        raise ValueError("candidate must be nonempty")
    if not references or any(not r for r in references):
        raise ValueError("references must be nonempty")
    clipped, totals = _clip_stats(candidate, references, max_order)
    reference_length = _closest_reference_length(len(candidate), [len(r) for r in references])
    return _combine(clipped, totals, len(candidate), reference_length, weights, smooth)


@dataclass(frozen=True)
class CorpusBleuReport:
    micro: BleuReport
    macro_bleu: float
    pair_count: int

    def as_dict(self) -> dict:
        return {"micro": self.micro.as_dict(), "macro_bleu": self.macro_bleu,
                "pair_count": self.pair_count}


def corpus_bleu(
    pairs: Iterable[tuple[TokenSequence, Sequence[TokenSequence]]],
    max_order: int = 4,
    weights: Sequence[float] | None = None,
    smooth: bool = False,
) -> CorpusBleuReport:
    """Micro-averaged BLEU: pool clipped/total counts and lengths across pairs.

    The per-pair macro average is reported alongside as ``macro_bleu``.
    """
    weights = _check_weights(max_order, weights)
    agg_clipped = [0] * max_order
    agg_totals = [0] * max_order
    candidate_length = 0
    reference_length = 0
    pair_scores = []
    for candidate, references in pairs:
        report = bleu(candidate, references, max_order, weights, smooth)
        pair_scores.append(report.bleu)
        for n in range(max_order):
            agg_clipped[n] += report.clipped_counts[n]
            agg_totals[n] += report.total_counts[n]
        candidate_length += report.candidate_length
        reference_length += report.reference_length
    if not pair_scores:
        raise ValueError("no candidate/reference pairs to score")
    micro = _combine(agg_clipped, agg_totals, candidate_length, reference_length, weights, smooth)
    return CorpusBleuReport(
        micro=micro,
        macro_bleu=sum(pair_scores) / len(pair_scores),
        pair_count=len(pair_scores),
    )


def _edit_distance_matrix(ref_ids: "np.ndarray", hyp_ids: "np.ndarray") -> "np.ndarray":
    # Vectorized row fill. The in-row dependency row[j] = min(t[j], row[j-1]+1)
    # unrolls to a running minimum of t[k]-k, so each row is two vector ops.
    m, n = len(ref_ids), len(hyp_ids)
    dtype = np.uint16 if max(m, n) < 60000 else np.uint32
    dp = np.empty((m + 1, n + 1), dtype=dtype)
    dp[0] = np.arange(n + 1, dtype=dtype)
    positions = np.arange(n + 1, dtype=np.int64)
    base = np.empty(n + 1, dtype=np.int64)
    for i in range(1, m + 1):
        prev = dp[i - 1].astype(np.int64)
        cost = hyp_ids != ref_ids[i - 1]
        base[0] = i
        np.minimum(prev[:-1] + cost, prev[1:] + 1, out=base[1:])
        base[1:] -= positions[1:]
        dp[i] = np.minimum.accumulate(base) + positions
    return dp


def wer(reference: TokenSequence, hypothesis: TokenSequence) -> WerReport:
    """Word error rate from a minimal unit-cost edit alignment.

    Ties are broken preferring substitution over deletion over insertion, so
    the alignment is deterministic. WER = (S + D + I) / len(reference) and
    can exceed 1 when the hypothesis inserts enough extra tokens.
    """
    if not reference:
        raise ValueError("reference must be nonempty (WER denominator)")
    m, n = len(reference), len(hypothesis)
    ids = {token: i for i, token in enumerate(dict.fromkeys(list(reference) + list(hypothesis)))}
    ref_ids = np.array([ids[t] for t in reference], dtype=np.int64)
    hyp_ids = np.array([ids[t] for t in hypothesis], dtype=np.int64)
    dp = _edit_distance_matrix(ref_ids, hyp_ids)

    alignment: list[tuple[str, str | None, str | None]] = []
    i, j = m, n
    while i > 0 or j > 0:
        here = int(dp[i, j])
        if i > 0 and j > 0:
            cost = 0 if reference[i - 1] == hypothesis[j - 1] else 1
            if here == int(dp[i - 1, j - 1]) + cost:
                op = "match" if cost == 0 else "substitute"
                alignment.append((op, reference[i - 1], hypothesis[j - 1]))
                i, j = i - 1, j - 1
                continue
        if i > 0 and here == int(dp[i - 1, j]) + 1:
            alignment.append(("delete", reference[i - 1], None))
            i -= 1
            continue
        alignment.append(("insert", None, hypothesis[j - 1]))
        j -= 1
    alignment.reverse()

    substitutions = sum(1 for op, _, _ in alignment if op == "substitute")
    deletions = sum(1 for op, _, _ in alignment if op == "delete")
    insertions = sum(1 for op, _, _ in alignment if op == "insert")
    return WerReport(
        wer=(substitutions + deletions + insertions) / m,
        substitutions=substitutions,
        deletions=deletions,
        insertions=insertions,
        reference_length=m,
        alignment=tuple(alignment),
    )


def replay_alignment(report: WerReport) -> TokenSequence:
    """Reconstruct the hypothesis from the reference via the alignment ops."""
    out: TokenSequence = []
    for op, ref_token, hyp_token in report.alignment:
        if op == "match":
            out.append(ref_token)
        elif op in ("substitute", "insert"):
            out.append(hyp_token)
        # deletions emit nothing
    return out


@dataclass(frozen=True)
class CorruptionRates:
    substitution: float = 0.0
    deletion: float = 0.0
    insertion: float = 0.0

    def __post_init__(self):
        for name, rate in (("substitution", self.substitution),
                           ("deletion", self.deletion),
                           ("insertion", self.insertion)):
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} rate must be in [0, 1)")
        if self.substitution + self.deletion >= 1.0:
            raise ValueError("substitution + deletion rates must be < 1")

    @property
    def total(self) -> float:
        return self.substitution + self.deletion + self.insertion


def _noise_tokens(noise_vocab: Vocabulary | Sequence[str]) -> list[str]:
    if isinstance(noise_vocab, Vocabulary):
        return list(noise_vocab.regular_tokens)
    return [t for t in noise_vocab if t not in SPECIALS]


def corrupt_transcript(
    reference: TokenSequence,
    rates: CorruptionRates,
    noise_vocab: Vocabulary | Sequence[str],
    seed: int = 0,
) -> TokenSequence:
    """Simulate a noisy transcription channel over the reference tokens.

    Per token: one draw decides substitution (with a random vocabulary token
    different from the original) or deletion; an independent draw inserts a
    random token after it. Expected WER against the reference is close to
    substitution + deletion + insertion.
    """
    pool = _noise_tokens(noise_vocab)
    if not pool:
        raise ValueError("noise vocabulary has no usable tokens")
    rng = random.Random(seed)
    out: TokenSequence = []
    for token in reference:
        u = rng.random()
        if u < rates.substitution:
            replacement = rng.choice(pool)
            if len(pool) > 1:
                while replacement == token:
                    replacement = rng.choice(pool)
            out.append(replacement)
        elif u < rates.substitution + rates.deletion:
            pass
        else:
            out.append(token)
        if rng.random() < rates.insertion:
            out.append(rng.choice(pool))
    return out
