"""Expert review records: storage, summaries, and inter-rater agreement."""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

CRITERIA = ("coherence", "clinical_relevance", "format_adherence")
SCORE_RANGE = (1, 5)


@dataclass(frozen=True)
class ReviewRecord:
    note_id: str
    reviewer_id: str
    coherence: int
    clinical_relevance: int
    format_adherence: int
    comments: str = ""
    timestamp: str = ""

    def __post_init__(self):
        if not self.note_id or not self.reviewer_id:
            raise ValueError("note_id and reviewer_id must be nonempty")
        for criterion in CRITERIA:
            score = getattr(self, criterion)
            if not isinstance(score, int) or not SCORE_RANGE[0] <= score <= SCORE_RANGE[1]:
                raise ValueError(
                    f"{criterion} score must be an integer in "
                    f"[{SCORE_RANGE[0]}, {SCORE_RANGE[1]}], got {score!r}"
                )

    def as_dict(self) -> dict:
        return {
            "note_id": self.note_id,
            "reviewer_id": self.reviewer_id,
            "coherence": self.coherence,
            "clinical_relevance": self.clinical_relevance,
            "format_adherence": self.format_adherence,
            "comments": self.comments,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "ReviewRecord":
        return cls(**{k: record[k] for k in (
            "note_id", "reviewer_id", "coherence", "clinical_relevance",
            "format_adherence")},
            comments=record.get("comments", ""), timestamp=record.get("timestamp", ""))


class ReviewStore:
    """Append-only batch of reviews for a known set of notes.

    When constructed with a path, accepted records are appended to the file
    immediately (one JSON object per line), so a crash never loses an
    acknowledged review.
    """

    def __init__(self, note_ids: Iterable[str], path: str | Path | None = None):
        self.note_ids = set(note_ids)
        self.path = Path(path) if path else None
        self.records: list[ReviewRecord] = []
        self._pairs: set[tuple[str, str]] = set()

    def record_review(self, record: ReviewRecord) -> ReviewRecord:
        if record.note_id not in self.note_ids:
            raise ValueError(f"unknown note id {record.note_id!r}")
        pair = (record.note_id, record.reviewer_id)
        if pair in self._pairs:
            raise ValueError(
                f"duplicate review: reviewer {record.reviewer_id!r} already "
                f"scored note {record.note_id!r}"
            )
        self.records.append(record)
        self._pairs.add(pair)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.as_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        return record

    @classmethod
    def load(cls, path: str | Path, note_ids: Iterable[str]) -> "ReviewStore":
        store = cls(note_ids=note_ids)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    store.record_review(ReviewRecord.from_dict(json.loads(line)))
        store.path = Path(path)
        return store


def cohen_kappa(labels_a: Sequence[int], labels_b: Sequence[int]) -> float:
    """Chance-corrected agreement between two raters over paired labels.

    kappa = (p_o - p_e) / (1 - p_e). Perfect agreement returns 1 even when
    expected agreement is also 1 (two constant, identical raters).
    """
    if len(labels_a) != len(labels_b) or not labels_a:
        raise ValueError("need two equal-length, nonempty label sequences")
    n = len(labels_a)
    observed = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    if observed == 1.0:
        return 1.0
    counts_a = Counter(labels_a)
    counts_b = Counter(labels_b)
    expected = sum(counts_a[c] * counts_b.get(c, 0) for c in counts_a) / (n * n)
    if expected == 1.0:
        return 0.0
    return (observed - expected) / (1.0 - expected)


@dataclass(frozen=True)
class ReviewSummary:
    record_count: int
    criterion_means: dict[str, float]
    criterion_stddevs: dict[str, float]
    reviewer_counts: dict[str, int]
    pairwise_kappa: dict[tuple[str, str], dict[str, float]]
    shared_note_counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "record_count": self.record_count,
            "criterion_means": self.criterion_means,
            "criterion_stddevs": self.criterion_stddevs,
            "reviewer_counts": dict(sorted(self.reviewer_counts.items())),
            "pairwise_kappa": {
                f"{a}|{b}": kappas for (a, b), kappas in sorted(self.pairwise_kappa.items())
            },
            "shared_note_counts": {
                f"{a}|{b}": n for (a, b), n in sorted(self.shared_note_counts.items())
            },
        }


def summarize_reviews(records: Sequence[ReviewRecord]) -> ReviewSummary:
    """Per-criterion means/std-devs plus pairwise Cohen's kappa per criterion.

    Kappa is computed per reviewer pair over the notes both scored; pairs
    with no shared notes are omitted.
    """
    if not records:
        raise ValueError("cannot summarize zero review records")
    means = {}
    stddevs = {}
    for criterion in CRITERIA:
        scores = [getattr(r, criterion) for r in records]
        mean = sum(scores) / len(scores)
        means[criterion] = mean
        stddevs[criterion] = math.sqrt(sum((s - mean) ** 2 for s in scores) / len(scores))

    reviewer_counts = dict(Counter(r.reviewer_id for r in records))

    by_reviewer: dict[str, dict[str, ReviewRecord]] = defaultdict(dict)
    for record in records:
        by_reviewer[record.reviewer_id][record.note_id] = record

    pairwise: dict[tuple[str, str], dict[str, float]] = {}
    shared_counts: dict[tuple[str, str], int] = {}
    for a, b in combinations(sorted(by_reviewer), 2):
        shared = sorted(set(by_reviewer[a]) & set(by_reviewer[b]))
        if not shared:
            continue
        kappas = {}
        for criterion in CRITERIA:
            labels_a = [getattr(by_reviewer[a][n], criterion) for n in shared]
            labels_b = [getattr(by_reviewer[b][n], criterion) for n in shared]
            kappas[criterion] = cohen_kappa(labels_a, labels_b)
        pairwise[(a, b)] = kappas
        shared_counts[(a, b)] = len(shared)

    return ReviewSummary(
        record_count=len(records),
        criterion_means=means,
        criterion_stddevs=stddevs,
        reviewer_counts=reviewer_counts,
        pairwise_kappa=pairwise,
        shared_note_counts=shared_counts,
    )
