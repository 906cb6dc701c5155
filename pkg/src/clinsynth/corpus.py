"""Corpus data model: ingestion, deterministic splitting, and summary statistics."""

from __future__ import annotations

import csv
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

SPLITS = ("train", "validation", "test")

DEFAULT_CSV_COLUMNS = {"ROW_ID": "id", "CATEGORY": "category", "TEXT": "text"}


class IngestError(ValueError):
    """Raised when a record file cannot be turned into a corpus."""


@dataclass(frozen=True)
class ClinicalNote:
    id: str
    category: str
    text: str
    source: str = ""
    split: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("note id must be nonempty")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"invalid split {self.split!r}, expected one of {SPLITS}")


@dataclass(frozen=True)
class Corpus:
    """Immutable ordered collection of notes plus an ingestion manifest."""

    notes: tuple[ClinicalNote, ...]
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for note in self.notes:
            if note.id in seen:
                raise ValueError(f"duplicate note id {note.id!r}")
            seen.add(note.id)
        if "count" in self.manifest and self.manifest["count"] != len(self.notes):
            raise ValueError("manifest count does not match number of notes")

    def __len__(self) -> int:
        return len(self.notes)

    def __iter__(self) -> Iterator[ClinicalNote]:
        return iter(self.notes)

    def by_split(self, split: str) -> tuple[ClinicalNote, ...]:
        if split not in SPLITS:
            raise ValueError(f"invalid split {split!r}")
        return tuple(n for n in self.notes if n.split == split)


@dataclass(frozen=True)
class CorpusStats:
    note_count: int
    mean_length: float
    stddev_length: float
    histogram: tuple[tuple[int, int, int], ...]  # (lo, hi, count) word-count buckets
    categories: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "note_count": self.note_count,
            "mean": self.mean_length,
            "stddev": self.stddev_length,
            "histogram": [{"lo": lo, "hi": hi, "count": c} for lo, hi, c in self.histogram],
            "categories": dict(sorted(self.categories.items())),
        }


def _note_from_record(record: dict, source: str, where: str) -> ClinicalNote:
    missing = [k for k in ("id", "category", "text") if not record.get(k)]
    if missing:
        raise IngestError(f"{where}: missing or empty field(s) {', '.join(missing)}")
    split = record.get("split")
    if split is not None and split not in SPLITS:
        raise IngestError(f"{where}: invalid split {split!r}")
    return ClinicalNote(
        id=str(record["id"]),
        category=str(record["category"]),
        text=str(record["text"]),
        source=str(record.get("source") or source),
        split=split,
    )


def ingest(path: str | Path, format: str = "jsonl", column_map: dict[str, str] | None = None) -> Corpus:
    """Read a record file into a Corpus.

    ``format`` is "jsonl" (one object per line with keys id/category/text,
    optional source/split) or "csv" (header row required; ``column_map`` maps
    file columns onto note fields, defaulting to ROW_ID/CATEGORY/TEXT).
    Malformed lines and duplicate ids are hard errors that name the offender.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    if format == "jsonl":
        notes = _ingest_jsonl(path)
    elif format == "csv":
        notes = _ingest_csv(path, column_map or DEFAULT_CSV_COLUMNS)
    else:
        raise IngestError(f"unknown format {format!r}, expected jsonl or csv")

    seen: set[str] = set()
    for note in notes:
        if note.id in seen:
            raise IngestError(f"duplicate note id {note.id!r} in {path}")
        seen.add(note.id)
    manifest = {"sources": [str(path)], "format": format, "count": len(notes)}
    return Corpus(notes=tuple(notes), manifest=manifest)


def _ingest_jsonl(path: Path) -> list[ClinicalNote]:
    notes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise IngestError(f"line {lineno}: expected a JSON object")
            notes.append(_note_from_record(record, str(path), f"line {lineno}"))
    return notes


def _ingest_csv(path: Path, column_map: dict[str, str]) -> list[ClinicalNote]:
    targets = set(column_map.values())
    if not {"id", "category", "text"} <= targets:
        raise IngestError("column_map must cover the id, category and text fields")
    notes = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty file, header row required")
        missing = [c for c in column_map if c not in reader.fieldnames]
        if missing:
            raise IngestError(f"{path}: header is missing column(s) {', '.join(missing)}")
        # header occupies line 1, so the first data row is line 2
        for lineno, row in enumerate(reader, start=2):
            if None in row.values() or None in row:
                raise IngestError(f"line {lineno}: wrong number of fields")
            record = {field: row[col] for col, field in column_map.items()}
            notes.append(_note_from_record(record, str(path), f"line {lineno}"))
    return notes


def write_jsonl(corpus: Corpus | Iterable[ClinicalNote], path: str | Path) -> None:
    """Write notes as one JSON object per line (the notes.jsonl interchange format)."""
    notes = corpus.notes if isinstance(corpus, Corpus) else tuple(corpus)
    with open(path, "w", encoding="utf-8") as fh:
        for note in notes:
            record = {
                "id": note.id,
                "category": note.category,
                "text": note.text,
                "source": note.source,
            }
            if note.split is not None:
                record["split"] = note.split
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def split_corpus(corpus: Corpus, ratios: tuple[float, float, float], seed: int) -> Corpus:
    """Assign every note to train/validation/test by a seeded shuffle.

    Validation and test receive exactly floor(ratio * n) notes each; the
    remainder goes to train. Identical (corpus, ratios, seed) inputs produce
    identical assignments.
    """
    if len(ratios) != 3:
        raise ValueError("ratios must be three fractions (train, validation, test)")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be nonnegative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(corpus)
    n_val = math.floor(ratios[1] * n)
    n_test = math.floor(ratios[2] * n)
    n_train = n - n_val - n_test

    order = list(range(n))
    random.Random(seed).shuffle(order)
    assignment = {}
    for pos, idx in enumerate(order):
        if pos < n_train:
            assignment[idx] = "train"
        elif pos < n_train + n_val:
            assignment[idx] = "validation"
        else:
            assignment[idx] = "test"
    notes = tuple(replace(note, split=assignment[i]) for i, note in enumerate(corpus.notes))
    manifest = dict(corpus.manifest)
    manifest["split"] = {"ratios": list(ratios), "seed": seed,
                        "sizes": {"train": n_train, "validation": n_val, "test": n_test}}
    return Corpus(notes=notes, manifest=manifest)


def compute_stats(corpus: Corpus, bucket_width: int = 50) -> CorpusStats:
    """Per-category counts plus mean/std-dev and a bucketed histogram of note lengths.

    Lengths are whitespace word counts on the raw text, so the statistics
    describe the notes as ingested rather than any tokenized view.
    """
    if len(corpus) == 0:
        raise ValueError("cannot compute statistics of an empty corpus")
    if bucket_width < 1:
        raise ValueError("bucket_width must be >= 1")
    lengths = [len(note.text.split()) for note in corpus]
    n = len(lengths)
    mean = sum(lengths) / n
    variance = sum((x - mean) ** 2 for x in lengths) / n
    stddev = math.sqrt(variance)

    counts = Counter(length // bucket_width for length in lengths)
    top = max(counts)
    histogram = tuple(
        (b * bucket_width, (b + 1) * bucket_width, counts.get(b, 0)) for b in range(top + 1)
    )
    categories = dict(Counter(note.category for note in corpus))
    return CorpusStats(
        note_count=n,
        mean_length=mean,
        stddev_length=stddev,
        histogram=histogram,
        categories=categories,
    )
