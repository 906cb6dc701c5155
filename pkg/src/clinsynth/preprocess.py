"""Rule-based tokenization, sentence segmentation, note cleaning, and vocabulary."""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

from .corpus import ClinicalNote, Corpus

# Special vocabulary tokens: sequence start, sequence end, unknown.
BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SPECIALS = (BOS, EOS, UNK)

# A token sequence is a plain list of nonempty token strings.
TokenSequence = list[str]

_DEID_RE = re.compile(r"\[\*\*.*?\*\*\]")
_WORD_RE = re.compile(r"[A-Za-z0-9_]+(?:'[A-Za-z0-9_]+)*")

# Unicode punctuation normalized to plain ASCII forms during cleaning.
_CHAR_NORMALIZATION = {
    "‘": "'", "’": "'", "‚": "'", "‛": "'",
    "“": '"', "”": '"', "„": '"', "‟": '"',
    "–": "-", "—": "-", "‒": "-", "―": "-",
    " ": " ",
}
_NORMALIZE_TABLE = str.maketrans(_CHAR_NORMALIZATION)


class NoteRejected(ValueError):
    """A note was dropped by cleaning; ``reason`` carries the rejection code."""

    def __init__(self, note_id: str, reason: str):
        super().__init__(f"note {note_id!r} rejected: {reason}")
        self.note_id = note_id
        self.reason = reason


@lru_cache(maxsize=1)
def default_abbreviations() -> frozenset[str]:
    text = resources.files("clinsynth.data").joinpath("abbreviations.txt").read_text("utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


def load_abbreviations(path: str) -> frozenset[str]:
    """Read an abbreviation list: plain text, one period-terminated entry per line."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


@dataclass(frozen=True)
class PreprocessConfig:
    lowercase: bool = True
    abbreviations: frozenset[str] = field(default_factory=default_abbreviations)
    min_token_count: int = 1
    preserve_deid_markers: bool = True

    def __post_init__(self):
        if self.min_token_count < 1:
            raise ValueError("min_token_count must be >= 1")
        bad = [a for a in self.abbreviations if not a.endswith(".")]
        if bad:
            raise ValueError(f"abbreviation entries must end with '.': {bad}")


@lru_cache(maxsize=8)
def _abbreviation_pattern(abbreviations: frozenset[str]) -> re.Pattern | None:
    if not abbreviations:
        return None
    ordered = sorted(abbreviations, key=len, reverse=True)
    return re.compile("|".join(re.escape(a) for a in ordered), re.IGNORECASE)


def tokenize(text: str, config: PreprocessConfig | None = None) -> TokenSequence:
    """Split text into tokens.

    Rules: runs of word characters (with intra-word apostrophes) form one
    token; every other non-space character is its own token; abbreviation-list
    entries (including multi-dot ones like "e.g.") keep their periods;
    ``[** ... **]`` de-identification markers are kept as single tokens when
    configured. Lowercasing, when enabled, applies to the final tokens.
    """
    config = config or PreprocessConfig()
    abbrev_re = _abbreviation_pattern(config.abbreviations)
    tokens: TokenSequence = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if config.preserve_deid_markers:
            m = _DEID_RE.match(text, i)
            if m:
                tokens.append(m.group())
                i = m.end()
                continue
        if abbrev_re is not None:
            m = abbrev_re.match(text, i)
            if m:
                tokens.append(m.group())
                i = m.end()
                continue
        m = _WORD_RE.match(text, i)
        if m:
            tokens.append(m.group())
            i = m.end()
            continue
        tokens.append(ch)
        i += 1
    if config.lowercase:
        tokens = [t.lower() for t in tokens]
    return tokens


def _abbreviation_before(text: str, dot_index: int, abbreviations: frozenset[str]) -> bool:
    # The candidate word is the maximal word-character run ending at the dot.
    j = dot_index
    while j > 0 and (text[j - 1].isalnum() or text[j - 1] in "._'"):
        j -= 1
    candidate = text[j : dot_index + 1].lower()
    return candidate in abbreviations


def segment_sentences(text: str, config: PreprocessConfig | None = None) -> list[str]:
    """Split text into sentences on ./!/? followed by whitespace and a capital.

    A period that terminates an abbreviation-list entry never ends a
    sentence. Joining the returned sentences with single spaces recovers the
    input up to whitespace.
    """
    config = config or PreprocessConfig()
    boundaries = []
    for i, ch in enumerate(text):
        if ch not in ".!?":
            continue
        j = i + 1
        if j >= len(text) or not text[j].isspace():
            continue
        while j < len(text) and text[j].isspace():
            j += 1
        if j >= len(text) or not text[j].isupper():
            continue
        if ch == "." and _abbreviation_before(text, i, config.abbreviations):
            continue
        boundaries.append(i + 1)
    sentences = []
    start = 0
    for b in boundaries + [len(text)]:
        piece = text[start:b].strip()
        if piece:
            sentences.append(piece)
        start = b
    return sentences


def clean_text(text: str) -> str:
    """Normalize quotes/dashes, strip control characters, collapse whitespace."""
    text = text.translate(_NORMALIZE_TABLE)
    text = "".join(
        ch for ch in text if ch.isspace() or unicodedata.category(ch) != "Cc"
    )
    return " ".join(text.split())


def clean_note(note: ClinicalNote, config: PreprocessConfig | None = None) -> ClinicalNote:
    """Return the note with cleaned text, or raise NoteRejected(empty_after_clean)."""
    cleaned = clean_text(note.text)
    if not cleaned:
        raise NoteRejected(note.id, "empty_after_clean")
    return replace(note, text=cleaned)


def clean_corpus(
    corpus: Corpus, config: PreprocessConfig | None = None
) -> tuple[Corpus, list[tuple[str, str]]]:
    """Clean every note; returns the surviving corpus plus (id, reason) rejections."""
    kept = []
    rejections = []
    for note in corpus:
        try:
            kept.append(clean_note(note, config))
        except NoteRejected as exc:
            rejections.append((exc.note_id, exc.reason))
    manifest = dict(corpus.manifest)
    manifest["count"] = len(kept)
    manifest["rejected"] = len(rejections)
    return Corpus(notes=tuple(kept), manifest=manifest), rejections


@dataclass(frozen=True)
class Vocabulary:
    """Dense token-to-index mapping with BOS/EOS/UNK specials at the front."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.tokens[: len(SPECIALS)] != SPECIALS:
            raise ValueError(f"vocabulary must start with the specials {SPECIALS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def from_tokens(cls, regular_tokens: Iterable[str]) -> "Vocabulary":
        regulars = tuple(t for t in regular_tokens if t not in SPECIALS)
        return cls(tokens=SPECIALS + regulars)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def bos_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    @property
    def unk_id(self) -> int:
        return 2

    @property
    def regular_tokens(self) -> tuple[str, ...]:
        return self.tokens[len(SPECIALS):]

    def encode(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def encode_sequence(self, tokens: Sequence[str]) -> list[int]:
        return [self.encode(t) for t in tokens]

    def decode(self, index: int) -> str:
        return self.tokens[index]

    def decode_sequence(self, indices: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in indices]


def build_vocabulary(
    sequences: Iterable[Sequence[str]], config: PreprocessConfig | None = None
) -> Vocabulary:
    """Collect tokens seen at least ``min_token_count`` times, plus the specials.

    Tokens are ordered by descending count (ties alphabetical) so the mapping
    is deterministic; rarer tokens encode to UNK.
    """
    config = config or PreprocessConfig()
    counts: Counter[str] = Counter()
    total_sequences = 0
    for seq in sequences:
        total_sequences += 1
        counts.update(seq)
    if total_sequences == 0:
        raise ValueError("cannot build a vocabulary from zero sequences")
    keep = [t for t, c in counts.items() if c >= config.min_token_count]
    keep.sort(key=lambda t: (-counts[t], t))
    return Vocabulary.from_tokens(keep)
