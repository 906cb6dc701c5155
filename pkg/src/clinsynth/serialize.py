"""Versioned JSON checkpoint format shared by all model kinds."""

from __future__ import annotations

import json
from pathlib import Path

FORMAT = "clinsynth-model"
VERSION = 1

# Separator used when flattening context tuples into JSON keys. Tokens can
# never contain it: cleaning strips control characters.
CONTEXT_SEP = "\x1f"


def join_context(tokens: tuple[str, ...]) -> str:
    return CONTEXT_SEP.join(tokens)


def split_context(key: str) -> tuple[str, ...]:
    return tuple(key.split(CONTEXT_SEP)) if key else ()


def dump_model(kind: str, payload: dict, path: str | Path) -> None:
    document = {"format": FORMAT, "version": VERSION, "kind": kind}
    document.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def load_model(path: str | Path, kind: str | None = None) -> dict:
    with open(path, encoding="utf-8") as fh:
        document = json.load(fh)
    if document.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    if document.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported version {document.get('version')}")
    if kind is not None and document.get("kind") != kind:
        raise ValueError(f"{path}: expected kind {kind!r}, found {document.get('kind')!r}")
    return document
