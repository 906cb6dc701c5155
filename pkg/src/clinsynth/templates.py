"""Structured transcript templates and few-shot prompt assembly."""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

_NAME_RE = re.compile(r"[A-Za-z][A-Za-z ]*")

# Slot substituted into few-shot instructions with the requested condition.
CONDITION_SLOT = "[symptoms or condition]"

DEFAULT_FEWSHOT_INSTRUCTION = (
    "Generate a new clinical transcript for a patient presenting with "
    "[symptoms or condition]."
)


class TemplateParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class MissingPlaceholderError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.placeholder = name


@dataclass(frozen=True)
class TranscriptTemplate:
    """Parsed template: literal segments interleaved with named placeholders.

    ``placeholders`` lists each distinct name once, in order of first
    appearance; repeated occurrences of a name receive the same filled value.
    """

    name: str
    body: str
    placeholders: tuple[str, ...]
    segments: tuple[tuple[str, str], ...]  # ("lit", text) or ("ph", name)


def parse_template(text: str, name: str = "template") -> TranscriptTemplate:
    """Extract [Placeholder Name] slots; literal brackets escape as [[ and ]]."""
    segments: list[tuple[str, str]] = []
    placeholders: list[str] = []
    literal: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "[":
            if text.startswith("[[", i):
                literal.append("[")
                i += 2
                continue
            m = _NAME_RE.match(text, i + 1)
            if not m or m.end() >= n or text[m.end()] != "]":
                raise TemplateParseError("unbalanced or malformed placeholder bracket", i)
            if literal:
                segments.append(("lit", "".join(literal)))
                literal = []
            ph = m.group()
            segments.append(("ph", ph))
            if ph not in placeholders:
                placeholders.append(ph)
            i = m.end() + 1
        elif ch == "]":
            if text.startswith("]]", i):
                literal.append("]")
                i += 2
                continue
            raise TemplateParseError("unbalanced closing bracket", i)
        else:
            literal.append(ch)
            i += 1
    if literal:
        segments.append(("lit", "".join(literal)))
    return TranscriptTemplate(
        name=name, body=text, placeholders=tuple(placeholders), segments=tuple(segments)
    )


def render_template(template: TranscriptTemplate, values: Mapping[str, str]) -> str:
    """Substitute a value for every placeholder; escapes resolve to literal brackets."""
    parts = []
    for kind, payload in template.segments:
        if kind == "lit":
            parts.append(payload)
        else:
            if payload not in values:
                raise MissingPlaceholderError(payload)
            parts.append(str(values[payload]))
    return "".join(parts)


# A slot lexicon maps placeholder names to generator specs:
#   {"kind": "choice", "options": [...]}
#   {"kind": "int_range", "lo": 18, "hi": 90}
#   {"kind": "pattern", "pattern": "###-####"}   # -> digit, ? -> uppercase letter
SlotLexicon = dict


def draw_slot(spec: Mapping, rng: random.Random) -> str:
    kind = spec.get("kind")
    if kind == "choice":
        options = spec.get("options") or []
        if not options or any(not str(o) for o in options):
            raise ValueError("choice spec needs nonempty options")
        return str(rng.choice(options))
    if kind == "int_range":
        lo, hi = spec.get("lo"), spec.get("hi")
        if lo is None or hi is None or lo > hi:
            raise ValueError("int_range spec needs lo <= hi")
        return str(rng.randint(lo, hi))
    if kind == "pattern":
        pattern = spec.get("pattern")
        if not pattern:
            raise ValueError("pattern spec needs a nonempty pattern")
        out = []
        for ch in pattern:
            if ch == "#":
                out.append(str(rng.randint(0, 9)))
            elif ch == "?":
                out.append(chr(rng.randint(ord("A"), ord("Z"))))
            else:
                out.append(ch)
        return "".join(out)
    raise ValueError(f"unknown slot kind {kind!r}")


def fill_template(template: TranscriptTemplate, lexicon: SlotLexicon, seed: int) -> str:
    """Fill every placeholder with a seeded lexicon draw.

    Draws happen in placeholder order, one per distinct name, so output is
    deterministic for a given (template, lexicon, seed).
    """
    rng = random.Random(seed)
    values: dict[str, str] = {}
    for name in template.placeholders:
        if name not in lexicon:
            raise MissingPlaceholderError(name)
        values[name] = draw_slot(lexicon[name], rng)
    return render_template(template, values)


def load_lexicon(path: str | Path) -> SlotLexicon:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@lru_cache(maxsize=1)
def default_template() -> TranscriptTemplate:
    text = resources.files("clinsynth.data").joinpath("template_clinical.txt").read_text("utf-8")
    return parse_template(text, name="clinical_note")


@lru_cache(maxsize=1)
def default_lexicon() -> SlotLexicon:
    text = resources.files("clinsynth.data").joinpath("lexicon_default.json").read_text("utf-8")
    return json.loads(text)


@lru_cache(maxsize=1)
def default_fewshot_examples() -> tuple[str, ...]:
    text = resources.files("clinsynth.data").joinpath("examples_fewshot.json").read_text("utf-8")
    return tuple(json.loads(text))


def scenario_prompts() -> dict[str, str]:
    """Instruction files shipped for scenario coverage, keyed by scenario name."""
    prompts = {}
    for entry in resources.files("clinsynth.data").joinpath("prompts").iterdir():
        if entry.name.endswith(".txt"):
            prompts[entry.name[:-4]] = entry.read_text("utf-8").strip()
    return dict(sorted(prompts.items()))


@dataclass(frozen=True)
class FewShotPrompt:
    """Instruction plus in-context example transcripts and a condition slot."""

    instruction: str
    examples: tuple[str, ...]
    condition: str

    def render(self) -> str:
        instruction = self.instruction.replace(CONDITION_SLOT, self.condition)
        if not self.examples:
            return instruction
        lines = [instruction, "Example:"]
        for i, example in enumerate(self.examples, start=1):
            lines.append(f"{i}. {example}")
        return "\n".join(lines)


def build_fewshot_prompt(
    instruction: str, examples: Sequence[str] = (), condition: str = ""
) -> str:
    """Render instruction (condition slot substituted) plus numbered examples."""
    if not instruction:
        raise ValueError("instruction must be nonempty")
    prompt = FewShotPrompt(
        instruction=instruction, examples=tuple(examples), condition=condition
    )
    return prompt.render()
