from __future__ import annotations

import json

import pytest

from clinsynth.corpus import ClinicalNote, Corpus

_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" in report.nodeid and report.when == "call":
        _acceptance_results[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        outcome = _acceptance_results[name]
        label = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{label} {name}")


@pytest.fixture
def small_corpus():
    notes = tuple(
        ClinicalNote(id=f"n{i}", category="Nursing" if i % 3 else "Radiology",
                     text=f"note body number {i} with some words", source="test")
        for i in range(12)
    )
    return Corpus(notes=notes)


@pytest.fixture
def jsonl_file(tmp_path):
    def write(records, name="notes.jsonl"):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as fh:
            for record in records:
                if isinstance(record, str):
                    fh.write(record + "\n")
                else:
                    fh.write(json.dumps(record) + "\n")
        return path

    return write
