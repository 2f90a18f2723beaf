import json
import shutil
from pathlib import Path

import pytest

from clirpipe.textproc import ProcessingPolicy

ROOT = Path(__file__).resolve().parents[1]
FIXTURE_DIR = ROOT / "fixtures" / "clir1k"


@pytest.fixture
def plain_policy():
    """No stopwords, no stemming: raw ``t17``-style tokens index as-is."""
    return ProcessingPolicy(language="en")


@pytest.fixture
def clir_fixture(tmp_path):
    """Copy of the bundled 1k-doc collection (without any previous outputs)."""
    dst = tmp_path / "clir1k"
    shutil.copytree(FIXTURE_DIR, dst, ignore=shutil.ignore_patterns("out"))
    return dst


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    return path


# acceptance criteria outcomes, filled in by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {n}: {title}" + (f"  [{detail}]" if detail else ""))
