"""Acceptance gate: one full ``verify`` run per worker count, one line per criterion.

Run directly (``python tests/test_acceptance.py``) or through pytest, where
the lines appear in the terminal summary.
"""

import filecmp
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import pytest

from maurey.suites import CRITERIA

SEED = 20240601
WORKERS = (1, 8)
LINES: list[str] = []


def run_verify(out: Path, workers: int) -> int:
    cmd = [sys.executable, "-m", "maurey", "verify", "--suite", "all", "--seed", str(SEED),
           "--workers", str(workers), "--out", str(out)]
    return subprocess.run(cmd, capture_output=True, text=True).returncode


def differing_files(a: Path, b: Path) -> list[str]:
    names = sorted({p.name for p in a.iterdir()} | {p.name for p in b.iterdir()})
    return [n for n in names if not ((a / n).exists() and (b / n).exists() and filecmp.cmp(a / n, b / n, shallow=False))]


def evaluate(root: Path) -> dict[int, tuple[bool, str]]:
    dirs = {w: root / f"w{w}" for w in WORKERS}
    codes = {w: run_verify(d, w) for w, d in dirs.items()}
    summary = {s["suite"]: s for s in json.loads((dirs[1] / "verify_summary.json").read_text())}
    out = {}
    for k, name in CRITERIA.items():
        ok = bool(summary.get(name, {}).get("passed"))
        out[k] = (ok, name)
    diff = differing_files(dirs[1], dirs[8])
    out[10] = (not diff and codes[1] == codes[8], "determinism" + (f" (differs: {', '.join(diff)})" if diff else ""))
    return out


def report(results: dict[int, tuple[bool, str]]) -> list[str]:
    return [f"criterion {k:2d} {name}: {'PASS' if ok else 'FAIL'}" for k, (ok, name) in sorted(results.items())]


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    res = evaluate(tmp_path_factory.mktemp("acceptance"))
    LINES[:] = report(res)
    return res


@pytest.mark.slow
@pytest.mark.parametrize("criterion", range(1, 11))
def test_criterion(results, criterion):
    ok, name = results[criterion]
    assert ok, f"criterion {criterion} ({name}) failed"


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as d:
        lines = report(evaluate(Path(d)))
    print("\n".join(lines))
    sys.exit(0 if all(line.endswith("PASS") for line in lines) else 1)
