from __future__ import annotations

from pathlib import Path

import pytest

from ckptvars.pipeline import analyze
from ckptvars.preprocess import LoopSpec
from ckptvars.synth import emit_program, load
from ckptvars.synth.model import layout
from ckptvars.trace import parse_trace

FIXTURES = Path(__file__).parent / "fixtures"

# PASS/FAIL lines appended by tests/test_acceptance.py
ACCEPTANCE: list[str] = []


def loop_of(p) -> LoopSpec:
    p = layout(p)
    return LoopSpec("main", p.loop.start_line, p.loop.end_line)


def run_program(p, **kw):
    """Emit, parse and analyze a mini program; returns (analysis, layout)."""
    p = layout(p)
    text, lay = emit_program(p)
    seq = parse_trace(text.encode())
    return analyze(seq, loop_of(p), **kw), lay


@pytest.fixture(scope="session")
def kernel_program():
    return load(FIXTURES / "kernel.json")


@pytest.fixture(scope="session")
def cg_program_fixture():
    return load(FIXTURES / "cg.json")


@pytest.fixture(scope="session")
def kernel(kernel_program):
    return run_program(kernel_program)[0]


@pytest.fixture(scope="session")
def cg(cg_program_fixture):
    return run_program(cg_program_fixture)[0]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
