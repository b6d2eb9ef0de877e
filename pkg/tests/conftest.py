import os

import numpy as np
import pytest

from speedscale import engine

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(autouse=True, scope="session")
def _check_every_trace():
    """Every simulation in the suite re-checks power feasibility and speed caps."""
    old = engine.CHECK_INVARIANTS
    engine.CHECK_INVARIANTS = True
    os.environ.setdefault("SPEEDSCALE_WORKERS", "1")
    yield
    engine.CHECK_INVARIANTS = old


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    if "8" in ACCEPTANCE:
        cc = engine.CheckCounter
        ok = ACCEPTANCE["8"][0] and cc.failures == 0 and cc.intervals > 0
        ACCEPTANCE["8"] = (ok, f"{cc.intervals} intervals in {cc.traces} traces checked across the suite, "
                               f"{cc.failures} power or speed-cap violations")
    tr.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = ACCEPTANCE[key]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
