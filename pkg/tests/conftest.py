from __future__ import annotations

import pytest

from lendbandit.data import SyntheticConfig, generate_synthetic
from lendbandit.domain import ArmId, ArmQuotes, BookingRequest, ContextVector, LogRecord

DAY_MS = 86_400_000
T0 = 1_682_899_200_000  # 2023-05-01T00:00:00Z


def make_record(bid=0.02, prices=(0.01, 0.015, 0.02, 0.03), mv=1e6, *, ts=T0, sec="S1",
                ctx=None, logged_arm=None, rid="r0", qty=100):
    ctx = ctx or ContextVector(0.5, 0.5, 0.5, 0.5, 0.5)
    req = BookingRequest(rid, ts, sec, bid, qty, mv, logged_arm=logged_arm)
    return LogRecord(req, ctx, ArmQuotes(tuple(prices)))


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(SyntheticConfig(seed=7, n_securities=5, days=5,
                                              requests_per_day_range=(40, 60)))


@pytest.fixture(scope="session")
def default_synth():
    return generate_synthetic(SyntheticConfig(seed=42))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
