from __future__ import annotations

import time
from contextlib import contextmanager

import pytest

_ACCEPTANCE: list[str] = []


class Criterion:
    """Times one acceptance criterion and records a PASS/FAIL line."""

    def __init__(self, number: int, name: str, budget_s: float) -> None:
        self.number, self.name, self.budget_s = number, name, budget_s

    @contextmanager
    def check(self):
        t0 = time.perf_counter()
        status = "FAIL"
        try:
            yield self
            elapsed = time.perf_counter() - t0
            assert elapsed < self.budget_s, f"took {elapsed:.2f}s, budget {self.budget_s}s"
            status = "PASS"
        finally:
            elapsed = time.perf_counter() - t0
            line = f"[{status}] criterion {self.number}: {self.name} ({elapsed:.2f}s / {self.budget_s:g}s)"
            _ACCEPTANCE.append(line)
            print(line)


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
