from __future__ import annotations

import math

import pytest
from hypothesis import HealthCheck, settings

from eigenloc.geometry import ManifoldModel

settings.register_profile(
    "eigenloc",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("eigenloc")


@pytest.fixture(scope="session")
def s2() -> ManifoldModel:
    return ManifoldModel.sphere(2)


@pytest.fixture(scope="session")
def t2() -> ManifoldModel:
    return ManifoldModel.torus(2)


def dyadic_k() -> list[int]:
    return [16, 32, 64, 128, 256]


def monomial_integral_s2(a: int, b: int, c: int) -> float:
    """int_{S^2} x^a y^b z^c dS via the Gamma-function formula (zero if any power is odd)."""
    if a % 2 or b % 2 or c % 2:
        return 0.0
    beta = [0.5 * (e + 1) for e in (a, b, c)]
    return 2.0 * math.exp(sum(math.lgamma(x) for x in beta) - math.lgamma(sum(beta)))


# acceptance verdicts, one line per criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
