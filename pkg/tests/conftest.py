import math

import pytest

from ctrlcurv import builtin_system

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Record an acceptance verdict; the terminal summary prints one line per criterion."""

    def _record(n: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[n] = (bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def unicycle():
    return builtin_system("conformal_frame", phi="0")


@pytest.fixture(scope="session")
def hyperbolic():
    # f = q2 (cos u, sin u): orthonormal frame of the half-plane metric
    return builtin_system("conformal_frame", phi="-log(q2)")


@pytest.fixture(scope="session")
def sphere():
    return builtin_system("conformal_frame", phi="log(2/(1 + q1^2 + q2^2))")


@pytest.fixture(scope="session")
def zermelo():
    return builtin_system("zermelo", phi="0.3*q1*q2 + 0.2*q2^2", drift1="0.1*q2", drift2="0.05*q1^2")


HALF_PI = math.pi / 2
