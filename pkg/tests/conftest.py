import math

import pytest

# (criterion number, description, passed) tuples filled by test_acceptance
ACCEPTANCE_RESULTS = []


def erf_series(x: float, terms: int = 200) -> float:
    """Maclaurin series of erf, independent of math.erf (|x| <= ~6)."""
    total, term = 0.0, x
    for k in range(terms):
        total += term / (2 * k + 1)
        term *= -x * x / (k + 1)
        if abs(term) < 1e-18 * abs(total):
            break
    return 2.0 / math.sqrt(math.pi) * total


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, passed in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {description}")


@pytest.fixture
def rng():
    return __import__("numpy").random.default_rng(20240607)
