"""One test per acceptance criterion; each prints its PASS/FAIL line."""

import pytest

from fbmsync.acceptance import CRITERIA, Session, exhaustive_pvar_power, run_criterion

# collected for the terminal summary in conftest.py
LINES = []


@pytest.fixture(scope="module")
def session():
    return Session()


def test_exhaustive_oracle_small_cases():
    assert exhaustive_pvar_power([[0.0], [1.0], [0.0]], 1.0) == 2.0
    assert exhaustive_pvar_power([[0.0], [1.0], [2.0]], 2.0) == 4.0
    assert exhaustive_pvar_power([[0.0], [3.0], [4.0]], 0.5) == pytest.approx(3 ** 0.5 + 1)


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, session):
    res = run_criterion(number, session)
    print(res.line())
    LINES.append(res.line())
    assert res.passed, res.line()
