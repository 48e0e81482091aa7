"""The twelve acceptance criteria, one test each; every outcome is echoed as a pass/fail line."""

import pytest

from conftest import ACCEPTANCE_LINES
from symindex.acceptance import CRITERIA, run_criterion, warm_up


@pytest.fixture(scope="module", autouse=True)
def _compiled():
    warm_up()


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    result = run_criterion(number)
    line = result.line()
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert result.passed, line
