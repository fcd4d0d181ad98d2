"""Acceptance criteria, one test each.  Every test prints a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` (or ``scripts/run_acceptance.py``)
to see the lines; the full suite takes well under a minute on one core.
"""
import pytest

from holdersgd.acceptance import CRITERIA


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{k}" for k in range(1, len(CRITERIA) + 1)])
def test_criterion(criterion, capsys):
    result = criterion()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
