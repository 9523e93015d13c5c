"""Acceptance suite: one pass/fail line per criterion, repeated in the terminal summary."""
import pytest

from sps_radial.verification import CRITERIA, run_check

KEYS = [key for key, _, _ in CRITERIA]


@pytest.mark.parametrize("key", KEYS, ids=[f"criterion_{k}" for k in KEYS])
def test_criterion(key, fx, report_line):
    res = run_check(key, fx)
    print(res.line())
    report_line(res.line())
    assert res.passed, res.line()
