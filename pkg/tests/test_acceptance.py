"""Acceptance criteria AC-1..AC-10 at their stated tolerances and time budgets.

Each criterion prints one PASS/FAIL line; the lines are repeated in the
terminal summary. Run directly with ``python tests/test_acceptance.py``.
"""

import sys

import pytest

from orliczfem.acceptance import CRITERIA, Suite, run_criterion

RESULTS = []


@pytest.fixture(scope="module")
def suite():
    return Suite(seed=42)


@pytest.mark.parametrize("name", [c[0] for c in CRITERIA])
def test_criterion(suite, name):
    res = run_criterion(suite, name)
    RESULTS.append(res)
    print(res.line())
    assert res.passed, res.detail
    assert res.in_time, f"{res.seconds:.1f} s over the {res.budget:g} s budget"


if __name__ == "__main__":
    s = Suite(seed=42)
    results = [run_criterion(s, c[0]) for c in CRITERIA]
    for r in results:
        print(r.line())
    sys.exit(0 if all(r.ok for r in results) else 1)
