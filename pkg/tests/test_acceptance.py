"""End-to-end acceptance: every published criterion at its stated scale.

One parametrized test per criterion so the verbose run shows a single
pass/fail line for each.  The suite object is shared across the module
so the expensive ladder estimates are computed once and reused, exactly
as ``gridentropy verify`` does.
"""

import pytest

from gridentropy.verification import TITLES, VerificationSuite, format_table


@pytest.fixture(scope="module")
def suite():
    return VerificationSuite()


@pytest.mark.parametrize("number", sorted(TITLES), ids=lambda n: f"{n:02d}")
def test_criterion(suite, number):
    """Every check row holds and the run fits its wall-clock budget."""
    report = suite.run([number])[0]
    assert report.passed, "\n" + format_table([report])
