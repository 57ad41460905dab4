"""The twelve acceptance criteria at their stated tolerances.

Each criterion prints one PASS/FAIL line (visible with ``pytest -s`` or in
the ``-v`` captured output on failure); ``daol selftest`` prints the same lines.
"""

import pytest

from daol.acceptance import CRITERIA


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{c.number:02d}" for c in CRITERIA])
def test_criterion(criterion):
    result = criterion()
    print(result.line())
    assert result.passed, result.line()
