import pytest

from conversekam.verify import SUITES, PropertyResult, run_suite


@pytest.mark.parametrize("name", sorted(SUITES))
def test_suite_passes(name):
    results = run_suite(name, seed=2)
    assert results and all(r.passed for r in results), [r.line() for r in results if not r.passed]


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_suite("nope")


def test_result_line():
    assert PropertyResult("x", True, 1e-3, 1e-2).line().startswith("[PASS] x: worst=1.000e-03")
    assert PropertyResult("y", False, 1.0, 1e-2, "why").line().endswith("why")
