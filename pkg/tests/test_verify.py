"""The verification suite must itself pass.

Each check in fadl.verify rebuilds its expected values from scratch
(dense algebra, damped Newton references, closed-form intervals), so a
green run here means the library agrees with independent oracles rather
than with itself.
"""

import pytest

from fadl import verify


@pytest.mark.parametrize("name", verify.PROPERTY_NAMES)
def test_property(name):
    res = verify.run_property(name)
    assert res.passed, f"{name}: {res.detail}"


def test_unknown_property_rejected():
    with pytest.raises(ValueError, match="unknown property"):
        verify.run_property("bogus")


def test_run_properties_subset():
    results = verify.run_properties(["linesearch-interval", "svrg-identity"])
    assert [r.name for r in results] == ["linesearch-interval", "svrg-identity"]
    assert all(r.passed for r in results)
