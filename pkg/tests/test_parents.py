import pytest

from hullopt import geometry, parents
from hullopt.geometry import HullForm

# published block and prismatic coefficients the bundled bodies are tuned to
TARGETS = {
    "series60_cb060": (0.600, 0.614),
    "series60_cb070": (0.700, 0.710),
    "s175_container": (0.564, 0.584),
}


def test_four_parents_on_default_grid(bundle):
    assert [p.name for p in bundle] == list(parents.PARENT_NAMES)
    assert all(p.grid.shape == (40, 20) for p in bundle)


@pytest.mark.parametrize("name", sorted(TARGETS))
def test_family_parents_match_coefficients(name):
    lb, bt = parents.PARTICULARS[name]
    hs = geometry.hydrostatics(HullForm(parents.parent_grid(name), 150.0, lb, bt))
    cb, cp = TARGETS[name]
    assert hs.block_coefficient == pytest.approx(cb, abs=1e-5)
    assert hs.prismatic_coefficient == pytest.approx(cp, abs=1e-5)


def test_parents_are_valid_and_bounded(bundle):
    for p in bundle:
        rep = geometry.validate(p.grid)
        assert rep.valid
        assert p.grid.offsets.max() <= 1.0 + 1e-12


def test_family_grid_is_full_amidships():
    g = parents.family_grid(0.2, 2.0, 2.0, 0.0)
    # a zero bilge radius gives a rectangular midship section
    assert g.offsets[20].min() == pytest.approx(1.0)


def test_unknown_parent():
    with pytest.raises(KeyError):
        parents.parent_grid("titanic")
