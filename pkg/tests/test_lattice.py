import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbscmi.errors import ConfigError, RegionError
from gibbscmi.lattice import Lattice, Region, boundary, distance, extend_region


def test_region_is_canonical():
    assert Region([3, 1, 3, 2]) == (1, 2, 3)
    assert Region(4) == (4,)
    assert Region([1, 2]) | Region([5]) == (1, 2, 5)


def test_chain_distances():
    assert distance(Lattice.chain(5), [0], [4]) == 4
    assert distance(Lattice.chain(5), [1, 2], [2, 3]) == 0
    assert distance(Lattice.chain(6, periodic=True), [0], [5]) == 1


def test_distance_empty_region_raises():
    with pytest.raises(RegionError):
        distance(Lattice.chain(4), [], [1])


def test_extend_region():
    lat = Lattice.chain(7)
    assert extend_region(lat, [3], 2) == (1, 2, 3, 4, 5)
    assert extend_region(lat, [3], 0) == (3,)
    assert extend_region(lat, [3], lat.diameter) == lat.sites


def test_boundary():
    assert boundary(Lattice.chain(8), [2, 3, 4]) == (2, 4)
    assert boundary(Lattice.chain(8), [5]) == (5,)
    grid = Lattice.grid(2, 2)
    assert boundary(grid, [0, 1]) == (0, 1)


def test_grid_geometry():
    g = Lattice.grid(3, 3)
    assert g.dimension == 2
    assert g.diameter == 4
    assert g.site_distance(0, 8) == 4
    with pytest.raises(ConfigError):
        Lattice.grid(4, 4)


def test_from_config():
    lat = Lattice.from_config({"type": "chain", "n": 4, "periodic": True})
    assert lat.geometry_tag == "chain-periodic"
    assert Lattice.from_config({"type": "grid", "rows": 2, "cols": 3}).n_sites == 6
    with pytest.raises(ConfigError):
        Lattice.from_config({"type": "torus"})


def test_region_out_of_range():
    with pytest.raises(RegionError):
        Lattice.chain(4).region([1, 4])


def test_measured_gamma_chain():
    # a ball on an open chain has at most two boundary sites
    assert Lattice.chain(8).measured_gamma() == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 12), st.data())
def test_distance_is_a_metric(n, data):
    lat = Lattice.chain(n, periodic=data.draw(st.booleans()))
    i, j, k = (data.draw(st.integers(0, n - 1)) for _ in range(3))
    d = lat.site_distance
    assert d(i, j) == d(j, i)
    assert d(i, k) <= d(i, j) + d(j, k)
    assert (d(i, j) == 0) == (i == j)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10), st.data())
def test_extension_grows_and_reaches_everything(n, data):
    lat = Lattice.chain(n)
    X = Region(data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n)))
    prev = X
    for r in range(1, lat.diameter + 1):
        cur = extend_region(lat, X, r)
        assert set(prev) <= set(cur)
        assert all(distance(lat, [s], X) <= r for s in cur)
        prev = cur
    assert prev == lat.sites
    assert math.isfinite(lat.diameter)
