import numpy as np
import pytest

from dimerlab.lattice import (Bond, DualPath, TorusLattice, bond_weight,
                              build_paths, build_torus, winding_loops)


@pytest.fixture(scope="module")
def lat():
    return build_torus(6)


def test_coordinate_window(lat):
    assert lat.cmin == -2 and lat.cmax == 3
    xs = set()
    for i in range(lat.n_sites):
        xs.add(lat.site_coord(i))
    assert len(xs) == 36
    assert all(lat.cmin <= x <= lat.cmax for p in xs for x in p)


def test_site_index_roundtrip(lat):
    for i in range(lat.n_sites):
        assert lat.site_index(lat.site_coord(i)) == i
    # wrapping: shifted copies map to the same index
    assert lat.site_index((lat.cmax + 1, 0)) == lat.site_index((lat.cmin, 0))
    assert lat.site_index((0, lat.cmin - 1)) == lat.site_index((0, lat.cmax))


def test_bond_id_roundtrip(lat):
    seen = set()
    for i in range(lat.n_sites):
        x = lat.site_coord(i)
        for j in (1, 2):
            b = lat.bond_id(x, j)
            assert lat.bond_from_id(b) == Bond(x, j)
            seen.add(b)
    assert seen == set(range(lat.n_bonds))
    assert lat.n_bonds == 2 * lat.n_sites


def test_color_split(lat):
    whites = sum(lat.is_white(lat.site_coord(i)) for i in range(lat.n_sites))
    assert whites == lat.n_sites // 2


def test_bond_weights_staggering(lat):
    m = 0.3
    t = lat.bond_weights(m)
    for i in range(lat.n_sites):
        x = lat.site_coord(i)
        assert t[lat.bond_id(x, 1)] == pytest.approx(bond_weight(x, 1, m))
        assert t[lat.bond_id(x, 2)] == 1.0
        want = 1.0 + m if x[0] % 2 == 0 else 1.0 - m
        assert bond_weight(x, 1, m) == pytest.approx(want)


def test_plaquette_bonds(lat):
    f = (1, -2)
    ids = sorted(lat.plaquette_bonds(f))
    want = sorted([lat.bond_id((1, -2), 1), lat.bond_id((1, -1), 1),
                   lat.bond_id((1, -2), 2), lat.bond_id((2, -2), 2)])
    assert ids == want


def test_crossing_signs_unit():
    # every step's sign factor is +-1 and flips with the bond direction
    p = DualPath.from_steps((0, 0), [(1, 0), (0, 1), (-1, 0), (0, -1)])
    assert all(s in (-1.0, 1.0) for s in p.sigmas())


def test_dual_path_waypoints_match_steps():
    a = DualPath.from_waypoints([(0, 0), (3, 0), (3, 2)])
    b = DualPath.from_steps((0, 0), [(1, 0)] * 3 + [(0, 1)] * 2)
    assert a.crossings == b.crossings


def test_build_paths_disjoint_and_anchored():
    for r in (4, 8):
        for n in (1, 2, 3, 4):
            paths = build_paths((0, 0), (r, 0), n)
            assert len(paths) == n
            used = set()
            for p in paths:
                bonds = p.bond_set()
                assert not (bonds & used)
                used |= bonds


def test_build_paths_rejects_odd_separation():
    with pytest.raises(ValueError):
        build_paths((0, 0), (5, 0), 2)
    with pytest.raises(ValueError):
        build_paths((0, 0), (2, 0), 2)


def test_winding_loops_span_torus(lat):
    l1, l2 = winding_loops(lat)
    # each loop visits L faces and returns to its start after wrapping
    assert len(l1.crossings) == lat.L
    assert len(l2.crossings) == lat.L


def test_rejects_odd_sizes():
    for bad in (3, 5, 2, 0):
        with pytest.raises(ValueError):
            build_torus(bad)
