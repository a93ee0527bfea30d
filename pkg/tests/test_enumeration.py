import math

import numpy as np
import pytest

from dimerlab.enumeration import (BudgetExceeded, collect_ensemble,
                                  dimer_moment_tables,
                                  exact_interacting_cumulant,
                                  exact_interacting_expectation,
                                  enumerate_matchings, height_observable,
                                  indicator_product, lookup_moment,
                                  matching_count)
from dimerlab.lattice import DualPath, build_torus


@pytest.fixture(scope="module")
def lat4():
    return build_torus(4)


@pytest.fixture(scope="module")
def ens4(lat4):
    return collect_ensemble(lat4)


def test_matching_count_L4(lat4):
    # 272 coverings of the 4x4 torus, a frozen reference count
    assert matching_count(lat4) == 272


def test_matchings_are_perfect(lat4):
    for matching in enumerate_matchings(lat4):
        sites = []
        for b in matching.bonds:
            bond = lat4.bond_from_id(b)
            sites.append(lat4.site_index(bond.x))
            sites.append(lat4.site_index(lat4.neighbor(bond.x, bond.j)))
        assert sorted(sites) == list(range(lat4.n_sites))


def test_budget_guard():
    with pytest.raises(BudgetExceeded):
        collect_ensemble(build_torus(10), budget=10_000)


def test_ensemble_bookkeeping(ens4, lat4):
    assert ens4.n_matchings == 272
    # every matching uses exactly n_sites/2 bonds, split into h/v counts
    n_h = ens4.occ[:, 0::2].sum(axis=1)
    assert np.all(ens4.occ.sum(axis=1) == lat4.n_sites // 2)
    assert np.all(n_h == ens4.n_plus + ens4.n_minus)
    # winding sectors are symmetric under negation
    sec = {}
    for t1, t2 in zip(ens4.T1, ens4.T2):
        sec[(t1, t2)] = sec.get((t1, t2), 0) + 1
    for (t1, t2), c in sec.items():
        assert sec[(-t1, -t2)] == c
    assert sec[(0, 0)] == 132


def test_weights_free_point(ens4):
    w = ens4.weights(0.0, 0.0)
    assert np.all(w == 1.0)
    assert float(np.sum(w)) == 272.0
    w = ens4.weights(0.0, 0.3)
    assert np.allclose(w, 1.3 ** ens4.n_plus * 0.7 ** ens4.n_minus)


def test_coupling_derivative_is_pair_count(ens4):
    # d/d lambda log Z = <W>, checked by central difference
    lam, h, m = 0.15, 1e-5, 0.1

    def logz(l):
        return math.log(float(np.sum(ens4.weights(l, m))))

    fd = (logz(lam + h) - logz(lam - h)) / (2 * h)
    mean_w = ens4.expectation(ens4.W.astype(float), lam, m)
    assert fd == pytest.approx(mean_w, abs=1e-7)


def test_expectation_and_indicator_product(ens4, lat4):
    b1 = lat4.bond_id((0, 0), 1)
    b2 = lat4.bond_id((1, 0), 2)
    obs = indicator_product(ens4, [b1, b2])
    direct = (ens4.occ[:, b1] * ens4.occ[:, b2]).astype(float)
    assert np.array_equal(obs, direct)
    got = exact_interacting_expectation(lat4, [b1, b2], lam=0.2, m=0.1)
    w = ens4.weights(0.2, 0.1)
    assert got == pytest.approx(float(np.sum(w * direct) / np.sum(w)),
                                rel=1e-12)


def test_interacting_cumulant_reduces_to_covariance(ens4, lat4):
    groups = [[lat4.bond_id((0, 0), 1)], [lat4.bond_id((0, 1), 1)]]
    got = exact_interacting_cumulant(lat4, groups, lam=0.3, m=0.0)
    a = ens4.occ[:, lat4.bond_id((0, 0), 1)].astype(float)
    b = ens4.occ[:, lat4.bond_id((0, 1), 1)].astype(float)
    w = ens4.weights(0.3, 0.0)
    z = float(np.sum(w))
    want = (float(np.sum(w * a * b)) / z
            - float(np.sum(w * a)) * float(np.sum(w * b)) / z ** 2)
    assert got == pytest.approx(want, rel=1e-12)


def test_moment_tables_match_direct_sums(ens4, lat4):
    tables = dimer_moment_tables(lat4, [0.0, 0.2])
    rng = np.random.default_rng(2)
    w = ens4.weights(0.0, 0.2)
    z = float(np.sum(w))
    for _ in range(25):
        ids = rng.choice(lat4.n_bonds, size=rng.integers(1, 4), replace=False)
        got = lookup_moment(tables[0.2], ids)
        direct = float(np.sum(w * np.prod(ens4.occ[:, ids], axis=1))) / z
        assert got == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_height_observable_matches_path_sum(ens4, lat4):
    path = DualPath.from_waypoints([(0, 0), (2, 0)])
    obs = height_observable(ens4, path)
    ids = path.bond_ids(lat4)
    sig = path.sigmas()
    # quarter units: increment 4*(1_b - 1/4) * sigma_b per crossing
    direct = (4 * ens4.occ[:, ids].astype(int) - 1) @ sig
    assert np.allclose(obs, direct)
    assert obs.dtype.kind == "i"
