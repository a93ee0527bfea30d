"""Brute-force dimer ensembles on small tori.

Perfect matchings are enumerated by backtracking on the first uncovered site
in row-major order, so every matching appears exactly once.  A collected
ensemble stores, per matching, the sorted dimer bond ids plus the sufficient
statistics (n+, n-, W, T1, T2): the counts of staggered-weight horizontal
dimers, the parallel-plaquette count, and the two winding numbers.  Every
interacting expectation at any (lambda, m) is then an exact finite sum, so
derivatives in the coupling can be taken without re-enumerating.

Enumeration is guarded: the exact matching count (via the free-fermion
partition sum) is checked against a budget before any walking happens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .freecorr import cumulant_from_moments
from .lattice import TorusLattice

DEFAULT_BUDGET = 2_000_000


class BudgetExceeded(RuntimeError):
    """The lattice has more matchings than the enumeration budget allows."""


@dataclass(frozen=True)
class Matching:
    """One perfect matching, as a sorted tuple of occupied bond ids."""

    bonds: tuple

    def occupancy(self, lat: TorusLattice) -> np.ndarray:
        occ = np.zeros(lat.n_bonds, dtype=np.uint8)
        occ[list(self.bonds)] = 1
        return occ


def _neighbor_table(lat: TorusLattice):
    """nbrs[u] = ((v, bond_id) over the four directions) for every site."""
    nbrs = []
    for i in range(lat.n_sites):
        x = lat.site_coord(i)
        right = lat.neighbor(x, 1, +1)
        left = lat.neighbor(x, 1, -1)
        up = lat.neighbor(x, 2, +1)
        down = lat.neighbor(x, 2, -1)
        nbrs.append((
            (lat.site_index(right), lat.bond_id(x, 1)),
            (lat.site_index(left), lat.bond_id(left, 1)),
            (lat.site_index(up), lat.bond_id(x, 2)),
            (lat.site_index(down), lat.bond_id(down, 2)),
        ))
    return nbrs


def _walk(lat: TorusLattice, visit, budget=None):
    """Depth-first over all matchings, calling visit(dimer_id_list) per leaf."""
    n = lat.n_sites
    nbrs = _neighbor_table(lat)
    partner = [-1] * n
    dimers = []
    count = 0

    def rec(start):
        nonlocal count
        u = start
        while u < n and partner[u] >= 0:
            u += 1
        if u == n:
            count += 1
            if budget is not None and count > budget:
                raise BudgetExceeded("more than %d matchings" % budget)
            visit(dimers)
            return
        for v, b in nbrs[u]:
            if partner[v] < 0:
                partner[u] = v
                partner[v] = u
                dimers.append(b)
                rec(u + 1)
                dimers.pop()
                partner[u] = -1
                partner[v] = -1

    rec(0)
    return count


def _precheck_budget(lat: TorusLattice, budget):
    if budget is None:
        return
    from .kasteleyn import partition_function_free  # late import, avoids a cycle

    est = partition_function_free(lat, 0.0).value
    if est > budget * 1.001:
        raise BudgetExceeded(
            "L=%d has ~%.3g matchings, over the budget %d" % (lat.L, est, budget))


def enumerate_matchings(lat: TorusLattice, budget=DEFAULT_BUDGET):
    """Yield every perfect matching once, as a Matching, within budget."""
    _precheck_budget(lat, budget)
    out = []

    def visit(dimers):
        out.append(tuple(sorted(dimers)))

    # walking eagerly is fine: the budget bounds memory at ~budget tuples
    _walk(lat, visit, budget)
    for b in out:
        yield Matching(b)


@dataclass
class InteractingEnsemble:
    """Collected ensemble of a small torus with its sufficient statistics.

    dimers: (Nm, n_sites/2) sorted bond ids per matching
    occ:    (Nm, n_bonds) 0/1 occupancies
    n_plus/n_minus: horizontal dimers on even/odd starting column (weights
        (1+m) and (1-m) respectively)
    W:      parallel-pair plaquette count per matching
    T1, T2: winding numbers of the height along the two torus cycles
    """

    lat: TorusLattice
    dimers: np.ndarray
    occ: np.ndarray
    n_plus: np.ndarray
    n_minus: np.ndarray
    W: np.ndarray
    T1: np.ndarray
    T2: np.ndarray

    @property
    def n_matchings(self) -> int:
        return self.dimers.shape[0]

    def weights(self, lam: float, m: float) -> np.ndarray:
        """Gibbs weight of every matching at coupling lambda and mass m."""
        w = (1.0 + m) ** self.n_plus * (1.0 - m) ** self.n_minus
        if lam != 0.0:
            w = w * np.exp(lam * self.W)
        return w

    def sector_mask(self, sector=None) -> np.ndarray:
        if sector is None:
            return np.ones(self.n_matchings, dtype=bool)
        t1, t2 = sector
        return (self.T1 == t1) & (self.T2 == t2)

    def expectation(self, obs: np.ndarray, lam: float, m: float,
                    sector=None) -> float:
        """<obs> with obs a per-matching vector; exact ratio of finite sums."""
        w = self.weights(lam, m)
        keep = self.sector_mask(sector)
        num = math.fsum((w * obs)[keep])
        den = math.fsum(w[keep])
        return num / den


_ENSEMBLE_CACHE = {}


def collect_ensemble(lat: TorusLattice, budget=DEFAULT_BUDGET) -> InteractingEnsemble:
    """Enumerate once and cache the full ensemble for this lattice size."""
    if lat.L in _ENSEMBLE_CACHE:
        return _ENSEMBLE_CACHE[lat.L]
    _precheck_budget(lat, budget)
    rows = []

    def visit(dimers):
        rows.append(sorted(dimers))

    _walk(lat, visit, budget)
    dimers = np.array(rows, dtype=np.int64)
    nm = dimers.shape[0]
    occ = np.zeros((nm, lat.n_bonds), dtype=np.uint8)
    occ[np.arange(nm)[:, None], dimers] = 1

    x1 = lat.coords[:, 0]
    h_even = np.zeros(lat.n_bonds, dtype=bool)
    h_odd = np.zeros(lat.n_bonds, dtype=bool)
    h_even[0::2] = x1 % 2 == 0
    h_odd[0::2] = x1 % 2 != 0
    n_plus = occ[:, h_even].sum(axis=1).astype(np.int64)
    n_minus = occ[:, h_odd].sum(axis=1).astype(np.int64)

    tab = lat.plaquette_table()
    o64 = occ.astype(np.int64)
    W = (o64[:, tab[:, 0]] * o64[:, tab[:, 1]]
         + o64[:, tab[:, 2]] * o64[:, tab[:, 3]]).sum(axis=1)

    from .lattice import winding_loops

    l1, l2 = winding_loops(lat)
    T1 = o64[:, l1.bond_ids(lat)] @ l1.sigmas()
    T2 = o64[:, l2.bond_ids(lat)] @ l2.sigmas()

    ens = InteractingEnsemble(lat, dimers, occ, n_plus, n_minus, W, T1, T2)
    _ENSEMBLE_CACHE[lat.L] = ens
    return ens


def matching_count(lat: TorusLattice, budget=DEFAULT_BUDGET) -> int:
    return collect_ensemble(lat, budget).n_matchings


def indicator_product(ens: InteractingEnsemble, bonds) -> np.ndarray:
    """Per-matching product of bond indicators (repeats collapse)."""
    obs = np.ones(ens.n_matchings, dtype=np.float64)
    for b in set(int(b) for b in bonds):
        obs *= ens.occ[:, b]
    return obs


def exact_interacting_expectation(lat: TorusLattice, bonds, lam: float,
                                  m: float, sector=None,
                                  budget=DEFAULT_BUDGET) -> float:
    """<prod_b 1_b> at coupling lambda, mass m, by exhaustive summation."""
    ens = collect_ensemble(lat, budget)
    return ens.expectation(indicator_product(ens, bonds), lam, m, sector)


def exact_interacting_cumulant(lat: TorusLattice, groups, lam: float, m: float,
                               sector=None, budget=DEFAULT_BUDGET) -> float:
    """Truncated correlation of bond-product observables, exactly.

    groups is a list of bond-id tuples; each group is one observable
    (the product of its indicators).
    """
    ens = collect_ensemble(lat, budget)

    def moment_fn(blocks):
        bonds = [b for group in blocks for b in group]
        return ens.expectation(indicator_product(ens, bonds), lam, m, sector)

    return cumulant_from_moments(groups, moment_fn)


def height_observable(ens: InteractingEnsemble, path) -> np.ndarray:
    """Per-matching height difference along a dual path, in quarter units.

    Returns integers: 4 * sum_b (1_b - 1/4) sigma_b.  The m = 0 reference
    occupancy 1/4 is built in, which is the convention everywhere heights
    are treated as exact quarter integers.
    """
    ids = path.bond_ids(ens.lat)
    sig = path.sigmas()
    return 4 * (ens.occ[:, ids].astype(np.int64) @ sig) - int(sig.sum())


def dimer_moment_tables(lat: TorusLattice, m_values, budget=DEFAULT_BUDGET):
    """Dense sums S_k over matchings of weight * indicator products, k <= 3.

    Returns dict m -> (Z, S1, S2, S3) where S1[b], S2[i*NB+j], S3 over sorted
    triples (flat key (i*NB+j)*NB+k, i<j<k) hold sum_M w(M) 1_..., enough to
    check every 1-, 2-, 3-point moment at lambda = 0 in one pass.
    """
    ens = collect_ensemble(lat, budget)
    nb = lat.n_bonds
    nm, nd = ens.dimers.shape
    pairs = np.array(list(combinations(range(nd), 2)), dtype=np.int64)
    trips = np.array(list(combinations(range(nd), 3)), dtype=np.int64)
    out = {}
    for m in m_values:
        w = ens.weights(0.0, m)
        Z = math.fsum(w)
        S1 = np.zeros(nb)
        S2 = np.zeros(nb * nb)
        S3 = np.zeros(nb * nb * nb)
        chunk = max(1, 2_000_000 // max(len(trips), 1))
        for lo in range(0, nm, chunk):
            hi = min(nm, lo + chunk)
            d = ens.dimers[lo:hi]
            wc = w[lo:hi]
            S1 += np.bincount(d.ravel(),
                              np.repeat(wc, nd), minlength=nb)
            k2 = d[:, pairs[:, 0]] * nb + d[:, pairs[:, 1]]
            S2 += np.bincount(k2.ravel(),
                              np.repeat(wc, len(pairs)), minlength=nb * nb)
            k3 = (d[:, trips[:, 0]] * nb + d[:, trips[:, 1]]) * nb + d[:, trips[:, 2]]
            S3 += np.bincount(k3.ravel(),
                              np.repeat(wc, len(trips)), minlength=nb ** 3)
        out[m] = (Z, S1, S2, S3)
    return out


def lookup_moment(tables_entry, bonds) -> float:
    """Moment <prod 1_b> from a dense table entry; bonds sorted and deduped."""
    Z, S1, S2, S3 = tables_entry
    b = sorted(set(int(x) for x in bonds))
    nb = len(S1)
    if len(b) == 0:
        return 1.0
    if len(b) == 1:
        return S1[b[0]] / Z
    if len(b) == 2:
        return S2[b[0] * nb + b[1]] / Z
    if len(b) == 3:
        return S3[(b[0] * nb + b[1]) * nb + b[2]] / Z
    raise ValueError("dense tables go up to triples")
