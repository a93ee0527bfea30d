"""Height function of a dimer configuration and its exact cumulants.

Crossing a bond on a dual step changes the height by (4 * 1_b - 1) * sigma_b
quarter units, with sigma_b the orientation sign tabulated in the lattice
module.  Heights are stored as integers in quarter units; statistical
cumulants are reported for the physical height (quarters / 4), where the
additive constants cancel and the increment per bond is (1_b - 1/4) sigma_b.

Infinite-volume cumulants of height differences are evaluated by the
fermion-loop trace formula.  For bond-disjoint path representations
P_1 ... P_n of the same height difference,

    kappa_n = (-1)^n (-1/2) sum over cyclic orderings of
              tr( M_{1 pi(2)} M_{pi(2) pi(3)} ... M_{pi(n) 1} )

with  M_{ab} = G_{ab} D_b,  G_{ab}[2i+s, 2j+t] = g(leg_s(i), leg_t(j))
over the legs of the bonds of paths a and b, and D_b the block-diagonal
matrix of sigma_i w_i [[0, 1], [-1, 0]] over the bonds i of path b (w_i the
Kasteleyn entry of bond i).  The formula is the Wick expansion of the joint
indicator cumulants resummed along fermion loops; it needs every pair of
paths to be bond-disjoint, which build_paths guarantees by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations, product

import numpy as np

from .freecorr import FiniteCorrelator, cumulant_from_moments
from .kasteleyn import InfinitePropagator
from .lattice import (_STEPS, DualPath, TorusLattice, _crossing_for_step,
                      bond_weight, build_paths, winding_loops)


def brick_wall(lat: TorusLattice) -> np.ndarray:
    """Reference matching: horizontal dimers out of every even column."""
    occ = np.zeros(lat.n_bonds, dtype=np.uint8)
    for s in range(lat.n_sites):
        x1, x2 = lat.coords[s]
        if x1 % 2 == 0:
            occ[2 * s] = 1
    return occ


def height_field(lat: TorusLattice, occ: np.ndarray) -> np.ndarray:
    """Quarter-unit heights on all faces, anchored to 0 at face (0, 0).

    Filled by breadth-first traversal of the dual graph; each dual step adds
    (4 * 1_b - 1) * sigma_b.  Well-defined because every elementary dual loop
    around a vertex picks up zero from any perfect matching.
    """
    L = lat.L
    h = np.zeros(lat.n_sites, dtype=np.int64)
    seen = np.zeros(lat.n_sites, dtype=bool)
    root = lat.site_index((0, 0))
    seen[root] = True
    queue = [(0, 0)]
    occ = np.asarray(occ)
    while queue:
        f = queue.pop(0)
        fi = lat.site_index(f)
        for d in _STEPS:
            g = lat.wrap_pt((f[0] + d[0], f[1] + d[1]))
            gi = lat.site_index(g)
            if seen[gi]:
                continue
            cr = _crossing_for_step(f, d)
            b = lat.bond_id(lat.wrap_pt(cr.v), cr.j)
            h[gi] = h[fi] + (4 * int(occ[b]) - 1) * cr.sigma
            seen[gi] = True
            queue.append(g)
    return h


def height_difference(lat: TorusLattice, occ: np.ndarray, path: DualPath) -> int:
    """h(end) - h(start) in quarter units along a dual path."""
    ids = path.bond_ids(lat)
    sig = path.sigmas()
    occ = np.asarray(occ)
    return int(np.sum((4 * occ[ids].astype(np.int64) - 1) * sig))


@dataclass(frozen=True)
class WindingPeriods:
    """Height increments around the two torus cycles, in quarter units."""
    t1: int
    t2: int

    def as_tuple(self):
        return (self.t1, self.t2)


def winding(lat: TorusLattice, occ: np.ndarray) -> WindingPeriods:
    """Quarter-unit height periods along the canonical cycles."""
    l1, l2 = winding_loops(lat)
    return WindingPeriods(height_difference(lat, occ, l1),
                          height_difference(lat, occ, l2))


# --- exact cumulants of height differences ---------------------------------------


def _path_data(path: DualPath, m: float):
    """Per-bond legs (raw coordinates), Kasteleyn entries, and signs."""
    legs = []
    w = []
    sig = []
    for cr in path.crossings:
        v = (int(cr.v[0]), int(cr.v[1]))
        if cr.j == 1:
            legs.append((v, (v[0] + 1, v[1])))
        else:
            legs.append((v, (v[0], v[1] + 1)))
        t = bond_weight(v, cr.j, m)
        w.append(t if cr.j == 1 else 1j * t)
        sig.append(float(cr.sigma))
    return legs, np.array(w, dtype=complex), np.array(sig)


def _leg_coords(legs) -> np.ndarray:
    out = np.empty((2 * len(legs), 2), dtype=np.int64)
    for i, (x, y) in enumerate(legs):
        out[2 * i] = x
        out[2 * i + 1] = y
    return out


def _g_block(prop: InfinitePropagator, ca: np.ndarray, cb: np.ndarray) -> np.ndarray:
    """Matrix of propagator values g(leg_a, leg_b) over two leg lists."""
    d1 = ca[:, 0][:, None] - cb[None, :, 0]
    d2 = ca[:, 1][:, None] - cb[None, :, 1]
    G = np.asarray(prop.A_at(d1, d2), dtype=complex)
    if prop.Bwin is not None:
        sgn = 1.0 - 2.0 * (cb[:, 0] % 2)
        G = G + sgn[None, :] * np.asarray(prop.B_at(d1, d2))
    return G


def _check_disjoint_paths(paths):
    for a in range(len(paths)):
        for b in range(a + 1, len(paths)):
            if paths[a].bond_set() & paths[b].bond_set():
                raise ValueError(
                    "paths %d and %d share a bond; the trace formula "
                    "requires bond-disjoint representations" % (a, b))


def exact_height_cumulant(n: int, xi, eta, prop: InfinitePropagator,
                          paths=None) -> float:
    """n-th cumulant of h(eta) - h(xi) in the infinite free state.

    Uses n bond-disjoint dual path representations (built on demand for
    endpoints separated along axis 1 by an even distance >= 4; pass paths
    explicitly for other geometries).
    """
    if paths is None:
        paths = build_paths(xi, eta, n)
    if len(paths) != n:
        raise ValueError("need exactly n paths")
    _check_disjoint_paths(paths)

    data = [_path_data(p, prop.m) for p in paths]
    if n == 1:
        legs, w, sig = data[0]
        total = 0.0
        for (x, y), wi, si in zip(legs, w, sig):
            mom = -(wi * prop.g(x, y)).real
            total += si * (mom - 0.25)
        return total

    coords = [_leg_coords(d[0]) for d in data]
    Dmats = []
    for legs, w, sig in data:
        ell = len(legs)
        D = np.zeros((2 * ell, 2 * ell), dtype=complex)
        for i in range(ell):
            c = sig[i] * w[i]
            D[2 * i, 2 * i + 1] = c
            D[2 * i + 1, 2 * i] = -c
        Dmats.append(D)

    M = {}
    for a in range(n):
        for b in range(n):
            if a != b:
                M[a, b] = _g_block(prop, coords[a], coords[b]) @ Dmats[b]

    total = 0.0 + 0.0j
    for perm in permutations(range(1, n)):
        order = (0,) + perm
        prod = M[order[0], order[1]]
        for i in range(1, n):
            prod = prod @ M[order[i], order[(i + 1) % n]]
        total += np.trace(prod)
    val = (-1.0) ** n * (-0.5) * total
    if abs(val.imag) > 1e-9 * abs(val.real) + 1e-12:
        raise ArithmeticError("height cumulant has a phase: %r" % val)
    return float(val.real)


def finite_height_cumulant(lat: TorusLattice, m: float, paths,
                           correlator: FiniteCorrelator = None) -> float:
    """Joint cumulant of the height differences along the given disjoint
    paths on the torus, by multilinear expansion over four-flavor moments.

    Exact but exponential in the total path length; intended for small
    lattices as an oracle for the trace formula.
    """
    _check_disjoint_paths(paths)
    fc = correlator if correlator is not None else FiniteCorrelator(lat, m)
    n = len(paths)
    if n == 1:
        total = 0.0
        for cr in paths[0].crossings:
            mom = fc.moment([((int(cr.v[0]), int(cr.v[1])), cr.j)])
            total += cr.sigma * (mom - 0.25)
        return total
    bonds = [[((int(cr.v[0]), int(cr.v[1])), cr.j) for cr in p.crossings]
             for p in paths]
    sigs = [[cr.sigma for cr in p.crossings] for p in paths]
    total = 0.0
    for combo in product(*[range(len(b)) for b in bonds]):
        coef = 1.0
        groups = []
        for a in range(n):
            coef *= sigs[a][combo[a]]
            groups.append([bonds[a][combo[a]]])
        total += coef * cumulant_from_moments(
            groups, lambda blocks: fc.moment([b for g in blocks for b in g]))
    return total


def height_variance_series(prop: InfinitePropagator, r_values) -> np.ndarray:
    """Var[h(r, 0) - h(0, 0)] for even separations via two disjoint paths."""
    out = []
    for r in r_values:
        out.append(exact_height_cumulant(2, (0, 0), (int(r), 0), prop))
    return np.array(out)


def gaussian_electric_series(prop: InfinitePropagator, alpha: float,
                             r_values, variances=None) -> np.ndarray:
    """<exp(i alpha (h(r) - h(0)))> in the Gaussian approximation
    exp(-alpha^2 Var / 2); the mean height difference vanishes."""
    var = (height_variance_series(prop, r_values)
           if variances is None else np.asarray(variances))
    return np.exp(-0.5 * alpha ** 2 * var)
