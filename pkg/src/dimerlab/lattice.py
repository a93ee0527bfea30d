"""Square-lattice torus geometry: sites, bonds, plaquettes, dual paths.

Coordinates x = (x1, x2) live in the window {-L/2+1, ..., L/2} with L even.
Sites are indexed left to right along each row, starting from the bottom row,
so index = (x2 - x2min)*L + (x1 - x1min).  A bond is (x, x + e_j) with
j = 1 (horizontal) or j = 2 (vertical), identified by the site it starts
from; bond id = 2*site_index + (j - 1).  A site is white when x1 + x2 is
even.  Faces (plaquettes) are labelled by their lower-left corner, so the
face whose center is (1/2, 1/2) is face (0, 0); that face is the height
reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _check_L(L):
    if L % 2 != 0 or L < 4:
        raise ValueError("L must be even and >= 4, got %r" % (L,))


@dataclass(frozen=True)
class Bond:
    """Bond from site x to x + e_j (coordinates already wrapped)."""

    x: tuple
    j: int

    def sites(self):
        return self.x, (self.x[0] + (self.j == 1), self.x[1] + (self.j == 2))


class TorusLattice:
    """Even-L periodic square lattice with the staggered bond weights.

    Horizontal bonds starting at x carry weight 1 + m*(-1)^x1, vertical
    bonds weight 1; m is passed per call, the lattice itself is weight-free.
    """

    def __init__(self, L: int):
        _check_L(L)
        self.L = L
        self.n_sites = L * L
        self.n_bonds = 2 * L * L
        self.cmin = 1 - L // 2
        self.cmax = L // 2
        # coords[i] = (x1, x2) for flat site index i
        xs = np.arange(self.cmin, self.cmax + 1)
        X1, X2 = np.meshgrid(xs, xs, indexing="xy")
        self.coords = np.stack([X1.ravel(), X2.ravel()], axis=1)  # row-major by x2

    # --- coordinate helpers -------------------------------------------------

    def wrap(self, c: int) -> int:
        """Map an integer coordinate into the fundamental window."""
        return (c - self.cmin) % self.L + self.cmin

    def wrap_pt(self, x):
        return (self.wrap(x[0]), self.wrap(x[1]))

    def site_index(self, x) -> int:
        return (self.wrap(x[1]) - self.cmin) * self.L + (self.wrap(x[0]) - self.cmin)

    def site_coord(self, i: int):
        return (int(self.coords[i, 0]), int(self.coords[i, 1]))

    def is_white(self, x) -> bool:
        return (x[0] + x[1]) % 2 == 0

    def neighbor(self, x, j: int, sign: int = +1):
        if j == 1:
            return self.wrap_pt((x[0] + sign, x[1]))
        return self.wrap_pt((x[0], x[1] + sign))

    # --- bonds --------------------------------------------------------------

    def bond_id(self, x, j: int) -> int:
        return 2 * self.site_index(x) + (j - 1)

    def bond_from_id(self, b: int) -> Bond:
        i, r = divmod(b, 2)
        return Bond(self.site_coord(i), r + 1)

    def crosses_boundary(self, x, j: int) -> bool:
        """True when bond (x, x+e_j) wraps around the torus."""
        return x[j - 1] == self.cmax

    def bond_weights(self, m: float) -> np.ndarray:
        """Vector of t_b over bond ids: 1 + m*(-1)^x1 on horizontal bonds."""
        t = np.ones(self.n_bonds)
        x1 = self.coords[:, 0]
        t[0::2] = 1.0 + m * ((-1.0) ** x1)
        return t

    # --- plaquettes ---------------------------------------------------------

    def plaquette_bonds(self, f):
        """Bond ids (bottom, top, left, right) of the face at lower-left f."""
        f = self.wrap_pt(f)
        bottom = self.bond_id(f, 1)
        top = self.bond_id((f[0], f[1] + 1), 1)
        left = self.bond_id(f, 2)
        right = self.bond_id((f[0] + 1, f[1]), 2)
        return bottom, top, left, right

    def plaquette_table(self) -> np.ndarray:
        """(n_sites, 4) array of (bottom, top, left, right) bond ids per face."""
        tab = np.empty((self.n_sites, 4), dtype=np.int64)
        for i in range(self.n_sites):
            tab[i] = self.plaquette_bonds(self.site_coord(i))
        return tab

    def parallel_pair_count(self, occ: np.ndarray) -> int:
        """W(M): number of faces carrying two parallel dimers.

        occ is the 0/1 occupancy vector over bond ids.  The horizontal and
        vertical pair on one face are mutually exclusive in a matching, so
        the sum of both products counts each face at most once.
        """
        tab = self._ptab()
        o = occ.astype(np.int64)
        h = o[tab[:, 0]] * o[tab[:, 1]]
        v = o[tab[:, 2]] * o[tab[:, 3]]
        return int(np.sum(h + v))

    def _ptab(self):
        tab = getattr(self, "_ptab_cache", None)
        if tab is None:
            tab = self.plaquette_table()
            self._ptab_cache = tab
        return tab


def build_torus(L: int) -> TorusLattice:
    """Construct the L x L torus lattice (L even, >= 4)."""
    return TorusLattice(L)


def bond_weight(x, j: int, m: float) -> float:
    """Weight t_b of the bond (x, x+e_j): 1 + m*(-1)^x1 if horizontal, else 1."""
    if j == 1:
        return 1.0 + m * ((-1.0) ** (x[0] % 2))
    return 1.0


# --- dual paths ---------------------------------------------------------------

# Step directions on the dual lattice (face to adjacent face).
_STEPS = {
    (1, 0): "R",
    (-1, 0): "L",
    (0, 1): "U",
    (0, -1): "D",
}


@dataclass(frozen=True)
class Crossing:
    """One dual step's crossing record.

    v, j identify the crossed bond (v, v+e_j) in raw (unwrapped) coordinates.
    alpha is +1 when the bond is crossed in the positive direction (upwards
    across horizontal bonds, rightwards across vertical bonds), sigma is the
    height-increment sign alpha*(-1)^(v1+v2)*(-1)^j, and dz is the complex
    displacement of the dual step (i*alpha horizontal, alpha vertical).
    """

    v: tuple
    j: int
    alpha: int
    sigma: int
    dz: complex


def _crossing_for_step(f, d):
    """Crossing record for the dual step from face f by displacement d."""
    f1, f2 = f
    if d == (1, 0):
        v, j, alpha = (f1 + 1, f2), 2, +1
        dz = 1 + 0j
    elif d == (-1, 0):
        v, j, alpha = (f1, f2), 2, -1
        dz = -1 + 0j
    elif d == (0, 1):
        v, j, alpha = (f1, f2 + 1), 1, +1
        dz = 1j
    elif d == (0, -1):
        v, j, alpha = (f1, f2), 1, -1
        dz = -1j
    else:
        raise ValueError("not a unit dual step: %r" % (d,))
    sigma = alpha * ((-1) ** (v[0] + v[1])) * ((-1) ** j)
    return Crossing(v, j, alpha, sigma, dz)


@dataclass
class DualPath:
    """Oriented path on the dual lattice from face start to face end.

    Stored in raw (unwrapped) coordinates; finite-volume consumers wrap the
    bond coordinates themselves.  crossings[k] describes the bond crossed by
    the k-th step.
    """

    start: tuple
    faces: list = field(default_factory=list)  # visited faces incl. start
    crossings: list = field(default_factory=list)

    @property
    def end(self):
        return self.faces[-1]

    def __len__(self):
        return len(self.crossings)

    @classmethod
    def from_steps(cls, start, steps) -> "DualPath":
        f = tuple(start)
        faces = [f]
        crossings = []
        for d in steps:
            crossings.append(_crossing_for_step(f, d))
            f = (f[0] + d[0], f[1] + d[1])
            faces.append(f)
        return cls(tuple(start), faces, crossings)

    @classmethod
    def from_waypoints(cls, waypoints) -> "DualPath":
        """Rasterize a polyline whose legs are axis-aligned displacements."""
        steps = []
        for a, b in zip(waypoints[:-1], waypoints[1:]):
            d1, d2 = b[0] - a[0], b[1] - a[1]
            if d1 != 0 and d2 != 0:
                raise ValueError("legs must be axis-aligned: %r -> %r" % (a, b))
            if d1:
                steps += [(np.sign(d1), 0)] * abs(d1)
            if d2:
                steps += [(0, np.sign(d2))] * abs(d2)
        steps = [(int(a), int(b)) for a, b in steps]
        return cls.from_steps(waypoints[0], steps)

    def bond_ids(self, lat: TorusLattice) -> np.ndarray:
        return np.array([lat.bond_id(lat.wrap_pt(c.v), c.j) for c in self.crossings],
                        dtype=np.int64)

    def sigmas(self) -> np.ndarray:
        return np.array([c.sigma for c in self.crossings], dtype=np.int64)

    def bond_set(self):
        """Set of crossed bonds as raw ((v1, v2), j) keys; repeats collapse."""
        return {(c.v, c.j) for c in self.crossings}

    def extent(self) -> int:
        """Max Chebyshev distance of any visited face from the start."""
        s1, s2 = self.start
        return max(max(abs(f[0] - s1), abs(f[1] - s2)) for f in self.faces)


def _even_up(v: int) -> int:
    v = int(v)
    return v if v % 2 == 0 else v + 1


def _departure_staircase(up: bool, k: int):
    """Staircase from xi: (vertical 4, left 2) x (k-1) then a final vertical 4.

    Leaves through the north (or south) side of xi, ends moving vertically at
    height 4k with horizontal drift -2(k-1); slope ~ 2, so the departure
    angle approximates 2pi/3 (or 4pi/3) for k of a few.
    """
    vert = (0, 1) if up else (0, -1)
    steps = []
    for _ in range(k - 1):
        steps += [vert] * 4 + [(-1, 0)] * 2
    return steps + [vert] * 4


def _arrival_staircase(down: bool, k: int):
    """Mirror piece dropping (or rising) 4k into eta, drift -2(k-1)."""
    vert = (0, -1) if down else (0, 1)
    steps = []
    for _ in range(k - 1):
        steps += [vert] * 4 + [(-1, 0)] * 2
    return steps + [vert] * 4


def build_paths(xi, eta, n: int, L=None):
    """n pairwise bond-disjoint dual paths from face xi to face eta.

    The paths leave xi (and reach eta) through different plaquette sides,
    all straight runs have even length, and away from the endpoints the
    paths are separated by a distance growing with |eta - xi|.  Currently
    the target displacement must be along the first axis with even length
    >= 4 (the production geometry); n in {1, 2, 3, 4}.

    When L is given, every path must fit in a torus window of half-width
    L/2 around xi; violation raises ValueError.
    """
    xi = (int(xi[0]), int(xi[1]))
    eta = (int(eta[0]), int(eta[1]))
    if n not in (1, 2, 3, 4):
        raise ValueError("n must be in {1,2,3,4}")
    R = eta[0] - xi[0]
    if eta[1] != xi[1] or R < 4 or R % 2:
        raise ValueError("need eta = xi + (R, 0) with even R >= 4")

    paths = []
    straight = DualPath.from_waypoints([xi, eta])
    if n == 1:
        paths = [straight]
    elif n == 2:
        # second path leaves in the opposite direction and arcs over the top
        D = _even_up(R // 2)
        arc = DualPath.from_waypoints([
            xi, (xi[0] - D, xi[1]), (xi[0] - D, xi[1] + D),
            (eta[0] + D, eta[1] + D), (eta[0] + D, eta[1]), eta,
        ])
        paths = [straight, arc]
    elif n == 3:
        # slanted staircases above and below, mutual departure angles near 2pi/3
        k = max(1, R // 8)
        mid_len = R + 4 * (k - 1)
        upper = (_departure_staircase(True, k) + [(1, 0)] * mid_len
                 + _arrival_staircase(True, k))
        lower = (_departure_staircase(False, k) + [(1, 0)] * mid_len
                 + _arrival_staircase(False, k))
        paths = [straight,
                 DualPath.from_steps(xi, upper),
                 DualPath.from_steps(xi, lower)]
    else:
        # departure directions +x, +y, -x, -y: exactly the four face sides
        D1 = _even_up(R // 2)
        D2 = D1 + 2
        D = D1
        over = DualPath.from_waypoints([
            xi, (xi[0], xi[1] + D1), (eta[0], eta[1] + D1), eta,
        ])
        around = DualPath.from_waypoints([
            xi, (xi[0] - D, xi[1]), (xi[0] - D, xi[1] + D2),
            (eta[0] + D, eta[1] + D2), (eta[0] + D, eta[1]), eta,
        ])
        under = DualPath.from_waypoints([
            xi, (xi[0], xi[1] - D1), (eta[0], eta[1] - D1), eta,
        ])
        paths = [straight, over, around, under]

    for p in paths:
        if p.end != eta:
            raise AssertionError("path construction missed eta: %r" % (p.end,))
    _check_disjoint(paths)
    if L is not None:
        _check_L(L)
        for p in paths:
            if p.extent() >= L // 2:
                raise ValueError(
                    "path extent %d does not fit on torus of size %d" % (p.extent(), L))
        # wrapped bond sets must stay disjoint too
        lat = TorusLattice(L)
        seen = set()
        for p in paths:
            ids = set(p.bond_ids(lat).tolist())
            if len(ids) != len(p) or ids & seen:
                raise ValueError("paths collide after wrapping on L=%d" % L)
            seen |= ids
    return paths


def _check_disjoint(paths):
    seen = set()
    for p in paths:
        bonds = p.bond_set()
        if len(bonds) != len(p):
            raise AssertionError("path crosses one of its own bonds twice")
        if bonds & seen:
            raise AssertionError("paths share a bond")
        seen |= bonds


def winding_loops(lat: TorusLattice):
    """The two canonical non-contractible dual loops (as DualPath).

    Loop 1 runs along +e1 through the faces (f1, 0), loop 2 along +e2
    through (0, f2); both start and end at face (0, 0) after unwrapping.
    """
    l1 = DualPath.from_steps((0, 0), [(1, 0)] * lat.L)
    l2 = DualPath.from_steps((0, 0), [(0, 1)] * lat.L)
    return l1, l2
