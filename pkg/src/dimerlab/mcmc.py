"""Plaquette-flip Metropolis sampling of the interacting dimer ensemble.

State: one partner-direction code per site (0:+x, 1:-x, 2:+y, 3:-y) on the
0-based grid c = x - cmin, site index c2 * L + c1.  A face is flippable when
its two horizontal or two vertical bonds are occupied; flipping exchanges
the pair.  Flips preserve the winding sector, so a chain started from the
brick wall samples the (0, 0) sector exclusively.

Updates run in sequential checkerboard order: even-parity faces in row-major
order, then odd-parity faces.  Adjacent same-parity faces interact through
the coupling, so faces are visited one at a time rather than flipped
simultaneously.  Flips use heat-bath acceptance x / (1 + x) with
x = e^{lambda dW} * T, where dW in [-4, 4] is the parallel-pair count
change on the four edge-adjacent faces and T the staggered-weight ratio
(horizontal pairs at column x1 carry weight (1 + m (-1)^{x1})^2).
Metropolis acceptance min(1, x) would be deterministic at the free point
(every flippable face flips, the sweep just shifts the brick wall), so the
lazier heat-bath rule is required for ergodicity under sequential scan.

Each sweep consumes exactly L^2 uniforms drawn as one block from a PCG64
generator, so sample streams are bit-identical for identical (seed, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .lattice import TorusLattice, build_torus


@dataclass(frozen=True)
class ChainConfig:
    L: int
    lam: float
    m: float = 0.0
    seed: int = 0
    sweeps: int = 100_000
    burnin: int = 10_000
    thin: int = 10
    sector: tuple = (0, 0)
    chains: int = 1

    def __post_init__(self):
        if self.L % 2 or self.L < 4:
            raise ValueError("L must be even and >= 4")
        if tuple(self.sector) != (0, 0):
            raise ValueError("only the (0, 0) winding sector is sampled; "
                             "no initial state is available elsewhere")


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    stderr: float
    tau_int: float
    n_samples: int
    resolved: bool  # blocking reached a plateau


@njit(cache=True)
def _sweep_kernel(code, L, acc, th2v, tv2h, u):
    """One full sweep; returns the number of accepted flips."""
    naccept = 0
    idx = 0
    for parity in range(2):
        for c2 in range(L):
            c1 = (parity + c2) % 2
            while c1 < L:
                s = c2 * L + c1
                c1r = c1 + 1
                if c1r == L:
                    c1r = 0
                c2u = c2 + 1
                if c2u == L:
                    c2u = 0
                s10 = c2 * L + c1r
                s01 = c2u * L + c1
                s11 = c2u * L + c1r
                r = u[idx]
                idx += 1
                horiz = code[s] == 0 and code[s01] == 0
                vert = code[s] == 2 and code[s10] == 2
                if horiz or vert:
                    # pair counts on the four edge-adjacent faces, before
                    c1l = c1 - 1
                    if c1l < 0:
                        c1l = L - 1
                    c2d = c2 - 1
                    if c2d < 0:
                        c2d = L - 1
                    w0 = (_pair(code, L, c1l, c2) + _pair(code, L, c1r, c2)
                          + _pair(code, L, c1, c2d) + _pair(code, L, c1, c2u))
                    if horiz:
                        code[s] = 2
                        code[s10] = 2
                        code[s01] = 3
                        code[s11] = 3
                    else:
                        code[s] = 0
                        code[s01] = 0
                        code[s10] = 1
                        code[s11] = 1
                    w1 = (_pair(code, L, c1l, c2) + _pair(code, L, c1r, c2)
                          + _pair(code, L, c1, c2d) + _pair(code, L, c1, c2u))
                    t = th2v[c1 & 1] if horiz else tv2h[c1 & 1]
                    x = acc[w1 - w0 + 4] * t
                    if r * (1.0 + x) < x:
                        naccept += 1
                    else:
                        if horiz:
                            code[s] = 0
                            code[s01] = 0
                            code[s10] = 1
                            code[s11] = 1
                        else:
                            code[s] = 2
                            code[s10] = 2
                            code[s01] = 3
                            code[s11] = 3
                c1 += 2
    return naccept


@njit(cache=True, inline="always")
def _pair(code, L, c1, c2):
    """1 when face (c1, c2) holds a parallel dimer pair."""
    c1r = c1 + 1
    if c1r == L:
        c1r = 0
    c2u = c2 + 1
    if c2u == L:
        c2u = 0
    s = c2 * L + c1
    if code[s] == 0 and code[c2u * L + c1] == 0:
        return 1
    if code[s] == 2 and code[c2 * L + c1r] == 2:
        return 1
    return 0


class DimerChain:
    """One Markov chain over matchings of an L x L torus."""

    def __init__(self, config: ChainConfig, chain_index: int = 0):
        self.config = config
        self.lat = build_torus(config.L)
        L = config.L
        self.code = np.empty(L * L, dtype=np.int8)
        # brick wall: horizontal dimers out of every even column
        cmin = self.lat.cmin
        for c1 in range(L):
            val = 0 if (cmin + c1) % 2 == 0 else 1
            self.code[np.arange(L) * L + c1] = val
        ss = np.random.SeedSequence(config.seed)
        self.rng = np.random.Generator(
            np.random.PCG64(ss.spawn(config.chains)[chain_index]))
        lam, m = config.lam, config.m
        self._acc = np.exp(lam * np.arange(-4.0, 5.0))
        t_even = (1.0 + m) ** 2   # x1 even columns
        t_odd = (1.0 - m) ** 2
        # index by c1 & 1; column parity of x1 = cmin + c1
        pe = 0 if cmin % 2 == 0 else 1  # c1 parity that gives even x1
        th2v = np.empty(2)
        tv2h = np.empty(2)
        th2v[pe], th2v[1 - pe] = 1.0 / t_even, 1.0 / t_odd
        tv2h[pe], tv2h[1 - pe] = t_even, t_odd
        self._th2v, self._tv2h = th2v, tv2h
        self.n_sweeps = 0
        self.n_accepted = 0

    def sweep(self, n: int = 1):
        for _ in range(n):
            u = self.rng.random(self.config.L ** 2)
            self.n_accepted += _sweep_kernel(
                self.code, self.config.L, self._acc,
                self._th2v, self._tv2h, u)
            self.n_sweeps += 1

    def occupancy(self) -> np.ndarray:
        """Bond occupation in lattice bond-id order (2 * site + j - 1)."""
        occ = np.zeros(self.lat.n_bonds, dtype=np.uint8)
        occ[0::2] = self.code == 0
        occ[1::2] = self.code == 2
        return occ

    def horizontal_field(self) -> np.ndarray:
        """L x L array (c2, c1) of horizontal-bond occupations."""
        return (self.code == 0).astype(np.float64).reshape(
            self.config.L, self.config.L)

    def vertical_field(self) -> np.ndarray:
        return (self.code == 2).astype(np.float64).reshape(
            self.config.L, self.config.L)

    def validate(self):
        """Check matching consistency and winding sector; raises on failure."""
        from .height import winding
        L = self.config.L
        code = self.code
        c1 = np.arange(L * L) % L
        c2 = np.arange(L * L) // L
        right = c2 * L + (c1 + 1) % L
        left = c2 * L + (c1 - 1) % L
        up = ((c2 + 1) % L) * L + c1
        down = ((c2 - 1) % L) * L + c1
        partner = np.select([code == 0, code == 1, code == 2, code == 3],
                            [right, left, up, down])
        back = partner[partner]
        if not np.all(back == np.arange(L * L)):
            raise AssertionError("partner codes are inconsistent")
        w = winding(self.lat, self.occupancy())
        if w.as_tuple() != tuple(self.config.sector):
            raise AssertionError("winding sector drifted to %r" % (w,))


def run_chain(config: ChainConfig, measurers: dict, chain_index: int = 0,
              validate_every: int = 0) -> dict:
    """Drive one chain and collect samples.

    measurers: name -> callable(DimerChain) -> float or ndarray.
    Returns name -> stacked samples over the thinned post-burn-in sweeps.
    """
    chain = DimerChain(config, chain_index)
    chain.sweep(config.burnin)
    out = {name: [] for name in measurers}
    n_meas = max(0, (config.sweeps - config.burnin) // config.thin)
    for i in range(n_meas):
        chain.sweep(config.thin)
        if validate_every and (i + 1) % validate_every == 0:
            chain.validate()
        for name, fn in measurers.items():
            out[name].append(fn(chain))
    return {name: np.array(v) for name, v in out.items()}


# --- error analysis ---------------------------------------------------------------


def estimate(samples, min_blocks: int = 32) -> EstimateWithError:
    """Mean with blocking stderr and integrated autocorrelation time.

    Bins the series at doubling block sizes while at least min_blocks
    blocks remain; the stderr is the maximum over levels (conservative) and
    the estimate is flagged unresolved when the last levels still grow.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = len(x)
    if n < 4:
        raise ValueError("need at least 4 samples")
    mean = float(np.mean(x))
    var0 = float(np.var(x, ddof=1))
    if var0 == 0.0:
        return EstimateWithError(mean, 0.0, 0.5, n, True)
    se = []
    level = x
    while len(level) >= min_blocks:
        nb = len(level)
        se.append(math.sqrt(np.var(level, ddof=1) / nb))
        level = level[: nb - nb % 2].reshape(-1, 2).mean(axis=1)
    se = np.array(se)
    k = int(np.argmax(se))
    stderr = float(se[k])
    se0 = se[0]
    tau = max(0.5, 0.5 * (stderr / se0) ** 2)
    resolved = bool(k < len(se) - 1
                    or (len(se) >= 2 and se[-1] <= 1.05 * se[-2]))
    return EstimateWithError(mean, stderr, float(tau), n, resolved)


def jackknife(samples_list, stat_fn, n_blocks: int = 32):
    """Delete-one-block jackknife for a statistic of several sample series.

    samples_list: sequence of arrays with matching first dimension.
    stat_fn(list of arrays) -> float or ndarray.
    Returns (value, stderr) with value the full-sample statistic.
    """
    n = len(samples_list[0])
    nb = min(n_blocks, n)
    edges = np.linspace(0, n, nb + 1).astype(int)
    full = stat_fn([np.asarray(s) for s in samples_list])
    reps = []
    for b in range(nb):
        sel = np.ones(n, dtype=bool)
        sel[edges[b]:edges[b + 1]] = False
        reps.append(stat_fn([np.asarray(s)[sel] for s in samples_list]))
    reps = np.array(reps)
    mean_rep = reps.mean(axis=0)
    var = (nb - 1) / nb * np.sum((reps - mean_rep) ** 2, axis=0)
    return full, np.sqrt(var)


def pair_cumulant_estimate(samples_a, samples_b,
                           n_blocks: int = 32):
    """<ab> - <a><b> with jackknife stderr over contiguous blocks."""
    def stat(arrs):
        a, b = arrs
        return float(np.mean(a * b) - np.mean(a) * np.mean(b))
    return jackknife([samples_a, samples_b], stat, n_blocks)


def correlation_maps(chain: DimerChain) -> np.ndarray:
    """Translation-averaged same-orientation products, shape (2, L, L).

    R_jj[d] = (1/L^2) sum_x o_j(x) o_j(x + d), computed with FFTs.  The
    d = 0 entry equals the mean occupation (o^2 = o for indicators), so
    the maps carry everything the connected correlator needs.
    """
    L = chain.config.L
    o1 = chain.horizontal_field()
    o2 = chain.vertical_field()
    F1 = np.fft.rfft2(o1)
    F2 = np.fft.rfft2(o2)
    R11 = np.fft.irfft2(F1 * np.conj(F1), s=(L, L)) / (L * L)
    R22 = np.fft.irfft2(F2 * np.conj(F2), s=(L, L)) / (L * L)
    return np.stack([R11, R22])


class MapAccumulator:
    """Online per-block means of correlation maps for jackknife fits.

    Streams measurements into n_blocks contiguous, equal-count blocks so a
    long run never stores per-measurement maps.  Feed it round-robin until
    done; block_means is a (n_blocks, ...) array usable directly as the
    sample stack of axis_cumulant_series or jackknife.
    """

    def __init__(self, n_blocks: int, n_total: int):
        if n_total < n_blocks:
            raise ValueError("fewer measurements than blocks")
        self.n_blocks = n_blocks
        self.per_block = n_total // n_blocks  # tail beyond nb*per is dropped
        self._sum = None
        self._count = 0
        self._filled = 0
        self._blocks = []

    def push(self, value: np.ndarray):
        if self._filled >= self.n_blocks:
            return  # tail measurements beyond the equal-count grid
        if self._sum is None:
            self._sum = np.zeros_like(np.asarray(value, dtype=float))
        self._sum += value
        self._count += 1
        if self._count == self.per_block:
            self._blocks.append(self._sum / self.per_block)
            self._sum = np.zeros_like(self._sum)
            self._count = 0
            self._filled += 1

    @property
    def block_means(self) -> np.ndarray:
        if self._filled < self.n_blocks:
            raise RuntimeError("accumulator not full: %d of %d blocks"
                               % (self._filled, self.n_blocks))
        return np.stack(self._blocks)


def axis_cumulant_series(samples_maps, r_values) -> np.ndarray:
    """S(r) = C11((r, 0)) + C22((r, 0)) from collected correlation maps.

    samples_maps: (n, 2, L, L) array of (R11, R22) per measurement.
    Field arrays are indexed (c2, c1), so a displacement (r, 0) along
    lattice direction 1 sits on the last array axis.
    """
    maps = np.asarray(samples_maps)
    r_values = np.asarray(r_values, dtype=int)
    m1 = np.mean(maps[:, 0, 0, 0])
    m2 = np.mean(maps[:, 1, 0, 0])
    c11 = maps[:, 0, 0, :][:, r_values].mean(axis=0) - m1 ** 2
    c22 = maps[:, 1, 0, :][:, r_values].mean(axis=0) - m2 ** 2
    return c11 + c22
