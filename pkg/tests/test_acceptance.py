"""Acceptance gate: one test per criterion, each prints a PASS/FAIL line.

Every tolerance here is pinned; the MCMC criteria use frozen seeds whose
deviations were checked to sit well inside their 3-sigma budgets.  The
fourth-cumulant half of criterion 7 states the bound faithfully and is
expected to fail: kappa_4(r) crosses zero near r = 8 on its way to a
bounded limit of about -1.8e-2, so "2x the r = 8 value" compares against
an accidentally tiny reference.  The detail string carries the numbers.
"""

import itertools
import math

import numpy as np
import pytest

from dimerlab.lattice import build_torus
from dimerlab.enumeration import (collect_ensemble, dimer_moment_tables,
                                  exact_interacting_cumulant)
from dimerlab.kasteleyn import (FLAVORS, kasteleyn_matrix,
                                partition_function_free, propagator_finite,
                                propagator_infinite)
from dimerlab.freecorr import (FiniteCorrelator, dimer_cumulant,
                               two_point_asymptotic)
from dimerlab.height import (exact_height_cumulant, height_variance_series,
                             gaussian_electric_series)
from dimerlab.perturbation import first_order_cumulant
from dimerlab.mcmc import (ChainConfig, DimerChain, MapAccumulator,
                           axis_cumulant_series, correlation_maps, estimate,
                           jackknife, pair_cumulant_estimate)
from dimerlab.analysis import (electric_exponent, fit_log_slope,
                               fit_power_exponent)
from dimerlab.multiscale import (amplitude_series, build_cutoffs,
                                 scale_decomposition, verify_decay,
                                 verify_partition, verify_reassembly)


def occupation_series(chain, lat, site, sweeps, burnin, thin):
    """Indicator of the +x bond at `site`, sampled every `thin` sweeps."""
    chain.sweep(burnin)
    n = (sweeps - burnin) // thin
    out = np.empty(n)
    for i in range(n):
        chain.sweep(thin)
        out[i] = chain.code[site] == 0
    chain.validate()
    return out


def test_criterion_01_partition_function(acceptance):
    worst = 0.0
    int_dev = 0.0
    for L in (4, 6):
        lat = build_torus(L)
        ens = collect_ensemble(lat)
        for m in (0.0, 0.2):
            z_enum = float(np.sum(ens.weights(0.0, m)))
            z_free = partition_function_free(lat, m).value
            worst = max(worst, abs(z_free - z_enum) / z_enum)
            if m == 0.0:
                int_dev = max(int_dev, abs(z_free - round(z_free)))
                assert round(z_free) == ens.n_matchings
    ok = worst < 1e-9
    acceptance(1, "Pfaffian Z vs brute force (L=4,6; m=0,0.2)", ok,
               "worst rel err %.2e, m=0 integer dev %.2e" % (worst, int_dev))
    assert ok


def test_criterion_02_propagator_inverts_kasteleyn(acceptance):
    worst = 0.0
    for L in (4, 6, 8, 12, 16):
        lat = build_torus(L)
        for m in (0.0, 0.2):
            for fl in FLAVORS:
                if fl == (0, 0) and m == 0.0:
                    continue  # singular sector has no inverse
                g = propagator_finite(lat, m, flavor=fl).dense()
                K = kasteleyn_matrix(lat, m, flavor=fl)
                dev = float(np.max(np.abs(g - np.linalg.inv(K))))
                worst = max(worst, dev)
    ok = worst < 1e-10
    acceptance(2, "Fourier propagator equals dense K inverse (L<=16)", ok,
               "max abs dev %.2e" % worst)
    assert ok


def test_criterion_03_wick_vs_enumeration_exhaustive(acceptance):
    worst_mom = 0.0
    worst_cum = 0.0
    for L in (4, 6):
        lat = build_torus(L)
        nb = lat.n_bonds
        tables = dimer_moment_tables(lat, (0.0, 0.2))
        singles = [(i,) for i in range(nb)]
        pairs = list(itertools.combinations(range(nb), 2))
        trips = list(itertools.combinations(range(nb), 3))
        ip = np.array(pairs)
        it = np.array(trips)
        pair_idx = np.zeros((nb, nb), dtype=np.int64)
        for n, (i, j) in enumerate(pairs):
            pair_idx[i, j] = pair_idx[j, i] = n
        for m in (0.0, 0.2):
            Z, S1, S2, S3 = tables[m]
            fc = FiniteCorrelator(lat, m)
            routes = {}
            for name, m1, m2, m3 in (
                    ("wick", fc.moments_bulk(singles),
                     fc.moments_bulk(pairs), fc.moments_bulk(trips)),
                    ("enum", S1 / Z, S2[ip[:, 0] * nb + ip[:, 1]] / Z,
                     S3[(it[:, 0] * nb + it[:, 1]) * nb + it[:, 2]] / Z)):
                a, b, c = it[:, 0], it[:, 1], it[:, 2]
                k2 = m2 - m1[ip[:, 0]] * m1[ip[:, 1]]
                k3 = (m3 - m2[pair_idx[a, b]] * m1[c]
                      - m2[pair_idx[a, c]] * m1[b]
                      - m2[pair_idx[b, c]] * m1[a]
                      + 2 * m1[a] * m1[b] * m1[c])
                routes[name] = (m1, m2, m3, k2, k3)
            for wa, ea in zip(routes["wick"][:3], routes["enum"][:3]):
                worst_mom = max(worst_mom, float(np.max(np.abs(wa - ea))))
            for wa, ea in zip(routes["wick"][3:], routes["enum"][3:]):
                worst_cum = max(worst_cum, float(np.max(np.abs(wa - ea))))
            # the production cumulant implementations are their own code
            # paths (set-partition Moebius vs weighted ensemble); exercise
            # them against each other on a sample of the same subsets
            rng = np.random.default_rng(20 * L + int(10 * m))
            for _ in range(40):
                k = rng.integers(2, 4)
                ids = tuple(int(x) for x in
                            rng.choice(nb, size=k, replace=False))
                got = fc.cumulant(
                    [[(tuple(lat.bond_from_id(i).x), lat.bond_from_id(i).j)]
                     for i in ids])
                want = exact_interacting_cumulant(
                    lat, [(i,) for i in ids], 0.0, m)
                worst_cum = max(worst_cum, abs(got - want))
    ok = worst_mom < 1e-9 and worst_cum < 1e-9
    acceptance(3, "all <=3-point moments+cumulants vs enumeration", ok,
               "worst moment %.2e, worst cumulant %.2e"
               % (worst_mom, worst_cum))
    assert ok


def test_criterion_04_occupancy(acceptance):
    prop = propagator_infinite(0.0)
    exact_dev = 0.0
    for bond in (((0, 0), 1), ((0, 0), 2), ((1, 0), 1), ((3, 2), 2)):
        exact_dev = max(exact_dev, abs(dimer_cumulant([[bond]], prop) - 0.25))
    ok_exact = exact_dev < 1e-12

    L = 16
    lat = build_torus(L)
    site = lat.site_index((0, 0))
    devs = []
    for lam, seed in ((0.0, 101), (0.2, 102)):
        cc = ChainConfig(L=L, lam=lam, m=0.0, seed=seed,
                         sweeps=200_000, burnin=20_000, thin=10)
        sa = occupation_series(DimerChain(cc), lat, site,
                               cc.sweeps, cc.burnin, cc.thin)
        ea = estimate(sa)
        devs.append((lam, abs(ea.mean - 0.25) / ea.stderr))
    ok_mc = all(d < 3.0 for _, d in devs)
    ok = ok_exact and ok_mc
    acceptance(4, "occupancy 1/4: exact + MCMC at lam=0,0.2", ok,
               "exact dev %.2e; MCMC devs %s sigma"
               % (exact_dev, ["%.2f" % d for _, d in devs]))
    assert ok


def test_criterion_05_asymptotic_residual_decay(acceptance):
    prop = propagator_infinite(0.0)
    rs = np.arange(6, 49, 2)
    res = []
    for r in rs:
        exact = dimer_cumulant([[((0, 0), 1)], [((int(r), 0), 1)]], prop)
        asym = two_point_asymptotic((int(r), 0), 1, 1)
        res.append(abs(exact - asym))
    fit = fit_power_exponent(rs, np.array(res), window=(6, 48))
    exponent = fit.derived["exponent"]
    ok = exponent >= 2.8
    acceptance(5, "two-point residual decay over 6<=r<=48", ok,
               "fitted exponent %.2f (r2 %.4f)" % (exponent, fit.r2))
    assert ok


def test_criterion_06_variance_slope(acceptance):
    prop = propagator_infinite(0.0)
    rs = np.arange(8, 65, 2)
    var = height_variance_series(prop, rs)
    fit = fit_log_slope(rs, var, window=(8, 64))
    khat = fit.derived["K"]
    ok = 0.97 <= khat <= 1.03
    acceptance(6, "K = pi^2 x variance slope over r in [8,64]", ok,
               "K = %.6f +- %.6f" % (khat, fit.derived["K_err"]))
    assert ok


def test_criterion_07_bounded_height_cumulants(acceptance):
    prop = propagator_infinite(0.0)
    rs = (8, 16, 32, 64)
    detail = []
    ok = True
    for n in (3, 4):
        vals = np.array([exact_height_cumulant(n, (0, 0), (r, 0), prop)
                         for r in rs])
        # a 1e-10 floor keeps the "2x the r=8 value" proxy meaningful when
        # the whole series is numerically zero
        ref = max(abs(vals[0]), 1e-10)
        ok_n = float(np.max(np.abs(vals))) <= 2.0 * ref
        detail.append("kappa%d max %.3e vs 2x|kappa%d(8)| %.3e -> %s"
                      % (n, np.max(np.abs(vals)), n, 2.0 * ref,
                         "ok" if ok_n else "VIOLATED"))
        ok = ok and ok_n
    acceptance(7, "3rd/4th height cumulants show no growth", ok,
               "; ".join(detail))
    assert ok, ("kappa_4 crosses zero near r = 8, so its r = 8 value is an "
                "accidentally tiny reference; the series is nevertheless "
                "bounded (-> -1.8e-2): " + "; ".join(detail))


def test_criterion_08_mcmc_vs_enumeration_interacting(acceptance):
    L, lam = 6, 0.2
    lat = build_torus(L)
    ens = collect_ensemble(lat)
    # plaquette flips preserve winding, so the chain samples the (0,0)
    # sector; condition the enumeration the same way
    w = ens.weights(lam, 0.0) * ((ens.T1 == 0) & (ens.T2 == 0))
    z = w.sum()
    b1, b2 = lat.bond_id((0, 0), 1), lat.bond_id((2, 0), 1)
    o1 = ens.occ[:, b1].astype(float)
    o2 = ens.occ[:, b2].astype(float)
    want = float((w * o1 * o2).sum() / z
                 - (w * o1).sum() / z * (w * o2).sum() / z)

    cc = ChainConfig(L=L, lam=lam, m=0.0, seed=411,
                     sweeps=1_000_000, burnin=100_000, thin=10)
    chain = DimerChain(cc)
    chain.sweep(cc.burnin)
    n = (cc.sweeps - cc.burnin) // cc.thin
    s_a, s_b = lat.site_index((0, 0)), lat.site_index((2, 0))
    sa, sb = np.empty(n), np.empty(n)
    for i in range(n):
        chain.sweep(cc.thin)
        sa[i] = chain.code[s_a] == 0
        sb[i] = chain.code[s_b] == 0
    chain.validate()
    got, err = pair_cumulant_estimate(sa, sb)
    dev = abs(got - want) / err
    ok = dev < 3.0
    acceptance(8, "MCMC pair cumulant vs enumeration (lam=0.2, L=6)", ok,
               "%.6f +- %.6f vs exact %.6f (%.2f sigma)"
               % (got, err, want, dev))
    assert ok


def test_criterion_09_first_order_perturbation(acceptance):
    h = 1e-4
    worst = 0.0
    for L in (4, 6):
        lat = build_torus(L)
        fc = FiniteCorrelator(lat, 0.1)
        for ids in ((0,), (5,), (0, 13)):
            groups = [[(tuple(lat.bond_from_id(i).x), lat.bond_from_id(i).j)]
                      for i in ids]
            got = first_order_cumulant(groups, fc).value
            # alpha = e^lambda - 1, so step alpha by +-h through lambda
            up = exact_interacting_cumulant(lat, [(i,) for i in ids],
                                            math.log1p(h), 0.1)
            dn = exact_interacting_cumulant(lat, [(i,) for i in ids],
                                            math.log1p(-h), 0.1)
            worst = max(worst, abs(got - (up - dn) / (2 * h)))
    ok = worst < 1e-6
    acceptance(9, "d/dalpha cumulants vs finite differences (L=4,6)", ok,
               "worst abs dev %.2e" % worst)
    assert ok


@pytest.mark.slow
def test_criterion_10_nontrivial_exponent(acceptance):
    L = 128
    rs = np.arange(2, L // 4 + 1, 2)
    results = {}
    for lam, seed in ((0.3, 2024), (0.15, 2025)):
        cc = ChainConfig(L=L, lam=lam, m=0.0, seed=seed,
                         sweeps=500_000, burnin=50_000, thin=10)
        chain = DimerChain(cc)
        chain.sweep(cc.burnin)
        n_meas = (cc.sweeps - cc.burnin) // cc.thin
        acc = MapAccumulator(50, n_meas)
        for _ in range(n_meas):
            chain.sweep(cc.thin)
            acc.push(correlation_maps(chain))
        chain.validate()
        maps = acc.block_means

        def kappa_stat(arrs):
            series = axis_cumulant_series(arrs[0], rs)
            fit = fit_power_exponent(rs, series,
                                     window=(int(rs[0]), int(rs[-1])))
            return fit.derived["kappa"]

        results[lam] = jackknife([maps], kappa_stat, n_blocks=50)
    k3, e3 = results[0.3]
    k15, _ = results[0.15]
    sig = abs(k3 - 1.0) / e3
    ok = sig > 3.0 and abs(k15 - 1.0) < abs(k3 - 1.0)
    acceptance(10, "interacting exponent moves (lam=0.3 vs 0.15, L=128)", ok,
               "kappa(0.3)=%.4f +- %.4f (%.1f sigma); kappa(0.15)=%.4f"
               % (k3, e3, sig, k15))
    assert ok


def test_criterion_11_electric_gff_consistency(acceptance):
    prop = propagator_infinite(0.0)
    alpha = math.pi / 4
    rs = np.arange(4, 65, 2)
    var = height_variance_series(prop, rs)
    ser = gaussian_electric_series(prop, alpha, rs, variances=var)
    efit = electric_exponent(rs, ser, window=(8, 64))
    kfit = fit_log_slope(rs, var, window=(8, 64))
    pred = alpha ** 2 / (2 * math.pi ** 2) * kfit.derived["K"]
    pred_err = alpha ** 2 / (2 * math.pi ** 2) * kfit.derived["K_err"]
    combined = math.hypot(efit.derived["eta_err"], pred_err)
    diff = abs(efit.derived["eta"] - pred)
    ok = diff < combined
    acceptance(11, "electric exponent vs alpha^2 K/(2 pi^2)", ok,
               "eta %.6f vs predicted %.6f (diff %.1e, budget %.1e)"
               % (efit.derived["eta"], pred, diff, combined))
    assert ok


def test_criterion_12_multiscale(acceptance):
    spec = build_cutoffs()
    part = verify_partition(spec)
    # reassembly mass chosen where the reference grid converges cleanly
    reerr = verify_reassembly(0.05, spec, nodes=384)
    # amplitude scaling probed deep (nine octaves) at a lighter quadrature
    slices = scale_decomposition(2.0 ** -9, spec, nodes=256)
    amps = amplitude_series(slices, probe=8)
    hs = sorted(amps, reverse=True)
    vals = [amps[h] for h in hs]
    ratios = [math.log2(vals[i] / vals[i + 1]) for i in range(len(vals) - 1)]
    ok_r = all(0.8 <= r <= 1.2 for r in ratios)
    fits = [verify_decay(sl) for sl in slices]
    ok_d = all(c > 0 and r2 >= 0.95 for c, _, r2 in fits)
    ok = part < 1e-12 and reerr < 1e-8 and ok_r and ok_d
    acceptance(12, "multiscale partition/reassembly/scaling/decay", ok,
               "partition %.1e; reassembly %.2e; log2 ratios "
               "[%.3f..%.3f]; min decay R2 %.4f"
               % (part, reerr, min(ratios), max(ratios),
                  min(f[2] for f in fits)))
    assert ok
