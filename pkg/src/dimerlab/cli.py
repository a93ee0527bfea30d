"""Command-line front end: reproducible one-shot experiments over the library.

Every run resolves an ExperimentConfig (config file < flags), embeds the
resolved config, a short hash of it, the tool version, and the seed in the
output header, and writes CSV or JSON (SVG for plots).  Outputs are
byte-identical for identical (config, seed): no timestamps, no locale
formatting, fixed matplotlib hash salt.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("artifact")
except Exception:  # pragma: no cover - not installed
    VERSION = "0.0.0"


# --- config plumbing ---------------------------------------------------------------


@dataclass
class ExperimentConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: str = ""          # empty: stdout
    fmt: str = "csv"          # csv | json | svg-plot

    def resolved(self) -> dict:
        d = {"command": self.command, "seed": self.seed,
             "output": self.output, "format": self.fmt}
        d.update({k: v for k, v in sorted(self.params.items())})
        return d

    def hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def to_file(self, path: str):
        with open(path, "w") as f:
            for k, v in self.resolved().items():
                f.write("%s=%s\n" % (k, json.dumps(v)))

    @staticmethod
    def read_file(path: str) -> dict:
        out = {}
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError("bad config line: %r" % line)
                k, v = line.split("=", 1)
                try:
                    out[k.strip()] = json.loads(v.strip())
                except json.JSONDecodeError:
                    out[k.strip()] = v.strip()
        return out


def _meta(cfg: ExperimentConfig) -> dict:
    return {"version": VERSION, "config_hash": cfg.hash(),
            "seed": cfg.seed, "config": cfg.resolved()}


def _fmt_num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _emit_csv(cfg: ExperimentConfig, columns, rows):
    lines = ["# version=%s config_hash=%s seed=%d"
             % (VERSION, cfg.hash(), cfg.seed),
             "# config=%s" % json.dumps(cfg.resolved(), sort_keys=True,
                                        separators=(",", ":")),
             ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt_num(x) for x in row))
    _write_text(cfg, "\n".join(lines) + "\n")


def _emit_json(cfg: ExperimentConfig, payload: dict):
    doc = {"meta": _meta(cfg)}
    doc.update(payload)
    _write_text(cfg, json.dumps(doc, indent=2, sort_keys=True,
                                default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _write_text(cfg: ExperimentConfig, text: str):
    if cfg.output:
        with open(cfg.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _load_csv(path: str) -> np.ndarray:
    """Data rows of one of our CSVs: drop '#' lines and the column header."""
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(line)
    if not rows:
        raise ValueError("no data rows in %s" % path)
    data = [tuple(float(t) for t in line.split(",")) for line in rows[1:]]
    if not data:
        raise ValueError("only a header in %s" % path)
    return np.array(data, dtype=float, ndmin=2)


def _fit_payload(fit) -> dict:
    return {"params": dict(zip(fit.names, fit.params.tolist())),
            "stderr": dict(zip(fit.names, fit.stderr.tolist())),
            "window": list(fit.window), "r2": fit.r2,
            "chi2_dof": None if math.isnan(fit.chi2_dof) else fit.chi2_dof,
            "n_points": fit.n, "derived": fit.derived}


# --- subcommand handlers -----------------------------------------------------------


def _cmd_selftest(cfg: ExperimentConfig) -> int:
    from .lattice import build_torus
    from .pfaffian import pfaffian
    from .kasteleyn import (partition_function_free, kasteleyn_matrix,
                            propagator_finite)
    from .enumeration import collect_ensemble
    from .freecorr import FiniteCorrelator
    from .multiscale import build_cutoffs, verify_partition
    from .height import winding, brick_wall

    checks = []
    rng = np.random.default_rng(cfg.seed)

    a = rng.normal(size=(8, 8))
    a = a - a.T
    checks.append(("pfaffian_squares_to_det",
                   abs(pfaffian(a) ** 2 - np.linalg.det(a)) < 1e-9))

    lat = build_torus(4)
    ens = collect_ensemble(lat)
    for m in (0.0, 0.2):
        z_enum = float(np.sum(ens.weights(0.0, m)))
        z_free = partition_function_free(lat, m).value
        checks.append(("partition_function_L4_m%g" % m,
                       abs(z_free - z_enum) < 1e-9 * z_enum))

    fc = FiniteCorrelator(lat, 0.2)
    b1 = ((0, 0), 1)
    b2 = ((1, 1), 2)
    got = fc.moment([b1, b2])
    o = ens.occ[:, lat.bond_id(*b1)] * ens.occ[:, lat.bond_id(*b2)]
    want = ens.expectation(o.astype(float), 0.0, 0.2)
    checks.append(("wick_two_bond_moment", abs(got - want) < 1e-12))

    lat8 = build_torus(8)
    g = propagator_finite(lat8, 0.1, flavor=(1, 0)).dense()
    K = kasteleyn_matrix(lat8, 0.1, flavor=(1, 0))
    checks.append(("propagator_inverts_kasteleyn",
                   float(np.max(np.abs(g @ K - np.eye(64)))) < 1e-12))

    spec = build_cutoffs()
    checks.append(("partition_of_unity", verify_partition(spec) < 1e-12))

    checks.append(("brick_wall_zero_winding",
                   winding(lat, brick_wall(lat)).as_tuple() == (0, 0)))

    failed = 0
    lines = []
    for name, ok in checks:
        lines.append("%s %s" % ("PASS" if ok else "FAIL", name))
        failed += not ok
    _write_text(cfg, "\n".join(lines) + "\n")
    return 1 if failed else 0


def _cmd_exact_z(cfg: ExperimentConfig) -> int:
    from .lattice import build_torus
    from .kasteleyn import FLAVORS, SECTOR_SIGN, partition_function_free

    p = cfg.params
    lat = build_torus(p["L"])
    fp = partition_function_free(lat, p["m"])
    rows = []
    for fl in FLAVORS:
        lp, ph = fp.sector_logpf[fl]
        rows.append((fl[0], fl[1], SECTOR_SIGN[fl], lp,
                     complex(ph).real, complex(ph).imag,
                     int(fl in fp.singular_flavors)))
    if cfg.fmt == "json":
        _emit_json(cfg, {
            "Z": fp.value, "log_Z": fp.log_value,
            "density": fp.density(p["L"]),
            "flavors": [{"theta": r[0], "tau": r[1], "sign": r[2],
                         "log_abs_pf": r[3], "phase_re": r[4],
                         "phase_im": r[5], "singular": bool(r[6])}
                        for r in rows]})
    else:
        _emit_csv(cfg, ["theta", "tau", "sign", "log_abs_pf",
                        "phase_re", "phase_im", "singular"], rows)
        if not cfg.output:
            sys.stdout.write("# Z=%s log_Z=%s\n"
                             % (_fmt_num(fp.value), _fmt_num(fp.log_value)))
    return 0


def _cmd_propagator(cfg: ExperimentConfig) -> int:
    from .lattice import build_torus
    from .kasteleyn import propagator_finite, propagator_infinite

    p = cfg.params
    rows = []
    if p["L"] > 0:
        lat = build_torus(p["L"])
        g = propagator_finite(lat, p["m"], flavor=tuple(p["flavor"]))
        for d1 in range(-p["range"], p["range"] + 1):
            for d2 in range(-p["range"], p["range"] + 1):
                val = g.g((d1, d2), (0, 0))
                rows.append((d1, d2, val.real, val.imag))
    else:
        prop = propagator_infinite(p["m"])
        for d1 in range(-p["range"], p["range"] + 1):
            for d2 in range(-p["range"], p["range"] + 1):
                val = prop.g((d1, d2), (0, 0))
                rows.append((d1, d2, val.real, val.imag))
    _emit_csv(cfg, ["d1", "d2", "g_re", "g_im"], rows)
    return 0


def _parse_bond(text: str):
    x1, x2, j = (int(t) for t in text.split(","))
    return ((x1, x2), j)


def _cmd_dimer_corr(cfg: ExperimentConfig) -> int:
    from .freecorr import dimer_cumulant, two_point_asymptotic
    from .kasteleyn import propagator_infinite
    from .lattice import build_torus
    from .freecorr import FiniteCorrelator

    p = cfg.params
    j, jp = int(p["channel"][0]), int(p["channel"][1])
    if p["L"] > 0:
        prop = FiniteCorrelator(build_torus(p["L"]), p["m"])
    else:
        prop = propagator_infinite(p["m"])
    rows = []
    for r in range(p["rmin"], p["rmax"] + 1):
        groups = [[((0, 0), j)], [((r, 0), jp)]]
        exact = dimer_cumulant(groups, prop)
        asym = two_point_asymptotic((r, 0), j, jp)
        rows.append((r, exact, asym, exact - asym))
    _emit_csv(cfg, ["r", "exact", "asymptotic", "residual"], rows)
    return 0


def _cmd_height_cumulants(cfg: ExperimentConfig) -> int:
    from .height import exact_height_cumulant
    from .kasteleyn import propagator_infinite

    p = cfg.params
    prop = propagator_infinite(p["m"])
    rows = []
    for r in p["rs"]:
        row = [r]
        for n in range(1, p["nmax"] + 1):
            row.append(exact_height_cumulant(n, (0, 0), (int(r), 0), prop))
        rows.append(tuple(row))
    cols = ["r"] + ["kappa%d" % n for n in range(1, p["nmax"] + 1)]
    _emit_csv(cfg, cols, rows)
    return 0


def _cmd_enumerate(cfg: ExperimentConfig) -> int:
    from .lattice import build_torus
    from .enumeration import collect_ensemble

    p = cfg.params
    ens = collect_ensemble(build_torus(p["L"]))
    w = ens.weights(p["lam"], p["m"])
    z = float(np.sum(w))
    sectors = {}
    for t1, t2, wi in zip(ens.T1, ens.T2, w):
        key = "%d,%d" % (t1, t2)
        sectors[key] = sectors.get(key, 0.0) + float(wi)
    _emit_json(cfg, {
        "n_matchings": ens.n_matchings,
        "Z": z,
        "mean_W": float(np.sum(w * ens.W) / z),
        "sector_weight": {k: v for k, v in sorted(sectors.items())},
    })
    return 0


def _cmd_mcmc(cfg: ExperimentConfig) -> int:
    from .lattice import build_torus
    from .mcmc import (ChainConfig, DimerChain, estimate,
                       pair_cumulant_estimate)

    p = cfg.params
    cc = ChainConfig(L=p["L"], lam=p["lam"], m=p["m"], seed=cfg.seed,
                     sweeps=p["sweeps"], burnin=p["burnin"], thin=p["thin"])
    chain = DimerChain(cc)
    chain.sweep(cc.burnin)
    lat = build_torus(p["L"])
    s_a = lat.site_index((0, 0))
    s_b = lat.site_index((p["dx"], p["dy"]))
    n = max(4, (cc.sweeps - cc.burnin) // cc.thin)
    sa = np.empty(n)
    sb = np.empty(n)
    hmean = np.empty(n)
    for i in range(n):
        chain.sweep(cc.thin)
        sa[i] = chain.code[s_a] == 0
        sb[i] = chain.code[s_b] == 0
        hmean[i] = np.mean(chain.code == 0)
    chain.validate()
    ea = estimate(sa)
    eh = estimate(hmean)
    cum, cum_err = pair_cumulant_estimate(sa, sb)
    _emit_json(cfg, {
        "bond_occupation": {"mean": ea.mean, "stderr": ea.stderr,
                            "tau_int": ea.tau_int, "resolved": ea.resolved},
        "horizontal_fraction": {"mean": eh.mean, "stderr": eh.stderr},
        "pair_cumulant": {"displacement": [p["dx"], p["dy"]],
                          "value": cum, "stderr": float(cum_err)},
        "n_samples": int(n),
        "acceptance": chain.n_accepted / (chain.n_sweeps * p["L"] ** 2),
    })
    return 0


def _cmd_perturb(cfg: ExperimentConfig) -> int:
    from .perturbation import first_order_cumulant
    from .kasteleyn import propagator_infinite
    from .freecorr import FiniteCorrelator
    from .lattice import build_torus

    p = cfg.params
    groups = [[_parse_bond(b)] for b in p["bonds"].split(";")]
    if p["L"] > 0:
        prop = FiniteCorrelator(build_torus(p["L"]), p["m"])
    else:
        prop = propagator_infinite(p["m"])
    res = first_order_cumulant(groups, prop, R=p["range"])
    _emit_json(cfg, {"derivative": res.value, "tail_bound": res.tail})
    return 0


def _cmd_multiscale(cfg: ExperimentConfig) -> int:
    from .multiscale import (build_cutoffs, scale_decomposition,
                             amplitude_series, verify_decay,
                             verify_partition, verify_reassembly)

    p = cfg.params
    spec = build_cutoffs()
    slices = scale_decomposition(p["m"], spec, nodes=p["nodes"])
    amps = amplitude_series(slices, probe=p["probe"])
    rows = []
    for sl in slices:
        c, logc, r2 = verify_decay(sl)
        rows.append((sl.h, int(sl.deepest), amps.get(sl.h, 0.0),
                     c, logc, r2))
    _emit_csv(cfg, ["h", "deepest", "amplitude", "c", "logC", "r2"], rows)
    if cfg.fmt == "json" or p["verify"]:
        extra = {"partition_max_dev": verify_partition(spec)}
        if p["verify"]:
            extra["reassembly_max_err"] = verify_reassembly(
                p["m"], spec, nodes=p["nodes"])
        if not cfg.output:
            sys.stdout.write("# %s\n" % json.dumps(extra, sort_keys=True))
    return 0


def _cmd_fit(cfg: ExperimentConfig) -> int:
    from .analysis import fit_log_slope, fit_power_exponent, electric_exponent

    p = cfg.params
    data = _load_csv(p["input"])
    r = data[:, 0]
    v = data[:, 1]
    err = data[:, 2] if data.shape[1] > 2 else None
    window = (p["wlo"], p["whi"]) if p["whi"] > 0 else None
    if p["kind"] == "log-slope":
        fit = fit_log_slope(r, v, errors=err, window=window)
    elif p["kind"] == "power":
        fit = fit_power_exponent(r, v, errors=err, window=window,
                                 strip_oscillation=bool(p["strip"]))
    elif p["kind"] == "electric":
        fit = electric_exponent(r, v, errors=err, window=window)
    else:
        raise ValueError("unknown fit kind %r" % p["kind"])
    _emit_json(cfg, {"fit": _fit_payload(fit)})
    return 0


def _cmd_reproduce(cfg: ExperimentConfig) -> int:
    p = cfg.params
    name = p["pipeline"]
    if name == "variance":
        return _reproduce_variance(cfg)
    if name == "kappa":
        return _reproduce_kappa(cfg)
    if name == "electric":
        return _reproduce_electric(cfg)
    if name == "zmatch":
        return _reproduce_zmatch(cfg)
    raise ValueError("unknown pipeline %r; have variance, kappa, "
                     "electric, zmatch" % name)


def _reproduce_variance(cfg: ExperimentConfig) -> int:
    from .kasteleyn import propagator_infinite
    from .height import height_variance_series
    from .analysis import fit_log_slope

    p = cfg.params
    rmax = max(16, p["L"] // 4)
    # log-spaced even separations: keeps >= 4 points in the fit window
    # even at the smallest rmax (height paths need even separations)
    rs = [int(r) for r in
          np.unique(2 * np.round(np.geomspace(4, rmax, 12) / 2).astype(int))]
    prop = propagator_infinite(0.0)
    var = height_variance_series(prop, rs)
    fit = fit_log_slope(np.array(rs), var, window=(8, rmax))
    _emit_csv(cfg, ["r", "variance"], list(zip(rs, var)))
    trailer = {"fit": _fit_payload(fit)}
    if not cfg.output:
        sys.stdout.write("# %s\n" % json.dumps(
            trailer, sort_keys=True, default=_json_default))
    else:
        with open(cfg.output + ".fit.json", "w") as f:
            json.dump({"meta": _meta(cfg)} | trailer, f, indent=2,
                      sort_keys=True, default=_json_default)
            f.write("\n")
    return 0


def _reproduce_kappa(cfg: ExperimentConfig) -> int:
    from .mcmc import (ChainConfig, DimerChain, MapAccumulator, jackknife,
                       correlation_maps, axis_cumulant_series)
    from .analysis import fit_power_exponent

    p = cfg.params
    L = p["L"]
    cc = ChainConfig(L=L, lam=p["lam"], m=0.0, seed=cfg.seed,
                     sweeps=p["sweeps"], burnin=p["sweeps"] // 10,
                     thin=p["thin"])
    chain = DimerChain(cc)
    chain.sweep(cc.burnin)
    n_meas = (cc.sweeps - cc.burnin) // cc.thin
    acc = MapAccumulator(p["blocks"], n_meas)
    for _ in range(n_meas):
        chain.sweep(cc.thin)
        acc.push(correlation_maps(chain))
    chain.validate()
    maps = acc.block_means
    rs = np.arange(2, L // 4 + 1, 2)

    def kappa_stat(arrs):
        series = axis_cumulant_series(arrs[0], rs)
        fit = fit_power_exponent(rs, series, window=(int(rs[0]), int(rs[-1])))
        return fit.derived["kappa"]

    val, err = jackknife([maps], kappa_stat, n_blocks=p["blocks"])
    series = axis_cumulant_series(maps, rs)
    _emit_json(cfg, {
        "kappa": float(val), "kappa_stderr": float(err),
        "deviation_sigmas": float(abs(val - 1.0) / err),
        "series": {"r": rs.tolist(), "S": series.tolist()},
        "n_measurements": int(n_meas),
    })
    return 0


def _reproduce_electric(cfg: ExperimentConfig) -> int:
    from .kasteleyn import propagator_infinite
    from .height import height_variance_series, gaussian_electric_series
    from .analysis import fit_log_slope, electric_exponent

    p = cfg.params
    alpha = p["alpha"]
    rs = np.arange(4, 65, 2)  # height paths need even axis separations
    prop = propagator_infinite(0.0)
    var = height_variance_series(prop, rs)
    ser = gaussian_electric_series(prop, alpha, rs, variances=var)
    fit = electric_exponent(rs, ser, window=(8, 64))
    kfit = fit_log_slope(rs, var, window=(8, 64))
    khat = kfit.derived["K"]
    predicted = alpha ** 2 / (2 * np.pi ** 2) * khat
    _emit_json(cfg, {
        "alpha": alpha,
        "eta": fit.derived["eta"], "eta_stderr": fit.derived["eta_err"],
        "predicted_eta": predicted,
        "K": khat, "K_stderr": kfit.derived["K_err"],
        "series": {"r": rs.tolist(), "E": ser.tolist()},
    })
    return 0


def _reproduce_zmatch(cfg: ExperimentConfig) -> int:
    from .lattice import build_torus
    from .kasteleyn import partition_function_free
    from .enumeration import collect_ensemble

    rows = []
    worst = 0.0
    for L in (4, 6):
        ens = collect_ensemble(build_torus(L))
        for m in (0.0, 0.2):
            z_enum = float(np.sum(ens.weights(0.0, m)))
            z_free = partition_function_free(build_torus(L), m).value
            rel = abs(z_free - z_enum) / z_enum
            worst = max(worst, rel)
            rows.append((L, m, z_free, z_enum, rel))
    _emit_csv(cfg, ["L", "m", "Z_pfaffian", "Z_enumeration", "rel_err"], rows)
    if not cfg.output:
        sys.stdout.write("# worst_rel_err=%s\n" % _fmt_num(worst))
    return 0


def _cmd_plot(cfg: ExperimentConfig) -> int:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "dimerlab"
    import matplotlib.pyplot as plt

    p = cfg.params
    data = _load_csv(p["input"])
    fig, ax = plt.subplots(figsize=(6, 4))
    kind = p["kind"]
    if kind == "variance":
        r, v = data[:, 0], data[:, 1]
        ax.semilogx(r, v, "o", label="measured")
        keep = r >= 8
        A = np.vstack([np.ones(keep.sum()), np.log(r[keep])]).T
        beta = np.linalg.lstsq(A, v[keep], rcond=None)[0]
        rr = np.geomspace(r.min(), r.max(), 100)
        ax.semilogx(rr, beta[0] + beta[1] * np.log(rr), "-",
                    label="slope %.4f" % beta[1])
        ax.set_xlabel("r")
        ax.set_ylabel("Var h(r) - h(0)")
    elif kind == "decay":
        r, v = data[:, 0], np.abs(data[:, 1])
        ax.loglog(r, v, "o-")
        ax.set_xlabel("r")
        ax.set_ylabel("|value|")
    elif kind == "scales":
        data = data[data[:, 2] > 0]  # deepest slice carries no amplitude
        h, amp, c = data[:, 0], data[:, 2], data[:, 3]
        ax2 = ax.twinx()
        ax.plot(h, np.log2(amp), "o-", color="C0", label="log2 amplitude")
        ax2.plot(h, c, "s--", color="C1", label="decay rate c")
        ax.set_xlabel("scale h")
        ax.set_ylabel("log2 amplitude", color="C0")
        ax2.set_ylabel("stretched-exp rate", color="C1")
    else:
        plt.close(fig)
        raise ValueError("unknown plot kind %r" % kind)
    if kind == "variance":
        ax.legend()
    ax.set_title("%s (config %s)" % (kind, cfg.hash()))
    fig.tight_layout()
    out = cfg.output or (kind + ".svg")
    fig.savefig(out, format="svg",
                metadata={"Date": None,
                          "Description": json.dumps(cfg.resolved(),
                                                    sort_keys=True)})
    plt.close(fig)
    return 0


# --- argument wiring ---------------------------------------------------------------


_HANDLERS = {
    "selftest": _cmd_selftest,
    "exact-z": _cmd_exact_z,
    "propagator": _cmd_propagator,
    "dimer-corr": _cmd_dimer_corr,
    "height-cumulants": _cmd_height_cumulants,
    "enumerate": _cmd_enumerate,
    "mcmc": _cmd_mcmc,
    "perturb": _cmd_perturb,
    "multiscale": _cmd_multiscale,
    "fit": _cmd_fit,
    "reproduce": _cmd_reproduce,
    "plot": _cmd_plot,
}


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="dimerlab",
        description="dimer-model laboratory: exact, sampled, and "
                    "multiscale computations")
    top.add_argument("--version", action="version", version=VERSION)
    sub = top.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default="", help="key=value config file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--output", default="", help="output path (default stdout)")
        sp.add_argument("--format", dest="fmt", default="csv",
                        choices=["csv", "json", "svg-plot"])

    common(sub.add_parser("selftest", help="run fast oracle checks"))

    sp = sub.add_parser("exact-z", help="per-flavor Pfaffians and Z")
    common(sp)
    sp.add_argument("--L", type=int, default=8)
    sp.add_argument("--m", type=float, default=0.0)

    sp = sub.add_parser("propagator", help="two-point fermion table")
    common(sp)
    sp.add_argument("--L", type=int, default=0, help="0: infinite volume")
    sp.add_argument("--m", type=float, default=0.0)
    sp.add_argument("--range", type=int, default=8)
    sp.add_argument("--flavor", type=int, nargs=2, default=(1, 0))

    sp = sub.add_parser("dimer-corr", help="two-point dimer cumulant vs r")
    common(sp)
    sp.add_argument("--L", type=int, default=0, help="0: infinite volume")
    sp.add_argument("--m", type=float, default=0.0)
    sp.add_argument("--channel", default="11", choices=["11", "12", "21", "22"])
    sp.add_argument("--rmin", type=int, default=2)
    sp.add_argument("--rmax", type=int, default=24)

    sp = sub.add_parser("height-cumulants", help="exact height cumulants")
    common(sp)
    sp.add_argument("--m", type=float, default=0.0)
    sp.add_argument("--nmax", type=int, default=4)
    sp.add_argument("--rs", type=int, nargs="+", default=[8, 16, 32])

    sp = sub.add_parser("enumerate", help="exact small-torus ensemble")
    common(sp)
    sp.add_argument("--L", type=int, default=4)
    sp.add_argument("--m", type=float, default=0.0)
    sp.add_argument("--lam", type=float, default=0.0)

    sp = sub.add_parser("mcmc", help="plaquette-flip sampling run")
    common(sp)
    sp.add_argument("--L", type=int, default=32)
    sp.add_argument("--m", type=float, default=0.0)
    sp.add_argument("--lam", type=float, default=0.0)
    sp.add_argument("--sweeps", type=float, default=1e5)
    sp.add_argument("--burnin", type=float, default=1e4)
    sp.add_argument("--thin", type=int, default=10)
    sp.add_argument("--dx", type=int, default=2)
    sp.add_argument("--dy", type=int, default=0)

    sp = sub.add_parser("perturb", help="first interaction derivative")
    common(sp)
    sp.add_argument("--L", type=int, default=0, help="0: infinite volume")
    sp.add_argument("--m", type=float, default=0.0)
    sp.add_argument("--bonds", default="0,0,1",
                    help="x1,x2,j triples separated by ';'")
    sp.add_argument("--range", type=int, default=24)

    sp = sub.add_parser("multiscale", help="scale decomposition report")
    common(sp)
    sp.add_argument("--m", type=float, default=0.0)
    sp.add_argument("--nodes", type=int, default=256)
    sp.add_argument("--probe", type=int, default=8)
    sp.add_argument("--verify", action="store_true",
                    help="also check reassembly against the exact table")

    sp = sub.add_parser("fit", help="fit a CSV series")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--kind", default="log-slope",
                    choices=["log-slope", "power", "electric"])
    sp.add_argument("--wlo", type=float, default=8.0)
    sp.add_argument("--whi", type=float, default=-1.0, help="-1: data max")
    sp.add_argument("--strip", action="store_true",
                    help="remove (-1)^r oscillation before fitting")

    sp = sub.add_parser("reproduce", help="one-shot headline pipelines")
    common(sp)
    sp.add_argument("pipeline",
                    choices=["variance", "kappa", "electric", "zmatch"])
    sp.add_argument("--L", type=int, default=256)
    sp.add_argument("--lam", type=float, default=0.3)
    sp.add_argument("--sweeps", type=float, default=2e6)
    sp.add_argument("--thin", type=int, default=10)
    sp.add_argument("--blocks", type=int, default=50)
    sp.add_argument("--alpha", type=float, default=np.pi / 4)

    sp = sub.add_parser("plot", help="render a CSV as an SVG figure")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--kind", default="variance",
                    choices=["variance", "decay", "scales"])

    return top


def _resolve(args: argparse.Namespace, argv) -> ExperimentConfig:
    ns = vars(args).copy()
    command = ns.pop("command")
    cfg_path = ns.pop("config", "")
    seed = ns.pop("seed", 0)
    output = ns.pop("output", "")
    fmt = ns.pop("fmt", "csv")
    params = {k: v for k, v in ns.items()}
    if cfg_path:
        file_vals = ExperimentConfig.read_file(cfg_path)
        file_vals.pop("command", None)
        # flags win: only adopt file values the command line left at default
        given = {a.split("=")[0].lstrip("-").replace("-", "_")
                 for a in argv if a.startswith("--")}
        for k, v in file_vals.items():
            if k == "seed" and "seed" not in given:
                seed = int(v)
            elif k == "output" and "output" not in given:
                output = str(v)
            elif k == "format" and "format" not in given:
                fmt = str(v)
            elif k in params and k not in given:
                params[k] = type(params[k])(v) if params[k] is not None else v
    for k in ("sweeps", "burnin"):
        if k in params:
            params[k] = int(float(params[k]))
    return ExperimentConfig(command=command, params=params, seed=seed,
                            output=output, fmt=fmt)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    threads = os.environ.get("DIMERLAB_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    try:
        args = _build_parser().parse_args(argv)
        cfg = _resolve(args, argv)
        np.random.seed(cfg.seed % 2 ** 32)  # legacy consumers only
        return _HANDLERS[cfg.command](cfg)
    except SystemExit:
        raise
    except (ValueError, KeyError, OSError) as exc:
        sys.stderr.write(json.dumps(
            {"error": {"type": type(exc).__name__, "message": str(exc)}})
            + "\n")
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        sys.stderr.write(json.dumps(
            {"error": {"type": type(exc).__name__, "message": str(exc)}})
            + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
