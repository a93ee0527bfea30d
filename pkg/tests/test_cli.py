"""End-to-end checks of the command-line front end, run in-process."""

import filecmp
import importlib.resources
import json
import math
import shutil

import numpy as np
import pytest

from dimerlab.cli import ExperimentConfig, main


def run(argv):
    return main(list(argv))


def read_json(path):
    with open(path) as f:
        return json.load(f)


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip()


def test_selftest_all_pass(tmp_path):
    out = tmp_path / "selftest.txt"
    assert run(["selftest", "--output", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) >= 6
    assert all(line.startswith("PASS ") for line in lines)


def test_exact_z_json_matches_enumeration(tmp_path):
    from dimerlab.lattice import build_torus
    from dimerlab.enumeration import collect_ensemble

    out = tmp_path / "z.json"
    assert run(["exact-z", "--L", "4", "--m", "0.2",
                "--format", "json", "--output", str(out)]) == 0
    doc = read_json(str(out))
    ens = collect_ensemble(build_torus(4))
    z_enum = float(np.sum(ens.weights(0.0, 0.2)))
    assert abs(doc["Z"] - z_enum) < 1e-9 * z_enum
    assert len(doc["flavors"]) == 4
    assert not any(fl["singular"] for fl in doc["flavors"])  # m != 0
    assert doc["meta"]["config"]["command"] == "exact-z"
    assert doc["meta"]["config_hash"]


def test_exact_z_csv_stdout(capsys):
    assert run(["exact-z", "--L", "4", "--m", "0.0"]) == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert lines[0].startswith("# version=")
    assert lines[1].startswith("# config=")
    assert lines[2] == "theta,tau,sign,log_abs_pf,phase_re,phase_im,singular"
    assert len(lines) == 3 + 4 + 1  # header + four flavors + Z trailer
    assert lines[-1].startswith("# Z=")
    # the (0,0) flavor is the singular one at m=0
    assert lines[3].split(",")[-1] == "1"


def test_config_file_roundtrip(tmp_path):
    cfg = ExperimentConfig(command="mcmc",
                           params={"L": 8, "lam": 0.25, "m": 0.0,
                                   "sweeps": 1000, "burnin": 100,
                                   "thin": 5, "dx": 2, "dy": 0},
                           seed=17, output="run.json", fmt="json")
    path = tmp_path / "run.cfg"
    cfg.to_file(str(path))
    back = ExperimentConfig.read_file(str(path))
    assert back["command"] == "mcmc"
    assert back["seed"] == 17
    assert back["lam"] == 0.25
    assert back["format"] == "json"
    for k, v in cfg.params.items():
        assert back[k] == v


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "z.cfg"
    ExperimentConfig(command="exact-z", params={"L": 6, "m": 0.3},
                     seed=9, fmt="json").to_file(str(path))
    out = tmp_path / "z.json"
    # L and seed come from the file, m from the command line
    assert run(["exact-z", "--config", str(path), "--m", "0.1",
                "--output", str(out)]) == 0
    got = read_json(str(out))["meta"]["config"]
    assert got["L"] == 6
    assert got["m"] == 0.1
    assert got["seed"] == 9
    assert got["format"] == "json"


def test_reruns_are_byte_identical(tmp_path):
    # the output path is part of the resolved config, so rerun the same one
    path = str(tmp_path / "a.csv")
    argv = ["dimer-corr", "--L", "8", "--m", "0.1", "--rmax", "4",
            "--output", path]
    assert run(argv) == 0
    first = str(tmp_path / "first.csv")
    shutil.copy(path, first)
    assert run(argv) == 0
    assert filecmp.cmp(path, first, shallow=False)


def test_bad_input_reports_json_error(tmp_path, capsys):
    code = run(["fit", "--input", str(tmp_path / "missing.csv")])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "FileNotFoundError"
    assert "missing.csv" in err["error"]["message"]


def test_fit_command_recovers_exact_slope(tmp_path):
    rs = np.array([4, 8, 16, 32, 64], dtype=float)
    vals = 0.25 + np.log(rs) / math.pi ** 2
    src = tmp_path / "series.csv"
    src.write_text("r,variance\n" + "".join(
        "%g,%.17g\n" % (r, v) for r, v in zip(rs, vals)))
    out = tmp_path / "fit.json"
    assert run(["fit", "--input", str(src), "--kind", "log-slope",
                "--output", str(out)]) == 0
    doc = read_json(str(out))["fit"]
    assert abs(doc["derived"]["K"] - 1.0) < 1e-12
    assert doc["window"] == [8.0, 64.0]
    assert doc["n_points"] == 4


def test_dimer_corr_residual_shrinks(tmp_path):
    out = tmp_path / "corr.csv"
    assert run(["dimer-corr", "--m", "0.0", "--rmin", "4", "--rmax", "12",
                "--output", str(out)]) == 0
    rows = [line.split(",") for line in out.read_text().splitlines()
            if line and not line.startswith("#")][1:]
    resid = {int(float(r[0])): abs(float(r[3])) for r in rows}
    exact = {int(float(r[0])): float(r[1]) for r in rows}
    # hh channel on the axis: the residual is a small correction by r=12
    assert resid[12] < 0.05 * abs(exact[12])
    assert resid[12] < resid[4]


def test_height_cumulants_command(tmp_path):
    out = tmp_path / "hk.csv"
    assert run(["height-cumulants", "--m", "0.0", "--nmax", "2",
                "--rs", "8", "--output", str(out)]) == 0
    lines = [line for line in out.read_text().splitlines()
             if line and not line.startswith("#")]
    assert lines[0] == "r,kappa1,kappa2"
    r, k1, k2 = (float(t) for t in lines[1].split(","))
    assert r == 8
    assert abs(k1) < 1e-12
    assert abs(k2 - 0.40450750354082765) < 1e-9


def test_enumerate_command(tmp_path):
    out = tmp_path / "enum.json"
    assert run(["enumerate", "--L", "4", "--m", "0.0", "--lam", "0.3",
                "--format", "json", "--output", str(out)]) == 0
    doc = read_json(str(out))
    assert doc["n_matchings"] == 272
    assert doc["Z"] > doc["n_matchings"]  # lam > 0 upweights columnar states
    assert doc["mean_W"] > 0
    assert abs(sum(doc["sector_weight"].values()) - doc["Z"]) < 1e-9


def test_mcmc_command(tmp_path):
    out = tmp_path / "mcmc.json"
    assert run(["mcmc", "--L", "4", "--lam", "0.0", "--m", "0.0",
                "--sweeps", "2000", "--burnin", "500", "--thin", "5",
                "--seed", "3", "--format", "json",
                "--output", str(out)]) == 0
    doc = read_json(str(out))
    assert doc["n_samples"] == 300
    assert 0.0 < doc["acceptance"] <= 1.0
    occ = doc["bond_occupation"]
    assert abs(occ["mean"] - 0.25) < 0.15
    assert occ["stderr"] > 0
    assert doc["pair_cumulant"]["displacement"] == [2, 0]
    assert doc["meta"]["seed"] == 3


def test_perturb_command_finite(tmp_path):
    from dimerlab.lattice import build_torus
    from dimerlab.freecorr import FiniteCorrelator
    from dimerlab.perturbation import first_order_cumulant

    out = tmp_path / "pert.json"
    assert run(["perturb", "--L", "4", "--m", "0.1", "--bonds", "0,0,1",
                "--output", str(out)]) == 0
    doc = read_json(str(out))
    want = first_order_cumulant([[((0, 0), 1)]],
                                FiniteCorrelator(build_torus(4), 0.1))
    assert abs(doc["derivative"] - want.value) < 1e-12
    assert doc["tail_bound"] == 0.0


def test_multiscale_command(tmp_path, capsys):
    out = tmp_path / "scales.csv"
    assert run(["multiscale", "--m", "0.25", "--nodes", "96",
                "--probe", "8", "--output", str(out)]) == 0
    lines = [line for line in out.read_text().splitlines()
             if line and not line.startswith("#")]
    assert lines[0] == "h,deepest,amplitude,c,logC,r2"
    rows = [line.split(",") for line in lines[1:]]
    assert [int(float(r[0])) for r in rows] == [0, -1, -2]
    assert [int(float(r[1])) for r in rows] == [0, 0, 1]
    assert all(float(r[5]) > 0.9 for r in rows)  # stretched-exp fit quality


def test_reproduce_zmatch(capsys):
    assert run(["reproduce", "zmatch"]) == 0
    out = capsys.readouterr().out
    worst = float(out.strip().splitlines()[-1].split("=")[1])
    assert worst < 1e-9


def test_reproduce_variance_writes_fit_sidecar(tmp_path):
    out = tmp_path / "var.csv"
    assert run(["reproduce", "variance", "--L", "256",
                "--output", str(out)]) == 0
    fit = read_json(str(out) + ".fit.json")["fit"]
    assert abs(fit["derived"]["K"] - 1.0) < 0.05
    rows = [line for line in out.read_text().splitlines()
            if line and not line.startswith("#")]
    assert rows[0] == "r,variance"
    rs = [int(float(row.split(",")[0])) for row in rows[1:]]
    assert rs[0] == 4 and rs[-1] == 64 and len(rs) >= 10
    assert all(r % 2 == 0 for r in rs)


def test_plot_kinds_render_svg(tmp_path):
    var_csv = tmp_path / "var.csv"
    assert run(["reproduce", "variance", "--L", "64",
                "--output", str(var_csv)]) == 0
    corr_csv = tmp_path / "corr.csv"
    assert run(["dimer-corr", "--L", "8", "--m", "0.1", "--rmax", "4",
                "--output", str(corr_csv)]) == 0
    scales_csv = tmp_path / "scales.csv"
    assert run(["multiscale", "--m", "0.25", "--nodes", "96",
                "--output", str(scales_csv)]) == 0
    for kind, src in (("variance", var_csv), ("decay", corr_csv),
                      ("scales", scales_csv)):
        out = tmp_path / ("%s.svg" % kind)
        assert run(["plot", "--kind", kind, "--input", str(src),
                    "--output", str(out)]) == 0
        text = out.read_text()
        assert text.lstrip().startswith("<?xml")
        assert "<svg" in text
    # plots embed the resolved config, and reruns are byte-identical
    svg = str(tmp_path / "variance.svg")
    first = str(tmp_path / "first.svg")
    shutil.copy(svg, first)
    assert run(["plot", "--kind", "variance", "--input", str(var_csv),
                "--output", svg]) == 0
    assert filecmp.cmp(svg, first, shallow=False)


def test_schemas_resource_ships_with_package():
    text = (importlib.resources.files("dimerlab") / "schemas.json").read_text()
    doc = json.loads(text)
    assert doc["schema_version"] == 1
    assert "config_file" in doc and "output_header" in doc
