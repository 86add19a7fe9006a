import json

import numpy as np
import pytest

import blinkcorr
from blinkcorr import (
    Trajectory,
    eval_curve,
    log_grid,
    read_series,
    transition_rates,
    write_trajectory,
)
from blinkcorr.cli import main

PARAMS_TEXT = """\
# reference emitter
A31 = 3.3e8
Omega31 = 2.9e8
A32_1 = 34.0
A32_2 = 249.0
A21_1 = 430.0
A21_2 = 2400.0
I_sc = 7.7e7
"""

# Same system with the optical rates slowed 1000x: identical occupations
# at a photon rate cheap enough for trajectory tests.
SLOW_PARAMS_TEXT = """\
A31 = 3.3e5
Omega31 = 2.9e5
A32_1 = 34.0
A32_2 = 249.0
A21_1 = 430.0
A21_2 = 2400.0
I_sc = 0.0
"""


@pytest.fixture()
def params_file(tmp_path):
    path = tmp_path / "params.txt"
    path.write_text(PARAMS_TEXT)
    return str(path)


@pytest.fixture()
def slow_params_file(tmp_path):
    path = tmp_path / "slow.txt"
    path.write_text(SLOW_PARAMS_TEXT)
    return str(path)


def read_manifest(path):
    with open(path + ".manifest.json") as handle:
        return json.load(handle)


def test_eval_round_trip(tmp_path, params_file, reference_params):
    out = str(tmp_path / "curve.csv")
    assert main(["eval", "--params", params_file, "--grid", "1e-9:1e-2:10", "--out", out]) == 0
    series = read_series(out)
    expected = eval_curve(reference_params, log_grid(1e-9, 1e-2, 10))
    assert np.array_equal(series.tau, expected.tau)
    assert np.max(np.abs(series.g - expected.g)) < 1e-15

    doc = read_manifest(out)
    assert doc["subcommand"] == "eval"
    assert doc["version"] == blinkcorr.__version__
    assert params_file in doc["inputs"]
    assert len(doc["inputs"][params_file]) == 64
    assert doc["params"]["A31"] == 3.3e8


def test_eval_chain(tmp_path):
    chain_path = tmp_path / "chain.txt"
    chain_path.write_text("2\n1e5 0.0\n0.0 37.0\n143.0 0.0\n")
    out = str(tmp_path / "chain_curve.csv")
    assert main(["eval", "--chain", str(chain_path), "--grid", "1e-4:1:10", "--out", out]) == 0
    series = read_series(out)
    # Two-state blinker closed form.
    pi_on = 143.0 / 180.0
    expected = 1.0 + (1.0 - pi_on) / pi_on * np.exp(-180.0 * series.tau)
    assert np.max(np.abs(series.g - expected)) < 1e-10


def test_eval_requires_exactly_one_source(tmp_path, params_file):
    out = str(tmp_path / "x.csv")
    assert main(["eval", "--out", out]) == 2
    assert main(["eval", "--params", params_file, "--chain", params_file, "--out", out]) == 2


def test_eval_rejects_bad_grid(tmp_path, params_file):
    out = str(tmp_path / "x.csv")
    assert main(["eval", "--params", params_file, "--grid", "1:2", "--out", out]) == 2
    assert main(["eval", "--params", params_file, "--grid", "5:1:10", "--out", out]) == 2
    assert main(["eval", "--params", params_file, "--grid", "1e-9:1e-3:0", "--out", out]) == 2


def test_eval_missing_params_file(tmp_path):
    out = str(tmp_path / "x.csv")
    assert main(["eval", "--params", str(tmp_path / "nope.txt"), "--out", out]) == 2


def test_eval_malformed_params_file(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("A31 = 3.3e8\nA31 = 1.0\n")
    out = str(tmp_path / "x.csv")
    assert main(["eval", "--params", str(bad), "--out", out]) == 2


def test_rates_table_and_out(tmp_path, params_file, reference_params, capsys):
    out = str(tmp_path / "rates.txt")
    assert main(["rates", "--params", params_file, "--out", out]) == 0
    stdout = capsys.readouterr().out
    for label in ("shelving_1", "shelving_2", "deshelving_1", "deshelving_2"):
        assert label in stdout

    closed = transition_rates(reference_params)
    values = {}
    for line in open(out):
        line = line.split("#", 1)[0].strip()
        if line:
            key, _, text = line.partition("=")
            values[key.strip()] = float(text)
    assert values["closed_shelving_1"] == pytest.approx(closed[0][0], rel=1e-12)
    assert values["closed_deshelving_2"] == pytest.approx(closed[1][1], rel=1e-12)
    assert values["perturbative_deshelving_1"] == pytest.approx(430.0, rel=1e-3)
    # The generator-derived shelving rates sit well below the closed form.
    assert values["rel_dev_shelving_1"] > 0.2


def test_rates_zero_metastable(tmp_path, capsys):
    path = tmp_path / "nometa.txt"
    path.write_text(
        "A31 = 3.3e8\nOmega31 = 2.9e8\nA32_1 = 0\nA32_2 = 0\n"
        "A21_1 = 0\nA21_2 = 0\nI_sc = 0\n"
    )
    out = str(tmp_path / "rates.txt")
    assert main(["rates", "--params", str(path), "--out", out]) == 0
    for line in open(out):
        line = line.split("#", 1)[0].strip()
        if line:
            _, _, text = line.partition("=")
            assert float(text) == 0.0


def test_rates_finite_dt_without_hierarchy(tmp_path):
    path = tmp_path / "flat.txt"
    path.write_text(
        "A31 = 1e6\nOmega31 = 1e6\nA32_1 = 5e5\nA32_2 = 5e5\n"
        "A21_1 = 5e5\nA21_2 = 5e5\nI_sc = 0\n"
    )
    with pytest.warns(Warning):
        code = main(["rates", "--params", str(path), "--method", "finite-dt"])
    assert code == 1


def test_simulate_deterministic(tmp_path, slow_params_file):
    out_a = str(tmp_path / "a.txt")
    out_b = str(tmp_path / "b.txt")
    out_c = str(tmp_path / "c.txt")
    base = ["simulate", "--params", slow_params_file, "--duration", "0.5"]
    assert main(base + ["--seed", "5", "--out", out_a]) == 0
    assert main(base + ["--seed", "5", "--out", out_b]) == 0
    assert main(base + ["--seed", "6", "--out", out_c]) == 0
    assert open(out_a).read() == open(out_b).read()
    assert open(out_a).read() != open(out_c).read()
    doc = read_manifest(out_a)
    assert doc["seed"] == 5
    assert doc["subcommand"] == "simulate"


def test_simulate_requires_seed(tmp_path, slow_params_file):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--params", slow_params_file, "--duration", "0.5",
              "--out", str(tmp_path / "x.txt")])
    assert info.value.code == 2


def test_simulate_rejects_bad_duration(tmp_path, slow_params_file):
    out = str(tmp_path / "x.txt")
    assert main(["simulate", "--params", slow_params_file, "--duration", "-1",
                 "--seed", "1", "--out", out]) == 2


def test_simulate_with_estimate(tmp_path, slow_params_file, capsys):
    out = str(tmp_path / "traj.txt")
    g_out = str(tmp_path / "est.csv")
    assert main(["simulate", "--params", slow_params_file, "--duration", "2",
                 "--seed", "9", "--out", out, "--g-out", g_out,
                 "--grid", "1e-5:1e-1:8"]) == 0
    stdout = capsys.readouterr().out
    assert "photons" in stdout and "light fraction" in stdout
    series = read_series(g_out)
    assert series.sigma is not None
    assert len(series) > 10
    doc = read_manifest(g_out)
    assert set(doc["outputs"]) == {out, g_out}


def test_estimate_g_from_file(tmp_path, slow_params_file):
    traj_path = str(tmp_path / "traj.txt")
    assert main(["simulate", "--params", slow_params_file, "--duration", "2",
                 "--seed", "12", "--out", traj_path]) == 0
    out = str(tmp_path / "g.csv")
    assert main(["estimate-g", "--traj", traj_path, "--grid", "1e-5:1e-1:8",
                 "--out", out]) == 0
    series = read_series(out)
    assert np.all(series.sigma > 0.0)
    doc = read_manifest(out)
    assert doc["seed"] == 12  # carried through the trajectory header


def test_estimate_g_insufficient_data(tmp_path):
    traj_path = str(tmp_path / "lonely.txt")
    write_trajectory(Trajectory(times=np.array([0.5]), duration=1.0), traj_path)
    out = str(tmp_path / "g.csv")
    assert main(["estimate-g", "--traj", traj_path, "--out", out]) == 1


def test_fit_full_report(tmp_path, params_file, reference_params):
    data = str(tmp_path / "data.csv")
    assert main(["eval", "--params", params_file, "--grid", "1e-10:1:20",
                 "--out", data]) == 0
    cfg = tmp_path / "fit.cfg"
    cfg.write_text("bootstrap_resamples = 0\n")
    out = str(tmp_path / "report.txt")
    json_out = str(tmp_path / "report.json")
    curve_out = str(tmp_path / "fitcurve.csv")
    assert main(["fit", "--data", data, "--config", str(cfg), "--out", out,
                 "--json-out", json_out, "--curve-out", curve_out]) == 0

    text = open(out).read()
    for key in ("A31", "Omega31", "I_sc", "T_L", "T_D1", "T_D2", "p1", "P_L"):
        assert f"{key} = " in text

    doc = json.load(open(json_out))
    assert doc["values"]["A31"] == pytest.approx(reference_params.A31, rel=1e-4)
    assert doc["values"]["T_L"] == pytest.approx(8.107e-3, rel=1e-3)
    assert doc["stages"]["slow"]["converged"] is True

    curve = read_series(curve_out)
    assert curve.tau[0] == pytest.approx(1e-10, rel=1e-9)
    assert curve.tau[-1] == pytest.approx(1.0, rel=1e-9)

    doc = read_manifest(out)
    assert set(doc["inputs"]) == {data, str(cfg)}
    assert set(doc["outputs"]) == {out, json_out, curve_out}


def test_fit_partial_slow_only(tmp_path, params_file, capsys):
    full = str(tmp_path / "full.csv")
    assert main(["eval", "--params", params_file, "--grid", "1e-6:1:20",
                 "--out", full]) == 0
    out = str(tmp_path / "report.txt")
    curve_out = str(tmp_path / "curve.csv")
    assert main(["fit", "--data", full, "--out", out,
                 "--curve-out", curve_out]) == 0
    captured = capsys.readouterr()
    text = open(out).read()
    assert "partial" in text
    assert "fast stage: skipped" in text
    assert "T_L = " in text and "A31" not in text
    assert "skipping --curve-out" in captured.err
    import os

    assert not os.path.exists(curve_out)


def test_fit_config_errors(tmp_path, params_file):
    data = str(tmp_path / "data.csv")
    assert main(["eval", "--params", params_file, "--out", data]) == 0
    cfg = tmp_path / "bad.cfg"
    out = str(tmp_path / "r.txt")
    cfg.write_text("mystery = 1\n")
    assert main(["fit", "--data", data, "--config", str(cfg), "--out", out]) == 2
    cfg.write_text("free_amplitude = maybe\n")
    assert main(["fit", "--data", data, "--config", str(cfg), "--out", out]) == 2
    cfg.write_text("split_tau\n")
    assert main(["fit", "--data", data, "--config", str(cfg), "--out", out]) == 2


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    stdout = capsys.readouterr().out
    assert "8/8 checks passed" in stdout


def test_selftest_tolerance_scale_forces_failure(capsys):
    assert main(["selftest", "--tolerance-scale", "1e-12"]) == 1
    stdout = capsys.readouterr().out
    assert "FAIL" in stdout


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert blinkcorr.__version__ in capsys.readouterr().out
