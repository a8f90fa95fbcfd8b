import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gncfgo import formats
from gncfgo.cli import main
from gncfgo.diagnostics import enu_error_stats
from gncfgo.obs_model import SatelliteObservation
from gncfgo.pipeline import RunConfig
from gncfgo.sim import REFERENCE_SCENARIOS, Scenario

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def scen_c(tmp_path_factory):
    d = tmp_path_factory.mktemp("c")
    assert run("simulate", "--scenario", "C", "--obs-out", d / "obs.csv",
               "--truth-out", d / "truth.csv") == 0
    return d


def test_simulate_headers_and_rows(tmp_path):
    assert run("simulate", "--config", CONFIGS / "scenario_a.cfg", "--obs-out",
               tmp_path / "obs.csv", "--truth-out", tmp_path / "truth.csv") == 0
    obs = (tmp_path / "obs.csv").read_text().splitlines()
    truth = (tmp_path / "truth.csv").read_text().splitlines()
    assert obs[0] == "t,sat_id,sys,px,py,pz,vx,vy,vz,pseudorange,doppler,wavelength,cn0,label"
    assert truth[0] == "t,px,py,pz,vx,vy,vz,clk_bias,clk_drift"
    assert len(obs) - 1 == 100 * 10
    assert len(truth) - 1 == 100
    assert b"\r" not in (tmp_path / "obs.csv").read_bytes()


def test_simulate_is_byte_identical(tmp_path):
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        run("simulate", "--scenario", "D", "--seed", 7, "--obs-out", tmp_path / sub / "o.csv",
            "--truth-out", tmp_path / sub / "t.csv")
    for name in ("o.csv", "t.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("name", sorted(REFERENCE_SCENARIOS))
def test_config_files_match_reference_scenarios(name):
    scenario = formats.parse_config(CONFIGS / f"scenario_{name.lower()}.cfg", Scenario)
    assert scenario == REFERENCE_SCENARIOS[name]


def test_run_config_file():
    cfg = formats.parse_config(CONFIGS / "run_gnc.cfg", RunConfig)
    assert (cfg.method, cfg.c, cfg.decay, cfg.init_multiplier) == ("fgo-gnc", 2.0, 1.4, 3.0)


def test_run_config_defaults():
    cfg = RunConfig()
    assert (cfg.c, cfg.decay, cfg.init_multiplier, cfg.paper_literal_weights) == \
           (2.0, 1.4, 3.0, False)


def test_strict_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("duration = 10\nwobble = 3\n")
    assert run("simulate", "--config", bad, "--obs-out", tmp_path / "o.csv",
               "--truth-out", tmp_path / "t.csv") == 3
    assert "bad.cfg:2" in capsys.readouterr().err
    assert not (tmp_path / "o.csv").exists()
    with pytest.raises(formats.InputError, match=":2: duplicate"):
        formats.parse_config("seed = 1\nseed = 2\n", Scenario, is_text=True)
    with pytest.raises(formats.InputError, match=":1: bad value"):
        formats.parse_config("n_sats = ten\n", Scenario, is_text=True)
    with pytest.raises(formats.InputError, match="expected key=value"):
        formats.parse_config("n_sats\n", Scenario, is_text=True)


def test_solve_wls_scenario_a(tmp_path):
    run("simulate", "--scenario", "A", "--obs-out", tmp_path / "obs.csv",
        "--truth-out", tmp_path / "truth.csv")
    assert run("solve", "--method", "wls", "--obs", tmp_path / "obs.csv",
               "--out", tmp_path / "sol.csv") == 0
    sol, method = formats.read_solution(tmp_path / "sol.csv")
    truth = formats.read_truth(tmp_path / "truth.csv")
    assert method == "wls"
    for s, t in zip(sol, truth):
        assert np.linalg.norm(s.pos - t.pos) < 1e-6


def test_solve_gnc_weights_rows(scen_c, tmp_path):
    assert run("solve", "--method", "fgo-gnc", "--obs", scen_c / "obs.csv", "--out",
               tmp_path / "sol.csv", "--weights-out", tmp_path / "w.csv",
               "--trace-out", tmp_path / "trace.csv") == 0
    n_pr = len((scen_c / "obs.csv").read_text().splitlines()) - 1
    rows = (tmp_path / "w.csv").read_text().splitlines()
    assert rows[0] == "t,sat_id,weight,residual_m,round"
    assert len(rows) - 1 == n_pr
    n_rounds = len(formats.read_trace(tmp_path / "trace.csv"))
    assert {r.split(",")[-1] for r in rows[1:]} == {str(n_rounds)}

    assert run("solve", "--method", "fgo-gnc", "--obs", scen_c / "obs.csv", "--out",
               tmp_path / "sol2.csv", "--weights-out", tmp_path / "w_all.csv",
               "--all-rounds") == 0
    all_rounds = formats.read_weights(tmp_path / "w_all.csv")
    assert sorted(all_rounds) == list(range(1, n_rounds + 1))
    assert all(len(v[0]) == n_pr for v in all_rounds.values())


@pytest.mark.parametrize("method", ["fgo-gm", "fgo-cauchy"])
def test_solve_irls_writes_weights(scen_c, tmp_path, method):
    assert run("solve", "--method", method, "--obs", scen_c / "obs.csv", "--out",
               tmp_path / "sol.csv", "--weights-out", tmp_path / "w.csv") == 0
    rounds = formats.read_weights(tmp_path / "w.csv")
    assert len(rounds) == 1


def _collinear_obs(path):
    base = np.array([6378137.0, 0.0, 0.0])
    epochs = [[SatelliteObservation(float(t), i + 1, "GPS", base + [2e7 * (i + 1), 0, 0],
                                    [0, 0, 0], 2e7 * (i + 1), 0.0, 0.19, 45.0)
               for i in range(6)] for t in range(3)]
    formats.write_observations(path, epochs)


@pytest.mark.parametrize("method", ["wls", "fgo", "fgo-gnc"])
def test_rank_deficient_input_exits_2_without_output(tmp_path, method):
    _collinear_obs(tmp_path / "obs.csv")
    out = tmp_path / "sol.csv"
    assert run("solve", "--method", method, "--obs", tmp_path / "obs.csv", "--out", out,
               "--weights-out", tmp_path / "w.csv") == 2
    assert not out.exists() and not (tmp_path / "w.csv").exists()
    assert not list(tmp_path.glob("*.tmp"))


def test_malformed_observations_exit_3(tmp_path, capsys):
    p = tmp_path / "obs.csv"
    p.write_text(",".join(formats.OBS_HEADER) + "\n0.0,1,GPS,1,2\n")
    assert run("solve", "--obs", p, "--out", tmp_path / "sol.csv") == 3
    assert "obs.csv:2" in capsys.readouterr().err
    p.write_text("t,sat\n")
    assert run("solve", "--obs", p, "--out", tmp_path / "sol.csv") == 3
    assert run("solve", "--obs", tmp_path / "missing.csv", "--out", tmp_path / "s.csv") == 3
    assert not (tmp_path / "sol.csv").exists()


def test_eval_report(scen_c, tmp_path):
    for m in ("fgo", "fgo-gnc"):
        run("solve", "--method", m, "--obs", scen_c / "obs.csv", "--out", tmp_path / f"{m}.csv")
    assert run("eval", "--solution", tmp_path / "fgo-gnc.csv", "--truth", scen_c / "truth.csv",
               "--baseline", tmp_path / "fgo.csv", "--out", tmp_path / "report.txt") == 0
    rep = formats.read_report(tmp_path / "report.txt")
    assert rep["method"] == "fgo-gnc" and rep["baseline_method"] == "fgo"
    sol, _ = formats.read_solution(tmp_path / "fgo-gnc.csv")
    base, _ = formats.read_solution(tmp_path / "fgo.csv")
    truth = formats.read_truth(scen_c / "truth.csv")
    ref = enu_error_stats(sol, truth).stats()
    for k, v in ref.items():
        assert abs(float(rep[k]) - v) <= 1e-12
    b = enu_error_stats(base, truth).stats()["mean_2d_m"]
    assert float(rep["improvement_2d_pct"]) == pytest.approx((b - ref["mean_2d_m"]) / b * 100,
                                                             abs=1e-12)


def test_eval_identical_is_zero(scen_c, tmp_path):
    truth = formats.read_truth(scen_c / "truth.csv")
    formats.atomic_write(tmp_path / "sol.csv", formats.solution_csv(truth, "truth"))
    assert run("eval", "--solution", tmp_path / "sol.csv", "--truth", scen_c / "truth.csv",
               "--out", tmp_path / "r.txt") == 0
    rep = formats.read_report(tmp_path / "r.txt")
    assert all(float(rep[k]) == 0.0 for k in rep if k.endswith("_m"))


def test_eval_misaligned_exit_3(scen_c, tmp_path):
    truth = formats.read_truth(scen_c / "truth.csv")
    for s in truth:
        s.t += 1000.0
    formats.atomic_write(tmp_path / "sol.csv", formats.solution_csv(truth, "x"))
    assert run("eval", "--solution", tmp_path / "sol.csv", "--truth", scen_c / "truth.csv",
               "--out", tmp_path / "r.txt") == 3


def test_diagnose_outputs(scen_c, tmp_path):
    run("solve", "--method", "fgo-gnc", "--obs", scen_c / "obs.csv", "--out", tmp_path / "s.csv",
        "--weights-out", tmp_path / "w.csv", "--residuals-out", tmp_path / "r.csv",
        "--trace-out", tmp_path / "t.csv", "--all-rounds")
    out = tmp_path / "diag"
    assert run("diagnose", "--weights", tmp_path / "w.csv", "--residuals", tmp_path / "r.csv",
               "--trace", tmp_path / "t.csv", "--out-dir", out) == 0
    gmm = (out / "gmm.csv").read_text().splitlines()
    assert len(gmm) == 1 + 3
    hist = (out / "weight_histogram.csv").read_text().splitlines()[1:]
    n_rounds = len(formats.read_trace(tmp_path / "t.csv"))
    assert len(hist) == 20 * n_rounds
    n_pr = len((scen_c / "obs.csv").read_text().splitlines()) - 1
    final = [int(r.split(",")[-1]) for r in hist if r.startswith(f"{n_rounds},")]
    assert sum(final) == n_pr
    res = (out / "residual_histogram.csv").read_text().splitlines()[1:]
    assert sum(int(r.split(",")[-1]) for r in res) == n_pr
    thetas = [row[1] for row in formats.read_trace(out / "trace.csv")]
    assert all(b < a for a, b in zip(thetas, thetas[1:]))


def test_diagnose_rejects_empty_and_bad_trace(tmp_path):
    assert run("diagnose", "--out-dir", tmp_path / "d") == 3
    (tmp_path / "w.csv").write_text(",".join(formats.WEIGHTS_HEADER) + "\n")
    assert run("diagnose", "--weights", tmp_path / "w.csv", "--out-dir", tmp_path / "d") == 3
    (tmp_path / "t.csv").write_text(",".join(formats.TRACE_HEADER)
                                    + "\n1,2.0,1,1,1\n2,3.0,1,1,1\n")
    assert run("diagnose", "--trace", tmp_path / "t.csv", "--out-dir", tmp_path / "d") == 3


def test_entry_point_and_log_level(tmp_path):
    env = dict(os.environ, LOG_LEVEL="info")
    proc = subprocess.run([sys.executable, "-m", "gncfgo.cli", "simulate", "--scenario", "A",
                           "--obs-out", str(tmp_path / "o.csv"), "--truth-out",
                           str(tmp_path / "t.csv")], capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert proc.stdout.startswith("epochs=100 observations=1000")
    proc = subprocess.run([sys.executable, "-m", "gncfgo.cli", "solve", "--obs",
                           str(tmp_path / "o.csv"), "--out", str(tmp_path / "s.csv")],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and "INFO" in proc.stderr
