import time

import numpy as np
import pytest

from fluokf import io
from fluokf.cli import main
from fluokf.config import default_config, load, save


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(out)]) == 0
    return out


def test_simulate_outputs(simulated):
    meas = io.read_table(simulated / "measurements.csv", io.MEASUREMENT_HEADER)
    traj = io.read_table(simulated / "trajectory.csv", io.TRAJECTORY_HEADER)
    assert meas.shape == (433, 2)
    np.testing.assert_allclose(meas[:, 0], np.arange(433) / 12, atol=1e-12)
    np.testing.assert_array_equal(traj[0, 1:], [0.0, 1.0, 0.0])
    assert (simulated / "config_resolved.ini").exists()
    assert load(simulated / "config_resolved.ini").out_dir == str(simulated)


def test_csv_is_lossless(simulated):
    meas = io.read_measurements(simulated / "measurements.csv", 1e-4)
    io.write_measurements(simulated / "copy.csv", meas)
    assert (simulated / "copy.csv").read_text() == (simulated / "measurements.csv").read_text()


def test_washout_start_gives_constant_truth(tmp_path):
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text("[simulation]\nx0 = 2, 0, 0\nt_end = 2\n")
    assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
    traj = io.read_table(tmp_path / "trajectory.csv", io.TRAJECTORY_HEADER)
    np.testing.assert_array_equal(traj[:, 1:], np.tile([2.0, 0.0, 0.0], (len(traj), 1)))


def test_seed_flag_changes_noise(tmp_path):
    main(["simulate", "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["simulate", "--out", str(tmp_path / "b"), "--seed", "2"])
    main(["simulate", "--out", str(tmp_path / "c"), "--seed", "1"])
    a, b, c = ((tmp_path / d / "measurements.csv").read_text() for d in "abc")
    assert a == c and a != b


@pytest.mark.parametrize("name", ["ckf", "bkf", "ekf"])
def test_run_writes_estimates(simulated, name):
    assert main(["run", "--filter", name, "--out", str(simulated)]) == 0
    cols = io.read_columns(simulated / f"estimates_{name}.csv")
    assert len(cols["time"]) == 433
    for key in ("time", "y", "s_hat", "e_hat", "f_hat", "var_s", "var_e", "var_f", "err_s"):
        assert key in cols
    assert ("r_hat" in cols) == (name == "bkf")
    assert ("mu_hat" in cols) == (name == "ckf")
    if name == "ckf":
        err = np.sqrt(cols["err_s"][-1] ** 2 + cols["err_e"][-1] ** 2 + cols["err_f"][-1] ** 2)
        assert err < 0.1


def test_run_without_measurements_is_config_error(tmp_path, capsys):
    assert main(["run", "--filter", "ckf", "--out", str(tmp_path)]) == 1
    assert "simulate" in capsys.readouterr().err


def test_run_rejects_bad_header(tmp_path):
    (tmp_path / "measurements.csv").write_text("t,value\n0,1\n")
    assert main(["run", "--filter", "ekf", "--out", str(tmp_path)]) == 1


def test_divergence_exit_code_and_partial_csv(tmp_path):
    (tmp_path / "measurements.csv").write_text("time,y\n0,0\n100,1e300\n200,-1e300\n")
    cfg = tmp_path / "c.ini"
    cfg.write_text("[filters]\ndt = 50\n[ekf]\nq_diag = 1000, 1000, 1000\n[model]\nmu_max = 100\nk_s = 0.001\n")
    code = main(["run", "--filter", "ekf", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 2
    cols = io.read_columns(tmp_path / "estimates_ekf.csv")
    assert 1 <= len(cols["time"]) < 3


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[model]\nalpha = 1.5\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert f"{cfg}:2:" in capsys.readouterr().err


def test_montecarlo_smoke(tmp_path):
    start = time.perf_counter()
    code = main(["montecarlo", "--replicates", "2", "--out", str(tmp_path)])
    assert code == 0
    assert time.perf_counter() - start < 30
    summary = (tmp_path / "mc_summary.csv").read_text().splitlines()
    assert summary[0] == ",".join(io.SUMMARY_HEADER)
    assert len(summary) == 1 + 433 * 3 * 3
    metrics = (tmp_path / "mc_metrics.csv").read_text().splitlines()
    assert metrics[0] == ",".join(io.METRICS_HEADER)
    assert len(metrics) == 1 + 2 * 3


def test_montecarlo_filter_subset_and_determinism(tmp_path):
    for d in ("a", "b"):
        assert main(["montecarlo", "--replicates", "2", "--filter", "bkf",
                     "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "mc_summary.csv").read_text()
    assert a == (tmp_path / "b" / "mc_summary.csv").read_text()
    assert {line.split(",")[1] for line in a.splitlines()[1:]} == {"bkf"}


def test_montecarlo_rejects_unknown_filter(tmp_path):
    assert main(["montecarlo", "--replicates", "2", "--filter", "ukf", "--out", str(tmp_path)]) == 1


def test_montecarlo_rejects_single_replicate(tmp_path):
    assert main(["montecarlo", "--replicates", "1", "--out", str(tmp_path)]) == 1


def test_tune_presmooth_updates_config(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    save(default_config(), cfg)
    assert main(["tune", "--target", "presmooth", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    tuned = load(cfg)
    assert 0.0013 <= tuned.settings.beta <= 0.13
    assert "presmooth_nll" in tuned.tuning
    assert tuned.tuning["presmooth_converged"] in ("true", "false")
    assert "presmooth:" in capsys.readouterr().out


def test_config_subcommand_prints_defaults(capsys):
    assert main(["config"]) == 0
    assert "[model]" in capsys.readouterr().out


@pytest.mark.parametrize("target,fields", [("ckf", 1), ("bkf", 2), ("ekf", 3)])
def test_tune_targets_write_their_parameters(target, fields):
    from dataclasses import replace
    from fluokf.cli import tune_target
    base = default_config()
    cfg = replace(base, sim=replace(base.sim, t_end=4.0))
    new, res = tune_target(cfg, target)
    assert res.theta.shape == (fields,)
    assert res.nll <= res.nll_initial
    st = new.settings
    written = {"ckf": [st.q_fallback], "bkf": [st.theta, st.kappa], "ekf": list(st.ekf_q)}[target]
    np.testing.assert_allclose(written, res.theta)
    assert f"{target}_nll" in new.tuning
