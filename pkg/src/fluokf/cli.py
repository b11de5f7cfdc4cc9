"""Command-line front end: ``simulate``, ``tune``, ``run``, ``montecarlo``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bkf, ckf, ekf, io
from .config import ConfigError, RunConfig, default_config, load, save, to_ini
from .errors import FilterDivergedError, NumericalError
from .hybridkf import GaussianBelief
from .likelihood import minimize_nll, tune
from .montecarlo import FILTERS, run_filter_by_name, run_mc
from .sim import integrate, sample_measurements

logger = logging.getLogger("fluokf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
TUNE_TARGETS = ("presmooth", "ckf", "bkf", "ekf")


def _resolve(args) -> RunConfig:
    cfg = load(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, rng_seed=args.seed))
    if getattr(args, "replicates", None) is not None:
        if args.replicates < 2:
            raise ConfigError("--replicates must be at least 2")
        cfg = replace(cfg, replicates=args.replicates)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save(cfg, out / "config_resolved.ini")
    return out


def cmd_simulate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    traj = integrate(cfg.params, cfg.sim)
    meas = sample_measurements(traj, cfg.sim)
    io.write_trajectory(out / "trajectory.csv", traj)
    io.write_measurements(out / "measurements.csv", meas)
    logger.info("wrote %d grid rows and %d measurements to %s", len(traj.times), len(meas), out)
    return EXIT_OK


def preliminary_data(cfg: RunConfig):
    traj = integrate(cfg.params, cfg.sim)
    return sample_measurements(traj, cfg.sim, seed=cfg.prelim_seed)


def tune_target(cfg: RunConfig, target: str, meas=None):
    """ML-tune one filter's hyperparameters; returns ``(new_config, TuneResult)``."""
    meas = meas if meas is not None else preliminary_data(cfg)
    st = cfg.settings
    R = meas.meas_variance
    P0 = st.initial_cov(R)
    if target == "presmooth":
        res = tune(ckf.presmoother_problem(meas), [st.beta])
        st = replace(st, beta=float(res.theta[0]))
    elif target == "ckf":
        det = ckf.DetectorState(st.sigma1_0, cfg.params, t0=float(meas.times[0]))
        init = GaussianBelief(np.asarray(st.x0_guess, dtype=float), P0)
        nll = ckf.fallback_q_nll(cfg.params, meas, init, det, st.beta, dt=st.dt)
        res = minimize_nll(nll, [max(st.q_fallback, 1e-6)])
        st = replace(st, q_fallback=float(res.theta[0]))
    elif target == "bkf":
        res = tune(bkf.tuning_problem(cfg.params, meas, st.x0_guess, P0, dt=st.dt),
                   [st.theta, st.kappa])
        st = replace(st, theta=float(res.theta[0]), kappa=float(res.theta[1]))
    elif target == "ekf":
        init = GaussianBelief(np.asarray(st.x0_guess, dtype=float), P0)
        res = minimize_nll(ekf.q_nll(cfg.params, meas, init, dt=st.dt),
                           [max(q, 1e-6) for q in st.ekf_q])
        st = replace(st, ekf_q=tuple(float(v) for v in res.theta))
    else:
        raise ConfigError(f"unknown tuning target {target!r}")
    tuning = dict(cfg.tuning)
    tuning[f"{target}_nll"] = repr(res.nll)
    tuning[f"{target}_converged"] = str(res.converged).lower()
    return replace(cfg, settings=st, tuning=tuning), res


def cmd_tune(cfg: RunConfig, target: str, config_path=None) -> int:
    new_cfg, res = tune_target(cfg, target)
    if not res.converged:
        logger.warning("optimizer budget exhausted; writing best point found")
    logger.info("%s: theta=%s nll=%.6f", target, np.array2string(res.theta), res.nll)
    if config_path:
        save(new_cfg, config_path)
    _out_dir(new_cfg)
    print(f"{target}: " + ", ".join("%.6g" % v for v in res.theta) + f" (nll={res.nll:.6f})")
    return EXIT_OK


def cmd_run(cfg: RunConfig, name: str) -> int:
    out = _out_dir(cfg)
    meas_path = out / "measurements.csv"
    if not meas_path.exists():
        raise ConfigError(f"{meas_path} not found; run 'simulate' first")
    meas = io.read_measurements(meas_path, cfg.sim.meas_variance)
    truth = None
    traj_path = out / "trajectory.csv"
    if traj_path.exists():
        truth = io.truth_at(io.read_trajectory(traj_path), meas.times)
    target = out / f"estimates_{name}.csv"
    try:
        result = run_filter_by_name(name, cfg.params, meas, cfg.settings)
    except FilterDivergedError as exc:
        if exc.partial is not None and len(exc.partial):
            io.write_estimates(target, name, exc.partial, meas, truth)
        raise
    io.write_estimates(target, name, result, meas, truth)
    if truth is not None:
        err = np.linalg.norm(truth[-1] - result.filt_mean[-1, :3])
        logger.info("%s final error norm %.3g", name, err)
    return EXIT_OK


def cmd_montecarlo(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    summary = run_mc(cfg.mc_config())
    io.write_mc_summary(out / "mc_summary.csv", summary)
    io.write_mc_metrics(out / "mc_metrics.csv", summary)
    for name in summary.mean:
        logger.info("%s: median t_eps=%.3g h, coverage=%.3f, diverged=%d", name,
                    np.nanmedian(summary.t_eps[name]), summary.coverage(name),
                    summary.diverged[name])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluokf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int, metavar="N", help="measurement-noise seed")
        p.add_argument("--out", metavar="DIR")

    common(sub.add_parser("simulate", help="integrate the truth and sample noisy data"))
    p = sub.add_parser("tune", help="ML-tune hyperparameters on preliminary data")
    common(p)
    p.add_argument("--target", choices=TUNE_TARGETS, required=True)
    p = sub.add_parser("run", help="run one filter on the simulated measurements")
    common(p)
    p.add_argument("--filter", choices=FILTERS, required=True)
    p = sub.add_parser("montecarlo", help="Monte Carlo comparison of the filters")
    common(p)
    p.add_argument("--filter", help="comma-separated subset of ckf,bkf,ekf")
    p.add_argument("--replicates", type=int, metavar="N")
    sub.add_parser("config", help="print the default configuration")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "config":
        sys.stdout.write(to_ini(default_config()))
        return EXIT_OK
    try:
        cfg = _resolve(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "tune":
            return cmd_tune(cfg, args.target, args.config)
        if args.command == "run":
            return cmd_run(cfg, args.filter)
        if args.command == "montecarlo":
            if args.filter:
                names = tuple(n.strip() for n in args.filter.split(",") if n.strip())
                if set(names) - set(FILTERS):
                    raise ConfigError(f"--filter: unknown filter in {args.filter!r}")
                cfg = replace(cfg, filters=names)
            return cmd_montecarlo(cfg)
    except (ConfigError, io.SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
