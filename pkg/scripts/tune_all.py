"""Tune every filter on preliminary data and save the resulting config.

    python scripts/tune_all.py --out results/tuning

Writes ``tuned.ini`` and ``tuning.csv`` (target, parameter, value, nll, converged).
"""

import argparse
from pathlib import Path

from fluokf import io
from fluokf.cli import preliminary_data, tune_target
from fluokf.config import default_config, load, save

PARAMETERS = {
    "presmooth": lambda st: [("beta", st.beta)],
    "ckf": lambda st: [("q_fallback", st.q_fallback)],
    "bkf": lambda st: [("theta", st.theta), ("kappa", st.kappa)],
    "ekf": lambda st: [(f"q{i}", q) for i, q in enumerate(st.ekf_q)],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="results/tuning")
    args = ap.parse_args()

    cfg = load(args.config) if args.config else default_config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meas = preliminary_data(cfg)
    rows = []
    for target in PARAMETERS:  # the ckf fallback uses the tuned beta
        cfg, res = tune_target(cfg, target, meas)
        for name, value in PARAMETERS[target](cfg.settings):
            rows.append((target, name, value, res.nll, str(res.converged).lower()))
            print(f"{target:9s} {name:10s} {value:.6g}  nll={res.nll:.4f}")
    save(cfg, out / "tuned.ini")
    io.write_rows(out / "tuning.csv", ["target", "parameter", "value", "nll", "converged"], rows)


if __name__ == "__main__":
    main()
