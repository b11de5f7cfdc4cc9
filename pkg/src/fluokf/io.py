"""Plot-ready CSV files: comma-separated, header row, 17 significant digits."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .hybridkf import FilterOutput
from .sim import MeasurementSeries, Trajectory

TRAJECTORY_HEADER = ["time", "s", "e", "f"]
MEASUREMENT_HEADER = ["time", "y"]
SUMMARY_HEADER = ["time", "filter", "component", "mean", "se", "band_lo", "band_hi"]
METRICS_HEADER = ["filter", "replicate", "rmse", "t_eps"]


class SchemaError(ValueError):
    pass


def fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % value


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_table(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_header:
            raise SchemaError(f"{path}: expected header {expected_header}, found {header}")
        rows = [row for row in reader if row]
    try:
        return np.array(rows, dtype=float).reshape(len(rows), len(expected_header))
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric entry ({exc})") from exc


def write_trajectory(path, traj: Trajectory) -> None:
    write_rows(path, TRAJECTORY_HEADER,
               (np.concatenate(([t], x)) for t, x in zip(traj.times, traj.states)))


def read_trajectory(path) -> Trajectory:
    data = read_table(path, TRAJECTORY_HEADER)
    return Trajectory(times=data[:, 0], states=data[:, 1:])


def write_measurements(path, meas: MeasurementSeries) -> None:
    write_rows(path, MEASUREMENT_HEADER, zip(meas.times, meas.values))


def read_measurements(path, meas_variance: float) -> MeasurementSeries:
    data = read_table(path, MEASUREMENT_HEADER)
    return MeasurementSeries(data[:, 0], data[:, 1], meas_variance)


def truth_at(traj: Trajectory, times, tol: float = 1e-9) -> np.ndarray:
    """States of ``traj`` at ``times``, which must be grid points."""
    idx = np.searchsorted(traj.times, np.asarray(times) - tol)
    idx = np.clip(idx, 0, len(traj.times) - 1)
    if np.any(np.abs(traj.times[idx] - times) > tol):
        raise SchemaError("measurement times are not on the trajectory grid")
    return traj.states[idx]


def estimate_columns(name: str, out: FilterOutput, meas: MeasurementSeries, truth=None):
    """Column names and data for an estimates CSV."""
    n = len(out)
    cols = {"time": out.times, "y": meas.values[:n]}
    labels = ["s", "e", "f", "r"][: out.filt_mean.shape[1]]
    for i, lab in enumerate(labels):
        cols[f"{lab}_hat"] = out.filt_mean[:, i]
    for i, lab in enumerate(labels):
        cols[f"var_{lab}"] = out.filt_cov[:, i, i]
    if name == "ckf":
        cols["sigma1_hat"] = out.sigma1[:n]
        cols["y_hat"] = out.yhat[:n]
        cols["s_sigma"] = out.s_sigma[:n]
        cols["mu_hat"] = out.mu_hat[:n]
    if truth is not None:
        for i, lab in enumerate(["s", "e", "f"]):
            cols[f"err_{lab}"] = truth[:n, i] - out.filt_mean[:, i]
    return cols


def write_estimates(path, name: str, out: FilterOutput, meas: MeasurementSeries, truth=None) -> None:
    cols = estimate_columns(name, out, meas, truth)
    write_rows(path, list(cols), zip(*cols.values()))


def read_columns(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_mc_summary(path, summary) -> None:
    def rows():
        for name in summary.mean:
            lo, hi = summary.band(name)
            for k, t in enumerate(summary.times):
                for c, comp in enumerate(("s", "e", "f")):
                    yield (t, name, comp, summary.mean[name][k, c], summary.se[name][k, c],
                           lo[k, c], hi[k, c])

    write_rows(path, SUMMARY_HEADER, rows())


def write_mc_metrics(path, summary) -> None:
    def rows():
        for name in summary.rmse:
            for i, (r, t) in enumerate(zip(summary.rmse[name], summary.t_eps[name])):
                yield (name, i, r, t)

    write_rows(path, METRICS_HEADER, rows())
