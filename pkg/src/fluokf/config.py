"""Run configuration stored as an INI file (``key = value`` under sections).

Units follow the rest of the package: hours and g/L.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .model import ModelParams
from .montecarlo import FILTERS, FilterSettings, McConfig
from .sim import SimConfig


class ConfigError(ValueError):
    def __init__(self, message, path=None, line=None):
        self.path, self.line = path, line
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + message)


@dataclass
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    sim: SimConfig = field(default_factory=SimConfig)
    settings: FilterSettings = field(default_factory=FilterSettings)
    filters: tuple = FILTERS
    prelim_seed: int = 1001
    replicates: int = 500
    base_seed: int = 10_000
    eps: float = 0.1
    workers: int = 1
    out_dir: str = "out"
    tuning: dict = field(default_factory=dict)

    def mc_config(self) -> McConfig:
        return McConfig(params=self.params, sim=self.sim, settings=self.settings,
                        n_replicates=self.replicates, base_seed=self.base_seed,
                        filters=tuple(self.filters), eps=self.eps, workers=self.workers)


# Hyperparameters from ``fluokf tune`` (targets presmooth, ckf, bkf, ekf in
# that order) on preliminary data with seed 1001 and R = 1e-4. The CKF and
# EKF process noise settle on the lower box bound.
DEFAULT_SETTINGS = FilterSettings(
    x0_guess=(0.5, 1.5, 0.0),
    sigma1_0=0.5,
    beta=0.009532915252727238,
    q_fallback=1e-6,
    theta=0.0020101888374905934,
    kappa=0.017185418974180175,
    ekf_q=(1e-6, 1e-6, 1e-6),
)


def default_config() -> RunConfig:
    return RunConfig(settings=DEFAULT_SETTINGS)


def _fmt(value):
    if isinstance(value, (tuple, list)):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_ini(cfg: RunConfig) -> str:
    p, s, st = cfg.params, cfg.sim, cfg.settings
    sections = {
        "model": asdict(p),
        "simulation": dict(t0=s.t0, t_end=s.t_end, dt_integ=s.dt_integ,
                           sample_interval=s.sample_interval, x0=tuple(s.x0),
                           meas_variance=s.meas_variance, seed=s.rng_seed,
                           prelim_seed=cfg.prelim_seed),
        "filters": dict(names=tuple(cfg.filters), x0_guess=tuple(st.x0_guess),
                        initial_var_s=st.initial_var[0], initial_var_e=st.initial_var[1],
                        dt=st.dt),
        "ckf": dict(sigma1_0=st.sigma1_0, beta=st.beta, q_fallback=st.q_fallback),
        "bkf": dict(theta=st.theta, kappa=st.kappa),
        "ekf": dict(q_diag=tuple(st.ekf_q)),
        "montecarlo": dict(replicates=cfg.replicates, base_seed=cfg.base_seed,
                           eps=cfg.eps, workers=cfg.workers),
        "output": dict(dir=cfg.out_dir),
    }
    if cfg.tuning:
        sections["tuning"] = dict(cfg.tuning)
    lines = []
    for name, values in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)


def save(cfg: RunConfig, path) -> None:
    Path(path).write_text(to_ini(cfg))


class _Reader:
    """Typed access to a parsed INI file with line-anchored errors."""

    def __init__(self, text: str, path=None):
        self.path = path
        self.lines = text.splitlines()
        self.parser = configparser.ConfigParser()
        try:
            self.parser.read_string(text, source=str(path or "<config>"))
        except configparser.ParsingError as exc:
            line = exc.errors[0][0] if exc.errors else None
            raise ConfigError("malformed line", path, line) from exc
        except configparser.Error as exc:
            raise ConfigError(str(exc).splitlines()[0], path, getattr(exc, "lineno", None)) from exc
        self.used = set()

    def line_of(self, section, key):
        current = None
        for i, raw in enumerate(self.lines, start=1):
            text = raw.strip()
            if text.startswith("[") and text.endswith("]"):
                current = text[1:-1].strip()
            elif current == section and "=" in text and text.split("=", 1)[0].strip().lower() == key:
                return i
        return None

    def raw(self, section, key):
        if self.parser.has_option(section, key):
            self.used.add((section, key))
            return self.parser.get(section, key)
        return None

    def fail(self, section, key, message):
        raise ConfigError(f"[{section}] {key}: {message}", self.path, self.line_of(section, key))

    def number(self, section, key, default, kind=float):
        text = self.raw(section, key)
        if text is None:
            return default
        try:
            value = kind(text)
        except ValueError:
            self.fail(section, key, f"expected {kind.__name__}, got {text!r}")
        if kind is float and not math.isfinite(value):
            self.fail(section, key, "must be finite")
        return value

    def vector(self, section, key, default, size=None):
        text = self.raw(section, key)
        if text is None:
            return tuple(default)
        try:
            values = tuple(float(v) for v in text.split(",") if v.strip())
        except ValueError:
            self.fail(section, key, f"expected comma-separated numbers, got {text!r}")
        if size is not None and len(values) != size:
            self.fail(section, key, f"expected {size} values, got {len(values)}")
        return values

    def words(self, section, key, default):
        text = self.raw(section, key)
        if text is None:
            return tuple(default)
        return tuple(w.strip().lower() for w in text.split(",") if w.strip())

    def check(self, section, keys, build):
        """Build an object, anchoring a validation error at the key it names."""
        try:
            return build()
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            message = str(exc)
            named = [k for k in keys if k in message and self.parser.has_option(section, k)]
            key = named[0] if named else keys[0]
            self.fail(section, key, message)


def parse(text: str, path=None) -> RunConfig:
    r = _Reader(text, path)
    base = default_config()
    p0, s0, st0 = base.params, base.sim, base.settings

    model = {f.name: r.number("model", f.name, getattr(p0, f.name)) for f in fields(ModelParams)}
    params = r.check("model", list(model), lambda: ModelParams(**model))

    sim_kwargs = dict(
        t0=r.number("simulation", "t0", s0.t0),
        t_end=r.number("simulation", "t_end", s0.t_end),
        dt_integ=r.number("simulation", "dt_integ", s0.dt_integ),
        sample_interval=r.number("simulation", "sample_interval", s0.sample_interval),
        x0=r.vector("simulation", "x0", s0.x0, size=3),
        meas_variance=r.number("simulation", "meas_variance", s0.meas_variance),
        rng_seed=r.number("simulation", "seed", s0.rng_seed, int),
    )
    sim_keys = ["dt_integ", "sample_interval", "t_end", "t0", "meas_variance", "x0"]
    sim = r.check("simulation", sim_keys, lambda: SimConfig(**sim_kwargs))
    if any(v < 0 for v in sim.x0):
        r.fail("simulation", "x0", "concentrations must be nonnegative")

    filters = r.words("filters", "names", base.filters)
    bad = [f for f in filters if f not in FILTERS]
    if bad or not filters:
        r.fail("filters", "names", f"unknown filter(s) {bad}; choose from {', '.join(FILTERS)}")

    settings = FilterSettings(
        x0_guess=r.vector("filters", "x0_guess", st0.x0_guess, size=3),
        sigma1_0=r.number("ckf", "sigma1_0", st0.sigma1_0),
        beta=r.number("ckf", "beta", st0.beta),
        q_fallback=r.number("ckf", "q_fallback", st0.q_fallback),
        theta=r.number("bkf", "theta", st0.theta),
        kappa=r.number("bkf", "kappa", st0.kappa),
        ekf_q=r.vector("ekf", "q_diag", st0.ekf_q, size=3),
        dt=r.number("filters", "dt", st0.dt),
        initial_var=(r.number("filters", "initial_var_s", st0.initial_var[0]),
                     r.number("filters", "initial_var_e", st0.initial_var[1])),
    )
    positive = [("ckf", "beta", settings.beta), ("bkf", "theta", settings.theta),
                ("bkf", "kappa", settings.kappa), ("filters", "dt", settings.dt)]
    for section, key, value in positive:
        if not value > 0:
            r.fail(section, key, "must be positive")
    if settings.sigma1_0 < 0:
        r.fail("ckf", "sigma1_0", "must be nonnegative")
    if settings.q_fallback < 0:
        r.fail("ckf", "q_fallback", "must be nonnegative")
    if any(q < 0 for q in settings.ekf_q):
        r.fail("ekf", "q_diag", "intensities must be nonnegative")
    for key, value in zip(("initial_var_s", "initial_var_e"), settings.initial_var):
        if not value > 0:
            r.fail("filters", key, "must be positive")

    cfg = RunConfig(
        params=params, sim=sim, settings=settings, filters=filters,
        prelim_seed=r.number("simulation", "prelim_seed", base.prelim_seed, int),
        replicates=r.number("montecarlo", "replicates", base.replicates, int),
        base_seed=r.number("montecarlo", "base_seed", base.base_seed, int),
        eps=r.number("montecarlo", "eps", base.eps),
        workers=r.number("montecarlo", "workers", base.workers, int),
        out_dir=r.raw("output", "dir") or base.out_dir,
        tuning=dict(r.parser.items("tuning")) if r.parser.has_section("tuning") else {},
    )
    if cfg.replicates < 2:
        r.fail("montecarlo", "replicates", "need at least 2 replicates")
    if not cfg.eps > 0:
        r.fail("montecarlo", "eps", "must be positive")
    if cfg.workers < 1:
        r.fail("montecarlo", "workers", "must be at least 1")
    return cfg


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from exc
    return parse(text, path)
