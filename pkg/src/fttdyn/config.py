"""Run configuration: flat ``key=value`` files plus command-line overrides."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import FttError
from .grid import GridSet, fourier_grid


class ConfigError(FttError):
    pass


@dataclass(frozen=True)
class RunConfig:
    n: int = 21
    d: int = 4
    a: float = 0.0
    b: float = 2.0 * math.pi
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 1.0
    eps: float = 1e-3
    # "grid": divide eps by the grid-cell volume before truncating; "relative": use eps as is
    threshold: str = "grid"
    dt: float = 1e-3
    t_final: float = 1.0
    snapshot_times: tuple = (0.1, 0.5, 1.0)
    energy_check_every: int = 10
    residual_every: int = 100
    reorthonormalize_every: int = 1
    rcond_cap: float = 1e-12
    output_dir: str = "out"
    seed: int = 0

    def validate(self) -> "RunConfig":
        for name in ("n", "d", "eps", "dt", "rcond_cap", "energy_check_every", "reorthonormalize_every"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.t_final < 0 or self.residual_every < 0 or self.seed < 0:
            raise ConfigError("t_final, residual_every and seed must be non-negative")
        if self.d < 2 or self.n < 2:
            raise ConfigError("need d >= 2 and n >= 2")
        if not self.b > self.a:
            raise ConfigError("domain must satisfy b > a")
        if self.threshold not in ("grid", "relative"):
            raise ConfigError(f"threshold must be 'grid' or 'relative', got {self.threshold!r}")
        if self.t_final > 0 and self.dt > self.t_final:
            raise ConfigError("dt must not exceed t_final")
        if any(t < 0 or t > self.t_final for t in self.snapshot_times):
            raise ConfigError("snapshot_times must lie in [0, t_final]")
        if not all(math.isfinite(float(getattr(self, f.name))) for f in fields(self)
                   if f.type in ("int", "float")):
            raise ConfigError("numeric fields must be finite")
        return self

    def grids(self) -> GridSet:
        g = fourier_grid(self.n, self.a, self.b)
        return GridSet(tuple(g for _ in range(self.d)))

    def effective_eps(self, grids: GridSet | None = None) -> float:
        if self.threshold == "relative":
            return self.eps
        grids = grids or self.grids()
        return self.eps / grids.cell_volume

    def effective_snapshot_times(self) -> tuple:
        """Requested snapshot times clipped to the horizon, plus 0 and ``t_final``."""
        times = {0.0, float(self.t_final)}
        times.update(t for t in self.snapshot_times if t <= self.t_final)
        return tuple(sorted(times))


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, raw):
    kind = _TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    try:
        if kind == "int":
            value = float(raw)
            if value != int(value):
                raise ValueError(raw)
            return int(value)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            return tuple(float(v) for v in raw.split(",") if v.strip()) if raw else ()
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value")
        out[key.strip()] = _coerce(key.strip(), val)
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    cfg = replace(RunConfig(), **values)
    if "snapshot_times" not in values:
        # default snapshot times follow the horizon
        cfg = replace(cfg, snapshot_times=tuple(t for t in cfg.snapshot_times if t <= cfg.t_final))
    return cfg.validate()


def _fmt(value):
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    lines = [f"{f.name}={_fmt(getattr(cfg, f.name))}" for f in fields(cfg)]
    lines.append(f"# effective_eps={cfg.effective_eps()!r}")
    return "\n".join(lines) + "\n"


def build_initial_pdf(cfg: RunConfig, grids: GridSet | None = None) -> np.ndarray:
    """``exp(cos(x_1 + ... + x_d))`` normalized to unit mass under the product quadrature."""
    grids = grids or cfg.grids()
    total = np.zeros(grids.shape)
    for k, g in enumerate(grids):
        shape = [1] * grids.d
        shape[k] = -1
        total = total + g.points.reshape(shape)
    p = np.exp(np.cos(total))
    return p / np.sum(grids.weight_tensor() * p)
