"""Run configuration: one YAML file drives every command.

The file mirrors the sections below; omitted keys fall back to the
defaults baked into the dataclasses, and unknown keys are rejected so a
typo cannot silently revert a parameter to its default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .ingest import IngestConfig


class ConfigError(Exception):
    """Configuration file is missing, malformed, or inconsistent."""


@dataclass
class PathsConfig:
    claims: str = ""
    policies: str = ""
    external_forecasts: str = ""
    out_dir: str = "out"


@dataclass
class WindowsConfig:
    train: tuple[int, int] = (1975, 2012)
    test: tuple[int, int] = (2013, 2022)
    ml_split_year: int = 2011


@dataclass
class ParamsConfig:
    gamma1: float = 50000.0
    gamma2: float = 0.8
    gamma2_grid: list[float] = field(
        default_factory=lambda: [round(0.2 * i, 1) for i in range(11)])
    gamma3: float = 50000.0
    gamma4: float = 1.0
    delta: float = 10000.0
    eps: float = 0.1
    thetas: list[float] = field(default_factory=list)
    percentile_levels: list[float] = field(
        default_factory=lambda: [90.0, 95.0, 99.0])
    horizons: list[int] = field(default_factory=lambda: [3, 5, 10])
    premium_cap_mult: float | None = None


@dataclass
class DampingConfig:
    enabled: bool = True
    p0_frac: float = 0.1
    # "inverse_max" derives the decline rate from the anchor premium;
    # a number is taken as the rate itself (per dollar of premium).
    m_mode: str | float = "inverse_max"
    c_min: float = 0.2
    p_hist_max: float | None = None


@dataclass
class RiskConfig:
    c_grid: list[float] = field(
        default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    cv_folds: int = 3
    max_iter: int = 500
    tol: float = 1e-8
    forecast_base_year: int | None = None


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    windows: WindowsConfig = field(default_factory=WindowsConfig)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    damping: DampingConfig = field(default_factory=DampingConfig)
    risk: RiskConfig = field(default_factory=RiskConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    seed: int = 0
    workers: int = 4

    def validate(self) -> None:
        w = self.windows
        for name, span in (("windows.train", w.train), ("windows.test",
                                                        w.test)):
            if len(span) != 2 or span[0] > span[1]:
                raise ConfigError(f"{name} must be [start, end] with"
                                  f" start <= end, got {list(span)}")
        if w.train[1] >= w.test[0]:
            raise ConfigError("windows.train must end before windows.test"
                              f" begins, got {list(w.train)} and"
                              f" {list(w.test)}")
        if not w.train[0] <= w.ml_split_year <= w.train[1]:
            raise ConfigError("windows.ml_split_year must lie inside"
                              " windows.train")
        p = self.params
        for key in ("gamma1", "gamma2", "gamma3", "gamma4", "delta", "eps"):
            if getattr(p, key) < 0:
                raise ConfigError(f"params.{key} must be nonnegative")
        if not p.gamma2_grid:
            raise ConfigError("params.gamma2_grid must not be empty")
        if sorted(p.gamma2_grid) != list(p.gamma2_grid):
            raise ConfigError("params.gamma2_grid must be sorted ascending")
        if any(g < 0 for g in p.gamma2_grid):
            raise ConfigError("params.gamma2_grid entries must be"
                              " nonnegative")
        if any(not 0 < lvl < 100 for lvl in p.percentile_levels):
            raise ConfigError("params.percentile_levels must lie in"
                              " (0, 100)")
        if any(t <= 0 for t in p.thetas):
            raise ConfigError("params.thetas must be positive")
        if any(k < 1 for k in p.horizons) or not p.horizons:
            raise ConfigError("params.horizons must be positive integers")
        if p.premium_cap_mult is not None and p.premium_cap_mult <= 0:
            raise ConfigError("params.premium_cap_mult must be positive"
                              " when set")
        d = self.damping
        if not 0 < d.c_min <= 1:
            raise ConfigError("damping.c_min must lie in (0, 1]")
        if d.p0_frac < 0:
            raise ConfigError("damping.p0_frac must be nonnegative")
        if isinstance(d.m_mode, str):
            if d.m_mode != "inverse_max":
                raise ConfigError("damping.m_mode must be 'inverse_max' or"
                                  f" a positive rate, got {d.m_mode!r}")
        elif d.m_mode <= 0:
            raise ConfigError("damping.m_mode rate must be positive")
        if d.p_hist_max is not None and d.p_hist_max <= 0:
            raise ConfigError("damping.p_hist_max must be positive when set")
        r = self.risk
        if not r.c_grid:
            raise ConfigError("risk.c_grid must not be empty")
        if any(c < 0 for c in r.c_grid):
            raise ConfigError("risk.c_grid entries must be nonnegative")
        if r.cv_folds < 2:
            raise ConfigError("risk.cv_folds must be at least 2")
        if r.max_iter < 1 or r.tol <= 0:
            raise ConfigError("risk.max_iter and risk.tol must be positive")
        if not 0 <= self.ingest.max_error_rate <= 1:
            raise ConfigError("ingest.max_error_rate must lie in [0, 1]")
        if not self.ingest.jurisdictions:
            raise ConfigError("ingest.jurisdictions must not be empty")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.workers < 0:
            raise ConfigError("workers must be nonnegative")

    @property
    def test_years(self) -> list[int]:
        return list(range(self.windows.test[0], self.windows.test[1] + 1))

    @property
    def forecast_base_year(self) -> int:
        if self.risk.forecast_base_year is not None:
            return self.risk.forecast_base_year
        return self.windows.test[0] - 1


_SECTIONS = {
    "paths": PathsConfig,
    "windows": WindowsConfig,
    "params": ParamsConfig,
    "damping": DampingConfig,
    "risk": RiskConfig,
    "ingest": IngestConfig,
}


def _coerce(value, type_str, key):
    """Cast a parsed YAML scalar to the field's declared type.

    YAML 1.1 reads unsigned exponents like 1.0e9 as strings, so numeric
    fields are converted explicitly instead of trusting the parser.
    """
    if value is None:
        return None
    try:
        if type_str in ("float", "float | None"):
            return float(value)
        if type_str in ("int", "int | None"):
            return int(value)
        if type_str.startswith("list[float]"):
            return [float(v) for v in value]
        if type_str.startswith("list[int]"):
            return [int(v) for v in value]
        if type_str == "str | float" and not isinstance(value, str):
            return float(value)
        if type_str == "str | float":
            try:
                return float(value)
            except ValueError:
                return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


def _build_section(cls, data, section):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    unknown = set(data) - set(types)
    if unknown:
        raise ConfigError(f"unknown key '{section}.{sorted(unknown)[0]}'")
    kwargs = {key: _coerce(value, types[key], f"{section}.{key}")
              for key, value in data.items()}
    if cls is WindowsConfig:
        for key in ("train", "test"):
            if key in kwargs:
                kwargs[key] = tuple(int(y) for y in kwargs[key])
    return cls(**kwargs)


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - set(_SECTIONS) - {"seed", "workers"}
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}'")
    kwargs = {name: _build_section(cls, raw.get(name), name)
              for name, cls in _SECTIONS.items()}
    cfg = RunConfig(seed=int(raw.get("seed", 0)),
                    workers=int(raw.get("workers", 4)),
                    **kwargs)
    cfg.validate()
    return cfg


def config_hash(config: RunConfig) -> str:
    """Stable digest of the fully resolved configuration."""
    payload = json.dumps(dataclasses.asdict(config), sort_keys=True,
                         default=list)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
