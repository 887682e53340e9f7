"""JSON run configuration in annualized units.

Document layout (every key optional)::

    {
      "model":      {"discount_rate": 0.07, "normal_rate": 0.07, "volatility": 0.17,
                     "jump_probability": 0.01, "mean_jump_size": 0.3,
                     "jump_size_std": 0.2, "risk_free_rate": 0.0, "p0": 1.0},
      "experiment": {"grid": null, "sweep_param": "sigma", "error_param": "r_D",
                     "strategies": null, "horizon": 1250, "scan_horizon": 2500,
                     "m": 10000, "master_seed": 0, "chunk_size": 250, "bins": 50,
                     "mu_mode": "log", "solver_mode": "numeric",
                     "sign_annual_range": [-0.1, 0.1]},
      "run":        {"workers": null, "output_dir": "results", "formats": ["csv", "json"]}
    }

Rates are annual growth rates (``0.07`` is 7% per year) and volatility is
annualized; both are converted to per-step values with a 252-day year.
Sensitivity grids given in the config use the same units as the model block:
annual rates for ``r_D``, annual volatility for ``sigma``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

from .harness import ALL_LABELS, ERROR_TARGETS, SENSITIVITY_PARAMS
from .model import TRADING_DAYS, ModelParams


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    discount_rate: float = 0.07
    normal_rate: float = 0.07
    volatility: float = 0.17
    jump_probability: float = 0.01
    mean_jump_size: float = 0.3
    jump_size_std: float = 0.2
    risk_free_rate: float = 0.0
    p0: float = 1.0

    def params(self) -> ModelParams:
        return ModelParams.from_annual(**asdict(self))


@dataclass
class ExperimentSection:
    grid: list | None = None
    sweep_param: str = "sigma"
    error_param: str = "r_D"
    strategies: list | None = None
    horizon: int = 1250
    scan_horizon: int = 2500
    m: int = 10_000
    master_seed: int = 0
    chunk_size: int = 250
    bins: int = 50
    mu_mode: str = "log"
    solver_mode: str = "numeric"
    sign_annual_range: list = field(default_factory=lambda: [-0.1, 0.1])


@dataclass
class RunSection:
    workers: int | None = None
    output_dir: str = "results"
    formats: list = field(default_factory=lambda: ["csv", "json"])


FORMATS = ("csv", "json")


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    run: RunSection = field(default_factory=RunSection)

    @property
    def params(self) -> ModelParams:
        return self.model.params()

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def sensitivity_grid(self) -> tuple | None:
        """Configured sensitivity grid in per-step units."""
        grid = self.experiment.grid
        if grid is None:
            return None
        name = self.experiment.sweep_param
        if name == "r_D":
            return tuple(math.log(1.0 + g) / TRADING_DAYS for g in grid)
        if name == "sigma":
            return tuple(v / math.sqrt(TRADING_DAYS) for v in grid)
        return tuple(float(g) for g in grid)


_SECTIONS = {"model": ModelSection, "experiment": ExperimentSection, "run": RunSection}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_type(path: str, value, default, name: str, section):
    if value is None:
        if default is None:
            return
        raise ConfigError(f"{path}: null is not allowed")
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = _is_number(value)
    elif isinstance(default, int) or name == "workers":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    else:
        ok = isinstance(value, list)
    if not ok:
        raise ConfigError(f"{path}: unexpected type {type(value).__name__}")


def _build_section(name: str, data) -> object:
    cls = _SECTIONS[name]
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key{'s' if len(unknown) > 1 else ''}: " + ", ".join(f"{name}.{k}" for k in unknown))
    defaults = cls()
    values = {}
    for key, value in data.items():
        _check_type(f"{name}.{key}", value, getattr(defaults, key), key, cls)
        values[key] = float(value) if isinstance(getattr(defaults, key), float) else value
    return cls(**values)


def _validate(cfg: RunConfig) -> None:
    try:
        params = cfg.params
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None
    if params.rho >= 1:
        raise ConfigError(f"model.jump_probability: rho={params.rho} outside the admissible range [0, 1)")
    ex = cfg.experiment
    for key in ("horizon", "scan_horizon", "m", "chunk_size", "bins"):
        if getattr(ex, key) < 1:
            raise ConfigError(f"experiment.{key}: must be >= 1")
    if ex.master_seed < 0:
        raise ConfigError("experiment.master_seed: must be >= 0")
    if ex.sweep_param not in SENSITIVITY_PARAMS:
        raise ConfigError(f"experiment.sweep_param: must be one of {list(SENSITIVITY_PARAMS)}")
    if ex.error_param not in ERROR_TARGETS:
        raise ConfigError(f"experiment.error_param: must be one of {list(ERROR_TARGETS)}")
    if ex.mu_mode not in ("log", "arithmetic"):
        raise ConfigError("experiment.mu_mode: must be 'log' or 'arithmetic'")
    if ex.solver_mode not in ("numeric", "exact", "approx"):
        raise ConfigError("experiment.solver_mode: must be 'numeric', 'exact' or 'approx'")
    if ex.grid is not None and (not ex.grid or not all(_is_number(g) for g in ex.grid)):
        raise ConfigError("experiment.grid: must be a nonempty list of numbers")
    lo_hi = ex.sign_annual_range
    if len(lo_hi) != 2 or not all(_is_number(v) for v in lo_hi) or not -1 < lo_hi[0] <= lo_hi[1]:
        raise ConfigError("experiment.sign_annual_range: need [lo, hi] with -1 < lo <= hi")
    if ex.strategies is not None and not all(isinstance(s, str) for s in ex.strategies):
        raise ConfigError("experiment.strategies: must be a list of labels")
    if ex.strategies is not None:
        unknown = [s for s in ex.strategies if s not in ALL_LABELS]
        if unknown or not ex.strategies:
            raise ConfigError(f"experiment.strategies: unknown labels {unknown}; choose from {list(ALL_LABELS)}")
    run = cfg.run
    if run.workers is not None and run.workers < 1:
        raise ConfigError("run.workers: must be >= 1")
    bad = [f for f in run.formats if f not in FORMATS]
    if bad:
        raise ConfigError(f"run.formats: unknown format(s) {bad}")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError("unknown key(s): " + ", ".join(unknown))
    cfg = RunConfig(**{name: _build_section(name, data.get(name, {})) for name in _SECTIONS})
    _validate(cfg)
    return cfg


def parse_config(source=None) -> RunConfig:
    """Parse a JSON document given as a path, a JSON string, a dict, or ``None`` for defaults."""
    if source is None:
        return config_from_dict({})
    if isinstance(source, dict):
        return config_from_dict(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        try:
            with open(text) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return config_from_dict(data)
