"""Run configuration: a flat TOML file, defaults, and CLI overrides.

Every key has a default (the published hyperparameters); the file overrides
defaults and command-line flags override the file. Relative paths in the
file are resolved against the file's own directory so a committed config can
travel with its data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib

    TOMLDecodeError = tomllib.TOMLDecodeError
except ImportError:  # Python < 3.11
    import toml as tomllib

    TOMLDecodeError = tomllib.TomlDecodeError

from .errors import InputError
from .objective import PENALTY_MODES, Hyperparameters
from .optimizer import OptimizerConfig
from .pipeline import PRIOR_MODES

_log = logging.getLogger(__name__)

PATH_KEYS = ("data", "cardinalities", "pag", "prior", "truth", "output_dir")

DEFAULTS = {
    "data": None,
    "cardinalities": None,
    "pag": None,
    "pag_from_truth": False,
    "prior": None,
    "prior_mode": "random",
    "prior_probability": 0.9,
    "truth": None,
    "output_dir": "refine-out",
    "max_rows": None,
    "lambda1": 0.01,
    "lambda2": 5.0,
    "lambda3": 0.1,
    "tau": 0.1,
    "epsilon_norm": 1e-8,
    "recon_scope": "all",
    "penalty_weights": "frequency",
    "eta": 0.01,
    "steps": 140,
    "batch_size": "auto",
    "seed": 0,
    "beta1": 0.9,
    "beta2": 0.999,
    "adam_epsilon": 1e-8,
    "cycle_projection": True,
    "log_level": "INFO",
}


class ConfigError(InputError):
    pass


@dataclass(frozen=True)
class RunConfig:
    data: Path | None
    pag: Path | None
    truth: Path | None
    prior: Path | None
    cardinalities: Path | None
    output_dir: Path
    max_rows: int | None = None  # use only the first rows of the data file
    pag_from_truth: bool = False
    prior_mode: str = "random"
    prior_probability: float = 0.9
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    cycle_projection: bool = True
    penalty_weights: str = "frequency"
    log_level: str = "INFO"

    def check_paths(self) -> None:
        """Every referenced input must exist at run time."""
        required = [("data", self.data)]
        if self.pag_from_truth:
            required.append(("truth", self.truth))
        else:
            required.append(("pag", self.pag))
        if self.prior_mode == "file":
            required.append(("prior", self.prior))
        for key in ("truth", "cardinalities"):
            value = getattr(self, key)
            if value is not None and (key, value) not in required:
                required.append((key, value))
        for key, value in required:
            if value is None:
                raise ConfigError(f"{key} is required")
            if not Path(value).exists():
                raise ConfigError(f"{key} file not found: {value}")

    def to_dict(self) -> dict:
        out = {
            "data": self.data,
            "cardinalities": self.cardinalities,
            "pag": self.pag,
            "pag_from_truth": self.pag_from_truth,
            "prior": self.prior,
            "prior_mode": self.prior_mode,
            "prior_probability": self.prior_probability,
            "truth": self.truth,
            "output_dir": self.output_dir,
            "max_rows": self.max_rows,
            "lambda1": self.hp.lambda1,
            "lambda2": self.hp.lambda2,
            "lambda3": self.hp.lambda3,
            "tau": self.hp.tau,
            "epsilon_norm": self.hp.epsilon_norm,
            "recon_scope": self.hp.recon_scope,
            "penalty_weights": self.penalty_weights,
            "eta": self.optimizer.eta,
            "steps": self.optimizer.steps,
            "batch_size": self.optimizer.batch_size,
            "seed": self.optimizer.seed,
            "beta1": self.optimizer.beta1,
            "beta2": self.optimizer.beta2,
            "adam_epsilon": self.optimizer.adam_epsilon,
            "cycle_projection": self.cycle_projection,
            "log_level": self.log_level,
        }
        return {k: str(v) if isinstance(v, Path) else v for k, v in out.items()}


def read_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from exc
    nested = sorted(k for k, v in raw.items() if isinstance(v, dict))
    if nested:
        raise ConfigError(f"{path}: config must be flat key = value pairs, found tables {nested}")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    base = path.resolve().parent
    for key in PATH_KEYS:
        if raw.get(key) is not None:
            p = Path(raw[key])
            raw[key] = p if p.is_absolute() else base / p
    return raw


def _number(values: dict, key: str, kind=float):
    value = values[key]
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a number, got {value!r}") from exc


def _flag(values: dict, key: str) -> bool:
    value = values[key]
    if isinstance(value, bool):
        return value
    if str(value).lower() in ("1", "true", "yes", "on"):
        return True
    if str(value).lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key} must be true or false, got {value!r}")


def _batch_size(value) -> int | str:
    if isinstance(value, str) and value in ("auto", "full"):
        return value
    try:
        return int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"batch_size must be auto, full or an integer, got {value!r}") from exc


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the TOML file, then non-``None`` ``overrides``."""
    values = dict(DEFAULTS)
    if path is not None:
        values.update(read_file(path))
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown override {key!r}")
        if value is not None:
            values[key] = value

    if values["prior_mode"] not in PRIOR_MODES:
        raise ConfigError(f"prior_mode must be one of {PRIOR_MODES}")
    if values["penalty_weights"] not in PENALTY_MODES:
        raise ConfigError(f"penalty_weights must be one of {PENALTY_MODES}")

    try:
        hp = Hyperparameters(
            lambda1=_number(values, "lambda1"),
            lambda2=_number(values, "lambda2"),
            lambda3=_number(values, "lambda3"),
            tau=_number(values, "tau"),
            epsilon_norm=_number(values, "epsilon_norm"),
            recon_scope=str(values["recon_scope"]),
        )
        optimizer = OptimizerConfig(
            eta=_number(values, "eta"),
            steps=_number(values, "steps", int),
            batch_size=_batch_size(values["batch_size"]),
            seed=_number(values, "seed", int),
            beta1=_number(values, "beta1"),
            beta2=_number(values, "beta2"),
            adam_epsilon=_number(values, "adam_epsilon"),
        )
    except ConfigError:
        raise
    except InputError as exc:
        raise ConfigError(str(exc)) from exc

    probability = _number(values, "prior_probability")
    if not 0.5 < probability < 1.0:
        raise ConfigError(f"prior_probability must lie in (0.5, 1), got {probability}")

    max_rows = None
    if values["max_rows"] is not None:
        max_rows = _number(values, "max_rows", int)
        if max_rows < 1:
            raise ConfigError(f"max_rows must be a positive integer, got {max_rows}")

    _log.debug("Resolved configuration: %s", values)

    def as_path(key):
        return None if values[key] is None else Path(values[key])

    return RunConfig(
        data=as_path("data"),
        pag=as_path("pag"),
        truth=as_path("truth"),
        prior=as_path("prior"),
        cardinalities=as_path("cardinalities"),
        output_dir=Path(values["output_dir"]),
        max_rows=max_rows,
        pag_from_truth=_flag(values, "pag_from_truth"),
        prior_mode=values["prior_mode"],
        prior_probability=probability,
        hp=hp,
        optimizer=optimizer,
        cycle_projection=_flag(values, "cycle_projection"),
        penalty_weights=values["penalty_weights"],
        log_level=str(values["log_level"]).upper(),
    )
