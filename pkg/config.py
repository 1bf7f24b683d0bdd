"""
Run configuration: defaults, JSON config files, and validation

Precedence is command-line flags > config file > defaults.
"""

import json
import logging
import math
from dataclasses import dataclass, field, fields, asdict
from typing import Dict, Any, List, Optional, Union

import numpy as np

from artifacts import read_json
from witness import DEFAULT_VERDICT_SIGMAS

logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR = "results"
DEFAULT_SEED = 20240601
DEFAULT_TRIALS = 100000
DEFAULT_KAPPA_GRID = [1.0]
DEFAULT_SIGMA_LIST = [1.0, 2.0, 3.0, 5.0, 10.0]
DEFAULT_R_GRID = {"start": 0.0, "stop": 2.5, "num": 51}
DEFAULT_ETA_GRID = {"start": 0.0, "stop": 1.0, "num": 51}
MAX_CUTOFF = 14

COMMANDS = ("witness-eval", "mdi-simulate", "contour", "fock-verify", "prior-fim")
FORMATS = ("csv", "json")
PRIORS = ("gaussian", "smooth-box")
SCHEMES = ("paper-optimal", "separable-heterodyne")


class ConfigError(ValueError):
    """Raised when a configuration value violates a precondition"""


@dataclass
class RunConfig:
    command: str = "witness-eval"
    r: float = 0.5
    eta_a: float = 0.0
    eta_b: float = 0.0
    kappa: Union[float, str] = 1.0
    sigma: Optional[float] = None
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    cutoff: int = 8
    out: str = DEFAULT_OUT_DIR
    format: str = "json"
    n_jobs: int = 1
    scheme: str = "paper-optimal"
    state_file: Optional[str] = None
    kappa_grid: List[float] = field(default_factory=lambda: list(DEFAULT_KAPPA_GRID))
    sigma_list: List[float] = field(default_factory=lambda: list(DEFAULT_SIGMA_LIST))
    r_grid: List[float] = field(default_factory=list)
    eta_grid: List[float] = field(default_factory=list)
    instances: int = 20
    lam: float = 0.5
    energy_scale: Optional[float] = None
    tomography: bool = False
    prior: str = "gaussian"
    l: Optional[float] = None
    delta: Optional[float] = None
    dump_samples: bool = True
    n_sigma: float = DEFAULT_VERDICT_SIGMAS

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_sources(cls, command: str, flags: Dict[str, Any], config_path: Optional[str] = None) -> "RunConfig":
        """Merge defaults, the JSON file at config_path, and explicitly given flags"""
        values: Dict[str, Any] = {}
        if config_path:
            values.update(load_config_file(config_path))
        values.update({k: v for k, v in flags.items() if v is not None})
        values["command"] = command

        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {unknown}")
        config = cls(**values)
        config.normalize()
        return config

    def normalize(self):
        if isinstance(self.kappa, str) and self.kappa != "auto":
            try:
                self.kappa = float(self.kappa)
            except ValueError:
                raise ConfigError(f"kappa must be a number or 'auto', got '{self.kappa}'")
        if self.sigma is not None and math.isinf(float(self.sigma)):
            self.sigma = None
        if not self.r_grid:
            self.r_grid = _linspace(DEFAULT_R_GRID)
        if not self.eta_grid:
            self.eta_grid = _linspace(DEFAULT_ETA_GRID)

    def validate(self, command: Optional[str] = None):
        """Check every precondition of `command` before any computation"""
        command = command or self.command
        if command not in COMMANDS:
            raise ConfigError(f"Unknown command '{command}', expected one of {COMMANDS}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got '{self.format}'")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must be non-zero")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

        if command in ("witness-eval", "mdi-simulate"):
            if self.r < 0:
                raise ConfigError(f"r must be >= 0, got {self.r}")
            for name in ("eta_a", "eta_b"):
                value = getattr(self, name)
                if not 0 <= value <= 1:
                    raise ConfigError(f"{name} must lie in [0, 1], got {value}")
            if self.kappa != "auto" and not self.kappa > 0:
                raise ConfigError(f"kappa must be positive or 'auto', got {self.kappa}")
            if self.kappa == "auto" and max(self.eta_a, self.eta_b) >= 1:
                raise ConfigError("kappa 'auto' needs eta_a < 1 and eta_b < 1")
            if self.sigma is not None and not self.sigma > 0:
                raise ConfigError(f"sigma must be positive, got {self.sigma}")
            if not self.n_sigma > 0:
                raise ConfigError(f"n_sigma must be positive, got {self.n_sigma}")

        if command == "mdi-simulate":
            if self.trials < 1:
                raise ConfigError(f"trials must be >= 1, got {self.trials}")
            if self.scheme not in SCHEMES:
                raise ConfigError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'")
            self._validate_prior()
            if any(k <= 0 for k in self.kappa_grid):
                raise ConfigError(f"kappa grid must be positive, got {self.kappa_grid}")

        if command == "contour":
            if any(s <= 0 for s in self.sigma_list):
                raise ConfigError(f"sigma list must be positive, got {self.sigma_list}")
            if any(r < 0 for r in self.r_grid):
                raise ConfigError("r grid must be non-negative")
            if any(not 0 <= e <= 1 for e in self.eta_grid):
                raise ConfigError("eta grid must lie in [0, 1]")

        if command == "fock-verify":
            if not 2 <= self.cutoff <= MAX_CUTOFF:
                raise ConfigError(f"cutoff must lie in [2, {MAX_CUTOFF}], got {self.cutoff}")
            if self.instances < 1:
                raise ConfigError(f"instances must be >= 1, got {self.instances}")
            if not 0 < self.lam < 1:
                raise ConfigError(f"lambda must lie in (0, 1), got {self.lam}")
            if self.energy_scale is not None and not self.energy_scale > 0:
                raise ConfigError(f"energy scale must be positive, got {self.energy_scale}")

        if command == "prior-fim":
            self._validate_prior()
            if self.kappa == "auto" or not self.kappa > 0:
                raise ConfigError(f"prior-fim needs a positive numeric kappa, got {self.kappa}")
        return self

    def _validate_prior(self):
        if self.prior not in PRIORS:
            raise ConfigError(f"prior must be one of {PRIORS}, got '{self.prior}'")
        if self.prior == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ConfigError(f"gaussian prior needs a finite positive sigma, got {self.sigma}")
        else:
            if self.l is None or self.delta is None:
                raise ConfigError("smooth-box prior needs both l and delta")
            if not 0 < self.delta <= self.l:
                raise ConfigError(f"smooth-box prior needs 0 < delta <= l, got l={self.l}, delta={self.delta}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _linspace(spec: Dict[str, Any]) -> List[float]:
    return np.linspace(spec["start"], spec["stop"], spec["num"]).tolist()


def load_config_file(path: str) -> Dict[str, Any]:
    try:
        data = read_json(path)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a single JSON object")
    logger.debug(f"Loaded {len(data)} settings from {path}")
    values = {k.replace("-", "_"): v for k, v in data.items()}
    if "lambda" in values:
        values["lam"] = values.pop("lambda")
    return values
