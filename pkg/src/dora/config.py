"""Run configuration shared by every CLI subcommand.

Config files are YAML mappings whose keys are flag names with dashes or
underscores (``eval-points`` and ``eval_points`` are the same key).
Precedence: explicit flags, then the config file, then ``DORA_SEED`` for the
seed, then the defaults below.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import yaml

from .metrics.edges import CANNY_HIGH, CANNY_LOW, DILATE_RADIUS
from .metrics.pointsets import DEFAULT_EVAL_POINTS
from .metrics.render import DEFAULT_RES, DEFAULT_VIEWS
from .sampling import DEFAULT_N_DESIRED, DEFAULT_N_TOTAL, DEFAULT_TAU

SEED_ENV = "DORA_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # sampling
    tau: float = DEFAULT_TAU
    n_total: int = DEFAULT_N_TOTAL
    n_desired: int = DEFAULT_N_DESIRED
    uniform: bool = False
    blue_noise: bool = False
    format: str = "ply"
    seed: int = 0
    # evaluation
    eval_points: int = DEFAULT_EVAL_POINTS
    fscore_r: tuple[float, ...] = (0.01, 0.005)
    cd_mode: str = "symmetric"
    views: int = DEFAULT_VIEWS
    res: int = DEFAULT_RES
    canny_low: float = CANNY_LOW
    canny_high: float = CANNY_HIGH
    dilate_radius: int = DILATE_RADIUS
    # training
    profile: str = "toy"
    arm: str = "full"
    epochs: int = 300
    dataset: str = "bump"
    n_shapes: int = 8
    dataset_seed: int = 0
    optimizer: str = "adam"
    kl_weight: float = 1e-3
    eval_every: int = 0
    # execution
    jobs: int = 1
    reproducible: bool = False

    def __post_init__(self):
        self.fscore_r = tuple(float(r) for r in self.fscore_r)
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.tau < 180.0:
            raise ConfigError(f"tau must lie in (0, 180), got {self.tau}")
        if self.n_total < 1 or self.n_desired < 0:
            raise ConfigError("n_total must be positive and n_desired non-negative")
        if self.n_desired > self.n_total:
            raise ConfigError(f"n_desired ({self.n_desired}) exceeds n_total ({self.n_total})")
        if self.format not in ("ply", "bin"):
            raise ConfigError(f"format must be 'ply' or 'bin', got {self.format!r}")
        if self.eval_points < 1 or self.views < 1 or self.res < 8:
            raise ConfigError("eval_points and views must be positive and res at least 8")
        if not self.fscore_r or any(r <= 0 for r in self.fscore_r):
            raise ConfigError("fscore_r needs positive radii")
        if self.cd_mode not in ("symmetric", "pred-to-gt"):
            raise ConfigError(f"unknown cd_mode {self.cd_mode!r}")
        if not 0 <= self.canny_low <= self.canny_high:
            raise ConfigError("need 0 <= canny_low <= canny_high")
        if self.dilate_radius < 0:
            raise ConfigError("dilate_radius must be non-negative")
        if self.arm not in ("full", "no-dca", "no-ses"):
            raise ConfigError(f"unknown arm {self.arm!r}")
        if self.epochs < 1 or self.n_shapes < 1 or self.jobs < 1:
            raise ConfigError("epochs, n_shapes and jobs must be positive")
        if self.kl_weight < 0:
            raise ConfigError("kl_weight must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fscore_r"] = list(self.fscore_r)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        clean = {}
        for key, value in data.items():
            k = str(key).replace("-", "_")
            if k not in names:
                raise ConfigError(f"unknown config key {key!r}")
            clean[k] = value
        try:
            return cls(**clean)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.from_dict(_parse_mapping(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _parse_mapping(text: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a key-value mapping")
    return data


def load_config_file(path) -> dict:
    """Raw key-value overrides from a config file (keys normalized to underscores)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return {str(k).replace("-", "_"): v for k, v in _parse_mapping(text).items()}


def resolve_config(flags: dict, config_path=None, env=None) -> RunConfig:
    """Merge defaults, ``DORA_SEED``, a config file and explicit flags, in that order."""
    env = os.environ if env is None else env
    merged: dict = {}
    if env.get(SEED_ENV):
        try:
            merged["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    if config_path is not None:
        merged.update(load_config_file(config_path))
    merged.update(flags)
    return RunConfig.from_dict(merged)
