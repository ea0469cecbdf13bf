"""Experiment configuration: TOML tables with full defaults.

Every key has a default; unknown tables or keys are hard errors so a typo
cannot silently fall back.  The parsed config is echoed verbatim into
every output artifact.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

__all__ = [
    "DataSettings",
    "TrainSettings",
    "SmoothingSettings",
    "AttackSettings",
    "CertifySettings",
    "ReportSettings",
    "ExperimentConfig",
    "load_config",
]


@dataclass(frozen=True)
class DataSettings:
    d_input: int = 16
    d0: int = 16
    m_true: int = 32
    d_z: int = 4
    n_train: int = 512
    n_test: int = 128
    tau: float = 0.06
    concept_rank: int = 5
    activation_noise: float = 0.02
    hidden: int = 32
    backbone_scale: float = 16.0


@dataclass(frozen=True)
class TrainSettings:
    proj_steps: int = 1000
    proj_lr: float = 0.15
    interpretability_cutoff: float = 0.45
    lam: float = 0.0007
    n_iters: int = 1000
    fusion: bool = True


@dataclass(frozen=True)
class SmoothingSettings:
    sigma: float = 8.0 / 255.0
    m: int = 64
    t_max: int = 1000
    beta_start: float = 0.9999
    beta_end: float = 0.02
    denoiser: str = "gmm_posterior_mean"


@dataclass(frozen=True)
class AttackSettings:
    radii: tuple = (6.0 / 255.0, 8.0 / 255.0, 10.0 / 255.0)
    step: float = 2.0 / 255.0
    iters: int = 10
    norm: str = "linf"


@dataclass(frozen=True)
class CertifySettings:
    k: int = 5
    beta: float = 0.8
    delta: float = 0.001
    alpha_grid: tuple = (1.5, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    samples: int = 256


@dataclass(frozen=True)
class ReportSettings:
    repetitions: int = 10
    max_inputs: int = 64


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    data: DataSettings = field(default_factory=DataSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    smoothing: SmoothingSettings = field(default_factory=SmoothingSettings)
    attack: AttackSettings = field(default_factory=AttackSettings)
    certify: CertifySettings = field(default_factory=CertifySettings)
    report: ReportSettings = field(default_factory=ReportSettings)

    def echo(self) -> dict:
        d = asdict(self)
        d["attack"]["radii"] = list(d["attack"]["radii"])
        d["certify"]["alpha_grid"] = list(d["certify"]["alpha_grid"])
        return d


_TABLES = {
    "data": DataSettings,
    "train": TrainSettings,
    "smoothing": SmoothingSettings,
    "attack": AttackSettings,
    "certify": CertifySettings,
    "report": ReportSettings,
}


def _build(cls, table: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    kwargs = {}
    for name, value in table.items():
        if known[name].type == "tuple" or isinstance(getattr(cls(), name), tuple):
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(raw: dict) -> ExperimentConfig:
    unknown = sorted(set(raw) - set(_TABLES) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    parts = {}
    for name, cls in _TABLES.items():
        table = raw.get(name, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
        parts[name] = _build(cls, table, name)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return ExperimentConfig(seed=seed, **parts)


def load_config(path=None) -> ExperimentConfig:
    """Parse a TOML config file; no path gives the all-defaults config."""
    if path is None:
        return ExperimentConfig()
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)
