"""Pipeline configuration and its TOML file format.

A config file has optional top-level keys ``method``, ``seed`` and
``standardize_features`` plus these tables, every key optional::

    [encoder]    latent_dim, learning_rate, momentum_start, momentum_final,
                 momentum_switch, max_iters, min_iters, tol, init_scale,
                 max_halvings, rise_tol
    [regressor]  lam, basis_size, mode, kernel, rbf_gamma, opt_tol,
                 max_opt_iters
    [mlknn]      k, smoothing
    [metrics]    top_r
    [split]      train_fraction, repeats
    [paths]      arff, labels_xml, features, labels, out

Unknown tables or keys raise :class:`ConfigError`. Stage seeds are not
configured separately; every stage uses the pipeline ``seed``.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from .encoder import EncoderConfig
from .metrics import MetricConfig
from .regressor import KernelSpec, RegressorConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

METHODS = ("dlst", "dlst1", "dlst2")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MlknnConfig:
    k: int = 10
    smoothing: float = 1.0


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.1
    repeats: int = 10


@dataclass(frozen=True)
class Paths:
    arff: Optional[str] = None
    labels_xml: Optional[str] = None
    features: Optional[str] = None
    labels: Optional[str] = None
    out: str = "out"


@dataclass(frozen=True)
class PipelineConfig:
    method: str = "dlst"
    seed: int = 0
    standardize_features: bool = False  # z-score features with training statistics
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    mlknn: MlknnConfig = field(default_factory=MlknnConfig)
    metrics: Optional[MetricConfig] = None  # None: top_r from label cardinality
    split: SplitConfig = field(default_factory=SplitConfig)
    paths: Paths = field(default_factory=Paths)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Copy with ``seed`` pushed into every seeded stage."""
        return replace(
            self,
            seed=seed,
            encoder=replace(self.encoder, seed=seed),
            regressor=replace(self.regressor, seed=seed),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        reg = d["regressor"]
        kernel = reg.pop("kernel")
        reg["kernel"] = kernel["kind"]
        reg["rbf_gamma"] = kernel["rbf_gamma"]
        for sub in ("encoder", "regressor"):
            d[sub].pop("seed")
        return d


_ENCODER_KEYS = {f.name for f in fields(EncoderConfig)} - {"seed"}
_REGRESSOR_KEYS = ({f.name for f in fields(RegressorConfig)} - {"seed", "kernel"}) | {"kernel", "rbf_gamma"}
_TABLES = {
    "encoder": _ENCODER_KEYS,
    "regressor": _REGRESSOR_KEYS,
    "mlknn": {f.name for f in fields(MlknnConfig)},
    "metrics": {"top_r"},
    "split": {f.name for f in fields(SplitConfig)},
    "paths": {f.name for f in fields(Paths)},
}
_TOP = {"method", "seed", "standardize_features"}


def config_from_dict(data: dict) -> PipelineConfig:
    """Build a config from a parsed mapping, rejecting unknown keys."""
    data = dict(data)
    for key in data:
        if key not in _TOP and key not in _TABLES:
            raise ConfigError(f"unknown config key {key!r}")
    for table, allowed in _TABLES.items():
        section = data.get(table) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"[{table}] must be a table")
        unknown = set(section) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s) in [{table}]: {sorted(unknown)}")

    try:
        reg = dict(data.get("regressor") or {})
        kernel = KernelSpec(reg.pop("kernel", "rbf"), reg.pop("rbf_gamma", None))
        metrics = data.get("metrics")
        cfg = PipelineConfig(
            method=data.get("method", "dlst"),
            seed=int(data.get("seed", 0)),
            standardize_features=bool(data.get("standardize_features", False)),
            encoder=EncoderConfig(**(data.get("encoder") or {})),
            regressor=RegressorConfig(kernel=kernel, **reg),
            mlknn=MlknnConfig(**(data.get("mlknn") or {})),
            metrics=MetricConfig(**metrics) if metrics and metrics.get("top_r") is not None else None,
            split=SplitConfig(**(data.get("split") or {})),
            paths=Paths(**(data.get("paths") or {})),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.with_seed(cfg.seed)


def load_config(path) -> PipelineConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)
