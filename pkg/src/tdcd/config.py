"""Run configuration: typed sections, validation, and YAML snapshots.

A config file fully determines a run. Every seed must be given explicitly and
there are no environment-variable overrides.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .metrics import LatencyModel
from .synthetic import SyntheticSpec


@dataclass
class Seeds:
    data: int
    init: int
    batch: int


@dataclass
class ModelConfig:
    architecture: str | list[str] = "linear"
    hidden_width: int = 8
    # None means "use the loss's label arity"
    embedding_dim: int | None = None
    silo_dims: list[int] | None = None
    silo_columns: list[list[int]] | None = None


@dataclass
class LossConfig:
    kind: str = "squared_error"
    label_arity: int = 1


@dataclass
class DatasetConfig:
    source: str = "synthetic"
    # csv / binary
    path: str | None = None
    label_column: str = "label"
    test_path: str | None = None
    # synthetic
    n_samples: int | None = None
    n_features: int | None = None
    task: str = "least_squares"
    noise: float = 0.0
    margin: float = 1.0
    condition: float = 1.0
    n_test: int = 0

    def synthetic_spec(self) -> SyntheticSpec:
        if self.n_samples is None or self.n_features is None:
            raise ConfigError("dataset.n_samples and dataset.n_features are required for synthetic data")
        return SyntheticSpec(
            n_samples=self.n_samples,
            n_features=self.n_features,
            task=self.task,
            noise=self.noise,
            margin=self.margin,
            condition=self.condition,
            n_test=self.n_test,
        )


@dataclass
class EvalConfig:
    every_iter: bool = False
    every_rounds: int = 1
    top_k: int = 5
    record_iterates: bool = False


@dataclass
class AnalysisConfig:
    # optional smoothness estimates used for the learning-rate check
    lipschitz: float | None = None
    lipschitz_max: float | None = None
    bound: bool = False


@dataclass
class SearchConfig:
    # iterations per candidate in a learning-rate grid search; None means rounds * local_steps
    budget_iters: int | None = None


@dataclass
class SimConfig:
    n_silos: int
    clients: int | list[int]
    local_steps: int
    lr: float
    batch_size: int
    rounds: int
    seeds: Seeds
    dataset: DatasetConfig
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    latency: LatencyModel = field(default_factory=LatencyModel)
    eval: EvalConfig = field(default_factory=EvalConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_silos < 1:
            raise ConfigError("n_silos must be >= 1")
        ks = self.clients_per_silo
        if len(ks) != self.n_silos:
            raise ConfigError(f"clients lists {len(ks)} silos, n_silos is {self.n_silos}")
        if any(k < 1 for k in ks):
            raise ConfigError("every silo needs at least one client")
        if self.local_steps < 1:
            raise ConfigError("local_steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if not self.lr >= 0:
            raise ConfigError("lr must be >= 0")
        archs = self.architectures
        if len(archs) != self.n_silos:
            raise ConfigError(f"model.architecture lists {len(archs)} silos, n_silos is {self.n_silos}")
        if self.model.silo_dims is not None and len(self.model.silo_dims) != self.n_silos:
            raise ConfigError("model.silo_dims must have one entry per silo")
        if self.eval.every_rounds < 1:
            raise ConfigError("eval.every_rounds must be >= 1")
        if self.search.budget_iters is not None and self.search.budget_iters < 1:
            raise ConfigError("search.budget_iters must be >= 1")
        if self.dataset.source not in ("synthetic", "csv", "binary"):
            raise ConfigError(f"unknown dataset.source {self.dataset.source!r}")
        if self.dataset.source != "synthetic" and not self.dataset.path:
            raise ConfigError("dataset.path is required for csv and binary sources")

    @property
    def clients_per_silo(self) -> list[int]:
        if isinstance(self.clients, int):
            return [self.clients] * self.n_silos
        return list(self.clients)

    @property
    def architectures(self) -> list[str]:
        a = self.model.architecture
        return [a] * self.n_silos if isinstance(a, str) else list(a)

    @property
    def embedding_dim(self) -> int:
        return self.model.embedding_dim or self.loss.label_arity

    @property
    def total_iterations(self) -> int:
        return self.rounds * self.local_steps

    def replace(self, **changes) -> "SimConfig":
        """Copy with top-level or dotted (``"latency.t_comm"``) fields replaced."""
        data = self.to_dict()
        for key, value in changes.items():
            target = data
            parts = key.split(".")
            for p in parts[:-1]:
                target = target[p]
            target[parts[-1]] = value
        return SimConfig.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        return _build(cls, raw, "")


_SECTIONS = {
    "seeds": Seeds,
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "latency": LatencyModel,
    "eval": EvalConfig,
    "analysis": AnalysisConfig,
    "search": SearchConfig,
}


def _build(cls, raw: dict, prefix: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(prefix + u for u in unknown)}")
    kwargs: dict[str, Any] = {}
    for name, f in fields.items():
        required = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
        if name not in raw:
            if required:
                raise ConfigError(f"missing required config field: {prefix}{name}")
            continue
        value = raw[name]
        if cls is SimConfig and name in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {name} must be a mapping")
            value = _build(_SECTIONS[name], value, f"{name}.")
        else:
            value = _coerce(value, f.type, prefix + name)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _coerce(value, annotation: str, name: str):
    if value is None:
        if "None" in annotation:
            return None
        raise ConfigError(f"config field {name} may not be null")
    annotation = annotation.replace(" | None", "")
    if annotation.startswith("float"):
        # YAML 1.1 reads "1e-3" as a string
        if isinstance(value, bool):
            raise ConfigError(f"config field {name} must be a number")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config field {name} must be a number, got {value!r}") from None
    if annotation == "int" and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"config field {name} must be an integer, got {value!r}")
    if annotation == "bool" and not isinstance(value, bool):
        raise ConfigError(f"config field {name} must be true or false, got {value!r}")
    return value


def load_config(path: str | Path) -> SimConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return SimConfig.from_dict(raw or {})


def dump_config(config: SimConfig, path: str | Path) -> None:
    Path(path).write_text(
        yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None), encoding="utf-8"
    )
