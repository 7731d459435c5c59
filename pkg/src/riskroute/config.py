"""Pipeline configuration: one JSON file, every field optional."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .forecast import ModelConfig


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # "synthetic" or "csv"
    path: str | None = None
    columns: dict = field(default_factory=dict)
    n_trucks: int = 40
    n_zones_hint: int = 10
    n_ticks: int = 500

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ValueError(f"data.source must be 'synthetic' or 'csv', got {self.source!r}")
        if self.source == "csv" and not self.path:
            raise ValueError("data.path is required for a csv source")


@dataclass(frozen=True)
class TrainConfig:
    gcn_dim: int = 16
    gru_dim: int = 16
    window: int = 10
    epochs: int = 200
    learning_rate: float = 0.5
    init_scale: float = 0.5
    momentum: float = 0.9


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 7
    data: DataConfig = DataConfig()
    k: int = 10
    metric: str = "euclidean"
    max_iter: int = 300
    epsilon: float = 1e-9
    tau: float = 0.01
    num_steps: int = 100
    train_fraction: float = 0.8
    model: TrainConfig = TrainConfig()
    variant: str = "full"
    lam: float = 1.0
    lambda_grid: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0)
    queries: tuple[tuple[int, int], ...] = ((0, 5),)
    timestep: int = 98

    def model_config(self, variant: str | None = None, input_dim: int = 3) -> ModelConfig:
        return ModelConfig(variant=variant or self.variant, input_dim=input_dim,
                           seed=self.seed, **asdict(self.model))

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["lambda_grid"] = list(self.lambda_grid)
        doc["queries"] = [list(q) for q in self.queries]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        doc = dict(doc)
        if "data" in doc:
            doc["data"] = DataConfig(**doc["data"])
        if "model" in doc:
            doc["model"] = TrainConfig(**doc["model"])
        if "lambda_grid" in doc:
            doc["lambda_grid"] = tuple(float(x) for x in doc["lambda_grid"])
        if "queries" in doc:
            doc["queries"] = tuple((int(a), int(b)) for a, b in doc["queries"])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def override(self, **changes) -> "PipelineConfig":
        """Top-level and ``model.`` / ``data.`` prefixed overrides; ``None`` skips."""
        top, model, data = {}, {}, {}
        for key, value in changes.items():
            if value is None:
                continue
            if key.startswith("model."):
                model[key[6:]] = value
            elif key.startswith("data."):
                data[key[5:]] = value
            else:
                top[key] = value
        if model:
            top["model"] = replace(self.model, **model)
        if data:
            top["data"] = replace(self.data, **data)
        return replace(self, **top)


# Constants the pipeline defaults must reproduce.
REFERENCE_DEFAULTS = {
    "k": 10,
    "tau": 0.01,
    "model.window": 10,
    "num_steps": 100,
    "train_fraction": 0.8,
}


def check_reference_defaults(cfg: PipelineConfig | None = None) -> list[str]:
    """Return a message per default that drifted from its reference value."""
    cfg = cfg or PipelineConfig()
    problems = []
    for key, expected in REFERENCE_DEFAULTS.items():
        obj = cfg
        for part in key.split("."):
            obj = getattr(obj, part)
        if obj != expected:
            problems.append(f"{key} = {obj!r}, expected {expected!r}")
    return problems
