"""Pipeline configuration: one document holding every knob, resolved from
defaults, an optional config file, PATSIG_* environment variables, and
explicit CLI flags (in that order of increasing precedence)."""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Mapping

from ._io import atomic_write, sha256_file
from .errors import ConfigError

ENV_PREFIX = "PATSIG_"

FORMAT_VERSIONS = {"vector_store": 1, "index": 1, "corpus_cache": 1}


@dataclass
class PipelineConfig:
    # corpus selection and tokenization
    year_min: int = 1980
    year_max: int = 2017
    granted_only: bool = True
    priority_only: bool = True
    min_count: int = 20
    bigram_threshold: int = 500
    # word embedding
    dim: int = 300
    window: int = 8
    epochs: int = 5
    negatives: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    subsample: float = 0.0
    # ANN index
    n_trees: int = 100
    leaf_capacity: int = 16
    search_breadth: int | None = None
    # similarity graph
    n_neighbors: int = 100
    threshold: float = 0.65
    # temporal indicators
    min_lag: float = 1.0
    max_lag: float = 5.0
    # evaluation
    hidden_sizes: tuple[int, ...] = (512, 256, 128)
    mlp_epochs: int = 30
    batch_size: int = 64
    mlp_learning_rate: float = 0.05
    momentum: float = 0.9
    holdout: float = 0.2
    pairs_per_condition: int = 1000
    # reproducibility
    seed: int = 1
    deterministic: bool = True

    def validate(self) -> "PipelineConfig":
        if not (-1.0 < self.threshold <= 1.0):
            raise ConfigError(f"threshold must be in (-1, 1], got {self.threshold}")
        if not (0 <= self.min_lag < self.max_lag):
            raise ConfigError(
                f"need 0 <= min_lag < max_lag, got {self.min_lag}, {self.max_lag}"
            )
        for name in ("dim", "window", "epochs", "negatives", "min_count",
                     "bigram_threshold", "n_trees", "leaf_capacity", "n_neighbors"):
            value = getattr(self, name)
            minimum = 0 if name in ("epochs", "negatives") else 1
            if value < minimum:
                raise ConfigError(f"{name} must be >= {minimum}, got {value}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if not (0.0 < self.holdout < 1.0):
            raise ConfigError(f"holdout must be in (0, 1), got {self.holdout}")
        return self

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["hidden_sizes"] = list(self.hidden_sizes)
        if math.isinf(self.max_lag):
            out["max_lag"] = "inf"
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _coerce(name: str, value: Any) -> Any:
    field = _FIELDS[name]
    base = field.type
    try:
        if name == "hidden_sizes":
            if isinstance(value, str):
                value = [int(v) for v in value.split(",") if v.strip()]
            return tuple(int(v) for v in value)
        if name == "search_breadth":
            if value in (None, "", "none", "None"):
                return None
            return int(value)
        if name == "max_lag" and value in ("inf", "Infinity"):
            return math.inf
        if base.startswith("bool"):
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("1", "true", "yes"):
                return True
            if str(value).lower() in ("0", "false", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if base.startswith("int"):
            return int(value)
        if base.startswith("float"):
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {name}: {value!r} ({exc})") from None
    return value


def resolve_config(
    config_path: str | None = None,
    overrides: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
) -> PipelineConfig:
    """Defaults, then the config file, then PATSIG_* env vars, then flags."""
    values: dict[str, Any] = {}
    if config_path is not None:
        try:
            with open(config_path, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except FileNotFoundError:
            raise
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: invalid JSON config: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{config_path}: config must be a JSON object")
        for name, value in raw.items():
            if name not in _FIELDS:
                raise ConfigError(f"{config_path}: unknown config key {name!r}")
            values[name] = _coerce(name, value)
    environ = os.environ if environ is None else environ
    for name in _FIELDS:
        env_key = ENV_PREFIX + name.upper()
        if env_key in environ:
            values[name] = _coerce(name, environ[env_key])
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in _FIELDS:
            raise ConfigError(f"unknown config key {name!r}")
        values[name] = _coerce(name, value)
    return PipelineConfig(**values).validate()


def emit_resolved_config(
    config: PipelineConfig,
    path,
    command: str,
    inputs: Mapping[str, str] | None = None,
    outputs: Mapping[str, str] | None = None,
) -> None:
    """Write the fully resolved config next to a run's outputs.

    Input artifacts are recorded with their sha256 so downstream consumers
    can detect stale or swapped inputs.
    """
    document = {
        "command": command,
        "config": config.to_dict(),
        "format_versions": FORMAT_VERSIONS,
        "inputs": {
            name: {"path": str(p), "sha256": sha256_file(p)}
            for name, p in (inputs or {}).items()
        },
        "outputs": {name: str(p) for name, p in (outputs or {}).items()},
    }
    with atomic_write(path, "w") as handle:
        json.dump(document, handle, indent=2, sort_keys=True)
        handle.write("\n")
