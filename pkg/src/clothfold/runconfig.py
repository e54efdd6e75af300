"""Run configuration: one JSON file validated on load, unknown keys rejected,
hashed so every artifact can state exactly which configuration produced it.
Secrets (the LLM API key) stay in environment variables named by the config.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .perception.config import ModelConfig
from .trainer.train import TrainConfig


class ConfigError(ValueError):
    pass


_SIM_DEFAULTS = {
    "resolution": 224,
    "camera_height": 1.0,
}

_DATA_DEFAULTS = {
    "episodes_per_family": 42,
    "held_out_family": None,
}

_BENCH_DEFAULTS = {
    "episodes_per_cell": 3,
    "mask_only": False,
}

_PLANNER_DEFAULTS = {
    "backend": None,     # or {"endpoint_url", "model", "api_key_env", "timeout_s"}
}


def _merge_section(name: str, defaults: dict, override: Any) -> dict:
    if override is None:
        return dict(defaults)
    if not isinstance(override, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = sorted(set(override) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {unknown}")
    return {**defaults, **override}


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sim: dict = field(default_factory=lambda: dict(_SIM_DEFAULTS))
    data: dict = field(default_factory=lambda: dict(_DATA_DEFAULTS))
    benchmark: dict = field(default_factory=lambda: dict(_BENCH_DEFAULTS))
    planner: dict = field(default_factory=lambda: dict(_PLANNER_DEFAULTS))

    def to_record(self) -> dict:
        return {"seed": self.seed, "model": self.model.to_record(),
                "train": self.train.to_record(), "sim": dict(self.sim),
                "data": dict(self.data), "benchmark": dict(self.benchmark),
                "planner": dict(self.planner)}

    def config_hash(self) -> str:
        canon = json.dumps(self.to_record(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "seed": self.seed}


_TOP_KEYS = ("seed", "model", "train", "sim", "data", "benchmark", "planner")


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(raw) - set(_TOP_KEYS))
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {unknown}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    model_rec = dict(ModelConfig().to_record())
    model_rec["head_dim"] = 0          # derived unless the user pins it
    model_over = raw.get("model")
    if model_over is not None:
        if not isinstance(model_over, dict):
            raise ConfigError("section 'model' must be an object")
        unknown = sorted(set(model_over) - set(model_rec))
        if unknown:
            raise ConfigError(f"unknown keys in section 'model': {unknown}")
        model_rec.update(model_over)
    train_rec = dict(TrainConfig().to_record())
    train_over = raw.get("train")
    if train_over is not None:
        if not isinstance(train_over, dict):
            raise ConfigError("section 'train' must be an object")
        unknown = sorted(set(train_over) - set(train_rec))
        if unknown:
            raise ConfigError(f"unknown keys in section 'train': {unknown}")
        train_rec.update(train_over)

    try:
        model = ModelConfig.from_record(model_rec)
        train = TrainConfig.from_record(train_rec)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid model/train settings: {e}") from e

    # Keep the model and train adapter/fusion axes in lockstep unless the
    # user explicitly pinned an axis in the train section.
    explicit = train_over or {}
    patched = train.to_record()
    if "adapter" not in explicit:
        patched["adapter"] = model.adapter
    if "fusion" not in explicit:
        patched["fusion"] = model.fusion
    train = TrainConfig.from_record(patched)
    if (train.adapter, train.fusion) != (model.adapter, model.fusion):
        raise ConfigError("model and train sections disagree on adapter/fusion")

    return RunConfig(
        seed=seed, model=model, train=train,
        sim=_merge_section("sim", _SIM_DEFAULTS, raw.get("sim")),
        data=_merge_section("data", _DATA_DEFAULTS, raw.get("data")),
        benchmark=_merge_section("benchmark", _BENCH_DEFAULTS, raw.get("benchmark")),
        planner=_merge_section("planner", _PLANNER_DEFAULTS, raw.get("planner")),
    )


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    return parse_config(raw)
