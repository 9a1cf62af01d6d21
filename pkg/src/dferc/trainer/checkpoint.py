"""Checkpoint container.

A checkpoint is one JSON document::

    {"format": "dferc-checkpoint", "version": 1,
     "labels": [...], "raw_dims": [d_t, d_a, d_v],
     "model_config": {...}, "train_config": {...},
     "params": {"<canonical name>": {"shape": [...], "data": "<base64>"}},
     "prototypes": {"means": <array>, "counts": [...], "rounds": r},
     "rng": {"dropout": <bit generator state>},
     "epoch": e, "step": s, "best_valid": {...} | null}

Arrays are little-endian float64 bytes, base64 encoded, so a save/load round
trip is bit-exact.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..crm import PrototypeStore
from ..dataio import LabelSpace
from .config import ModelConfig, TrainConfig

FORMAT_NAME = "dferc-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


@dataclass
class Checkpoint:
    labels: LabelSpace
    raw_dims: tuple[int, int, int]
    model_config: ModelConfig
    train_config: TrainConfig
    params: dict[str, np.ndarray]
    prototypes: PrototypeStore
    rng_state: dict = field(default_factory=dict)
    epoch: int = 0
    step: int = 0
    best_valid: dict | None = None

    def to_json(self) -> dict:
        return {
            "format": FORMAT_NAME, "version": FORMAT_VERSION,
            "labels": list(self.labels.names), "raw_dims": list(self.raw_dims),
            "model_config": self.model_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "params": {k: encode_array(v) for k, v in sorted(self.params.items())},
            "prototypes": {"means": encode_array(self.prototypes.means),
                           "counts": [int(c) for c in self.prototypes.counts],
                           "rounds": int(self.prototypes.rounds)},
            "rng": self.rng_state, "epoch": self.epoch, "step": self.step,
            "best_valid": self.best_valid,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Checkpoint":
        if obj.get("format") != FORMAT_NAME:
            raise CheckpointError("not a dferc checkpoint")
        if obj.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {obj.get('version')!r}")
        proto = obj["prototypes"]
        return cls(
            LabelSpace(tuple(obj["labels"])), tuple(obj["raw_dims"]),
            ModelConfig.from_dict(obj["model_config"]), TrainConfig.from_dict(obj["train_config"]),
            {k: decode_array(v) for k, v in obj["params"].items()},
            PrototypeStore(decode_array(proto["means"]), np.asarray(proto["counts"], dtype=np.int64),
                           int(proto["rounds"])),
            obj.get("rng", {}), int(obj.get("epoch", 0)), int(obj.get("step", 0)), obj.get("best_valid"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: malformed checkpoint ({exc.msg})") from None
        return cls.from_json(obj)
