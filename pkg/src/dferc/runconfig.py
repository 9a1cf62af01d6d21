"""Flat JSON run configuration shared by every CLI verb.

Every key is optional; omitted keys take the defaults below. Paths, when
given, point at JSON Lines dataset files; without them the synthetic
generator supplies the splits.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .cfm import CfmConfig
from .crm import CrmConfig
from .dataio import Dataset, SynthConfig, generate_splits, load_dataset
from .ddm import DdmConfig
from .trainer.config import MELD_ALPHA, ModelConfig, TrainConfig

SWEEPABLE = ("alpha1", "alpha2", "alpha3", "lr", "weight_decay", "dropout", "beta", "tau_m", "tau_u",
             "batch_size", "epochs", "proj_dim", "fusion_dim", "align_dim", "context_hidden")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # synthetic data
    K: int = 6
    d_t: int = 16
    d_a: int = 12
    d_v: int = 10
    n_train: int = 300
    n_valid: int = 60
    n_test: int = 60
    mean_length: float = 8.0
    max_length: int = 110
    p_stay: float = 0.7
    reliability: list = field(default_factory=lambda: [0.9, 0.6, 0.5])
    sigma: float = 0.4
    inconsistency: float = 0.2
    latent_scale: float = 0.25
    # model
    proj_dim: int = 300
    tau_m: float = 0.5
    tau_u: float = 0.3
    anchors: str = "all"
    fusion_dim: int = 600
    align_dim: int = 500
    beta: float = 0.1
    context_hidden: int = 300
    clamp_psi: bool = False
    mlp_hidden: int | None = None
    mlp_depth: int = 1
    # training
    alpha1: float = MELD_ALPHA[0]
    alpha2: float = MELD_ALPHA[1]
    alpha3: float = MELD_ALPHA[2]
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup_steps: int = 100
    max_grad_norm: float = 1.0
    epochs: int = 10
    batch_size: int = 8
    dropout: float = 0.2
    variant: str = "full"
    # paths and seeds
    train_path: str | None = None
    valid_path: str | None = None
    test_path: str | None = None
    out_dir: str = "runs"
    seed: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            cfg = cls(**d)
            cfg.validate()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        try:
            return cls.from_dict(obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)

    def override(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig.from_dict(d)

    def validate(self) -> None:
        # constructing the component configs runs their range checks
        self.synth_config()
        self.model_config()
        self.train_config()
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")

    def synth_config(self, seed: int | None = None) -> SynthConfig:
        names = {f.name for f in fields(SynthConfig)} - {"seed"}
        return SynthConfig(seed=self.seed if seed is None else seed,
                           **{k: getattr(self, k) for k in names})

    def model_config(self) -> ModelConfig:
        return ModelConfig(DdmConfig(self.proj_dim, self.tau_m, self.tau_u, self.anchors),
                           CfmConfig(self.fusion_dim),
                           CrmConfig(self.align_dim, self.beta, self.context_hidden, self.clamp_psi),
                           self.mlp_hidden, self.mlp_depth)

    def train_config(self, seed: int | None = None, variant: str | None = None) -> TrainConfig:
        return TrainConfig((self.alpha1, self.alpha2, self.alpha3), self.lr, self.weight_decay,
                           self.warmup_steps, self.max_grad_norm, self.epochs, self.batch_size,
                           self.dropout, self.seed if seed is None else seed,
                           self.variant if variant is None else variant)

    def has_paths(self) -> bool:
        return self.train_path is not None

    def splits(self, seed: int | None = None) -> dict[str, Dataset]:
        """Dataset files when configured, else synthetic splits drawn from ``seed``."""
        if self.has_paths():
            out = {"train": load_dataset(self.train_path)}
            for name in ("valid", "test"):
                p = getattr(self, f"{name}_path")
                if p is not None:
                    out[name] = load_dataset(p)
            return out
        return generate_splits(self.synth_config(seed))
