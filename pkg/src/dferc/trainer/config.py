from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from ..cfm import CfmConfig
from ..crm import CrmConfig
from ..ddm import DdmConfig

MELD_ALPHA = (0.3, 0.8, 0.3)
IEMOCAP_ALPHA = (0.2, 0.9, 1.0)


@dataclass
class ModelConfig:
    ddm: DdmConfig = field(default_factory=DdmConfig)
    cfm: CfmConfig = field(default_factory=CfmConfig)
    crm: CrmConfig = field(default_factory=CrmConfig)
    mlp_hidden: int | None = None  # None: hidden width equals the head's output width
    mlp_depth: int = 1

    def __post_init__(self):
        if self.mlp_depth < 0:
            raise ValueError("mlp_depth must be non-negative")
        if self.mlp_hidden is not None and self.mlp_hidden < 1:
            raise ValueError("mlp_hidden must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        return cls(ddm=DdmConfig(**d.pop("ddm", {})), cfm=CfmConfig(**d.pop("cfm", {})),
                   crm=CrmConfig(**d.pop("crm", {})), **d)


def benchmark_model_config() -> ModelConfig:
    """Small widths for the desk-scale synthetic benchmark (raw dims 16/12/10)."""
    return ModelConfig(DdmConfig(proj_dim=16), CfmConfig(fusion_dim=32),
                       CrmConfig(align_dim=16, context_hidden=16), mlp_hidden=32)


@dataclass
class TrainConfig:
    alpha: tuple[float, float, float] = MELD_ALPHA
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup_steps: int = 100
    max_grad_norm: float = 1.0
    epochs: int = 10
    batch_size: int = 8
    dropout: float = 0.2
    seed: int = 0
    variant: str = "full"

    def __post_init__(self):
        self.alpha = tuple(float(a) for a in self.alpha)
        if len(self.alpha) != 3 or any(not 0.0 < a <= 1.0 for a in self.alpha):
            raise ValueError(f"alpha weights must each lie in (0, 1], got {self.alpha}")
        if self.lr <= 0 or self.weight_decay < 0 or self.max_grad_norm <= 0:
            raise ValueError("lr and max_grad_norm must be positive, weight_decay non-negative")
        if self.warmup_steps < 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("warmup_steps >= 0, epochs >= 1 and batch_size >= 1 required")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        variant_spec(self.variant)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = list(self.alpha)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class Variant:
    name: str
    projections: bool = True        # residual concatenation keeps the two projections
    cl_modality: bool = True
    cl_utterance: bool = True
    fusion: str = "cfm"             # cfm | uniform | attention
    context: str = "crm"            # crm | full | zero | attention
    modalities: tuple[bool, bool, bool] = (True, True, True)

    @property
    def modality_mask(self) -> tuple[float, float, float]:
        return tuple(1.0 if m else 0.0 for m in self.modalities)


_SUBSETS = {"T": (1, 0, 0), "A": (0, 1, 0), "V": (0, 0, 1),
            "T+A": (1, 1, 0), "T+V": (1, 0, 1), "A+V": (0, 1, 1), "T+A+V": (1, 1, 1)}

VARIANTS: dict[str, Variant] = {
    "full": Variant("full"),
    "-DDM": Variant("-DDM", projections=False, cl_modality=False, cl_utterance=False),
    "-Utterance": Variant("-Utterance", cl_utterance=False),
    "-Modality": Variant("-Modality", cl_modality=False),
    "-CFM": Variant("-CFM", fusion="uniform"),
    "+Att": Variant("+Att", fusion="attention"),
    "-CRM(full)": Variant("-CRM(full)", context="full"),
    "-CRM(zero)": Variant("-CRM(zero)", context="zero"),
    "+Att(CRM)": Variant("+Att(CRM)", context="attention"),
}
VARIANTS.update({k: Variant(k, modalities=tuple(bool(b) for b in v)) for k, v in _SUBSETS.items()
                 if k != "T+A+V"})

MECHANISM_VARIANTS = ("-DDM", "-Utterance", "-Modality", "-CFM", "+Att",
                      "-CRM(full)", "-CRM(zero)", "+Att(CRM)")
MODALITY_VARIANTS = ("T", "A", "V", "T+A", "T+V", "A+V")


def variant_spec(name: str) -> Variant:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None
