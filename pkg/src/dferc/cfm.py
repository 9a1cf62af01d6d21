"""Contribution-aware fusion.

A teacher classifier per modality yields the probability of the gold class
(true class probability, TCP). A student regressor per modality learns to
predict that probability from the features alone, and its sigmoid output is
the modality's fusion weight at train and test time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import MODALITIES
from .numcore import DimensionError, MlpParams, Tensor
from .numcore import tensor as T

EPS_LOG = 1e-12


@dataclass
class CfmConfig:
    fusion_dim: int = 600

    def __post_init__(self):
        if self.fusion_dim < 1:
            raise ValueError("fusion_dim must be positive")


@dataclass
class CfmHeads:
    teacher: list[MlpParams]
    student: list[MlpParams]
    adapter: list[MlpParams]

    def __post_init__(self):
        K = {h.out_dim for h in self.teacher}
        if len(K) != 1:
            raise DimensionError("teacher heads disagree on the number of classes")

    @classmethod
    def init(cls, rng, in_dims, K: int, cfg: CfmConfig, hidden=None, depth=1) -> "CfmHeads":
        return cls([MlpParams.init(rng, d, K, hidden, depth) for d in in_dims],
                   [MlpParams.init(rng, d, 1, hidden, depth) for d in in_dims],
                   [MlpParams.init(rng, d, cfg.fusion_dim, depth=0) for d in in_dims])

    @property
    def K(self) -> int:
        return self.teacher[0].out_dim

    def named_parameters(self, prefix="cfm"):
        for m, name in enumerate(MODALITIES):
            yield from self.teacher[m].named_parameters(f"{prefix}.teacher.{name}")
            yield from self.student[m].named_parameters(f"{prefix}.student.{name}")
            yield from self.adapter[m].named_parameters(f"{prefix}.adapter.{name}")


def teacher_distributions(feats: Sequence[Tensor], heads: CfmHeads) -> list[Tensor]:
    return [T.softmax(h(x), axis=-1) for h, x in zip(heads.teacher, feats)]


def tcp_targets(z: Sequence[Tensor], gold) -> np.ndarray:
    """``[3, N]`` probabilities of the gold class; plain arrays, so no gradient flows back."""
    gold = np.asarray(gold, dtype=int)
    rows = np.arange(gold.shape[0])
    return np.stack([zm.data[rows, gold] for zm in z])


def contribution_weights(feats: Sequence[Tensor], heads: CfmHeads) -> list[Tensor]:
    """Per-modality weights in (0, 1), each of shape ``[N]``."""
    return [T.reshape(T.sigmoid(h(x)), (x.shape[0],)) for h, x in zip(heads.student, feats)]


def cfm_loss_terms(z: Sequence[Tensor], tcp: np.ndarray, omega: Sequence[Tensor], gold,
                   modality_mask=(1.0, 1.0, 1.0)) -> list[tuple[Tensor, Tensor]]:
    """(teacher cross-entropy, squared TCP residual) summed over utterances, per modality."""
    gold = np.asarray(gold, dtype=int)
    rows = np.arange(gold.shape[0])
    terms = []
    for m in range(3):
        if len(z[m].shape) != 2 or z[m].shape[0] != gold.shape[0] or omega[m].shape[0] != gold.shape[0]:
            raise DimensionError("CFM inputs disagree on the number of utterances")
        lp = T.mul(T.sum(T.log(z[m][rows, gold], eps=EPS_LOG)), -1.0)
        lq = T.sum(T.square(T.sub(omega[m], tcp[m])))
        if modality_mask[m] != 1.0:
            lp, lq = T.mul(lp, modality_mask[m]), T.mul(lq, modality_mask[m])
        terms.append((lp, lq))
    return terms


def cfm_loss(z, tcp, omega, gold, modality_mask=(1.0, 1.0, 1.0)) -> Tensor:
    total = None
    for lp, lq in cfm_loss_terms(z, tcp, omega, gold, modality_mask):
        part = T.add(lp, lq)
        total = part if total is None else T.add(total, part)
    return total


def adapt(feats: Sequence[Tensor], heads: CfmHeads) -> list[Tensor]:
    """Map the three residual concatenations to the shared fusion width."""
    return [h(x) for h, x in zip(heads.adapter, feats)]


def fuse(feats: Sequence[Tensor], omega: Sequence) -> Tensor:
    """Weighted sum of the three modality vectors; weights are ``[N]`` tensors or scalars."""
    dims = {f.shape[-1] for f in feats}
    if len(dims) != 1:
        raise DimensionError(f"fused modality vectors must share a width, got {sorted(dims)}")
    out = None
    for f, w in zip(feats, omega):
        if isinstance(w, Tensor):
            w = T.reshape(w, (w.shape[0], 1))
        term = T.mul(f, w)
        out = term if out is None else T.add(out, term)
    return out


def attention_fuse(feats: Sequence[Tensor], query: Tensor) -> Tensor:
    """Single-head scaled dot-product attention over the three modality vectors.

    ``query`` is a learned ``[F]`` vector; keys and values are the vectors
    themselves.
    """
    F = feats[0].shape[-1]
    stacked = T.stack(list(feats), axis=1)                            # [N, 3, F]
    scores = T.mul(T.sum(T.mul(stacked, query), axis=-1), 1.0 / np.sqrt(F))  # [N, 3]
    att = T.softmax(scores, axis=-1)
    return T.sum(T.mul(stacked, T.reshape(att, (att.shape[0], 3, 1))), axis=1)
