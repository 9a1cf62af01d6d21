"""Context refusion: prototype alignment, modality consistency and gated context."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import MODALITIES
from .numcore import BiLstmParams, DimensionError, MlpParams, Tensor, bilstm_forward_padded
from .numcore import tensor as T


@dataclass
class CrmConfig:
    align_dim: int = 500
    beta: float = 0.1
    context_hidden: int = 300
    clamp_psi: bool = False

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("margin beta must be non-negative")
        if self.align_dim < 1 or self.context_hidden < 1:
            raise ValueError("align_dim and context_hidden must be positive")


@dataclass
class PrototypeStore:
    """Running per-emotion means of aligned features; plain arrays, never differentiated."""

    means: np.ndarray            # [K, align_dim]
    counts: np.ndarray           # [K] int64
    rounds: int = 0

    @classmethod
    def empty(cls, K: int, dim: int) -> "PrototypeStore":
        return cls(np.zeros((K, dim)), np.zeros(K, dtype=np.int64), 0)

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def copy(self) -> "PrototypeStore":
        return PrototypeStore(self.means.copy(), self.counts.copy(), self.rounds)


def update_prototypes(store: PrototypeStore, x: Sequence, gold, modality_mask=(1.0, 1.0, 1.0)
                      ) -> PrototypeStore:
    """Fold one batch of aligned features into the running class means (in place).

    Each utterance of class ``k`` contributes its three modality vectors, so
    ``counts[k]`` grows by three per utterance.
    """
    gold = np.asarray(gold, dtype=int)
    arrays = [xm.data if isinstance(xm, Tensor) else np.asarray(xm, dtype=float) for xm in x]
    arrays = [a for a, keep in zip(arrays, modality_mask) if keep]
    for a in arrays:
        if a.shape[-1] != store.dim:
            raise DimensionError(f"aligned features have dim {a.shape[-1]}, store has {store.dim}")
    for k in np.unique(gold):
        rows = gold == k
        added = len(arrays) * int(rows.sum())
        total = np.zeros(store.dim)
        for a in arrays:
            total += a[rows].sum(axis=0)
        new_n = store.counts[k] + added
        store.means[k] = (store.counts[k] * store.means[k] + total) / new_n
        store.counts[k] = new_n
    store.rounds += 1
    return store


def _dialogue_weights(lengths, N: int) -> np.ndarray:
    lengths = np.asarray([N] if lengths is None else lengths)
    if lengths.sum() != N:
        raise DimensionError("dialogue lengths do not add up to the number of utterances")
    return np.repeat(1.0 / (3.0 * lengths), lengths)


def prototype_margin_loss(store: PrototypeStore, x: Sequence[Tensor], gold, beta: float,
                          lengths=None, modality_mask=(1.0, 1.0, 1.0)) -> Tensor:
    """Hinged mean squared distance of each aligned vector to its class prototype.

    Per dialogue the hinge terms are scaled by ``1/(3n)``; classes with no
    ingested features yet are skipped.
    """
    gold = np.asarray(gold, dtype=int)
    N = gold.shape[0]
    scale = _dialogue_weights(lengths, N) * (store.counts[gold] > 0)
    target = store.means[gold]
    total = None
    for m, xm in enumerate(x):
        if not modality_mask[m]:
            continue
        mse = T.mean(T.square(T.sub(xm, target)), axis=1)
        term = T.sum(T.mul(T.hinge(T.sub(mse, beta)), scale))
        total = term if total is None else T.add(total, term)
    return total if total is not None else Tensor(0.0)


def align_project(feats: Sequence[Tensor], heads: Sequence[MlpParams]) -> list[Tensor]:
    return [h(f) for h, f in zip(heads, feats)]


def modality_consistency(x: Sequence[Tensor], clamp: bool = False) -> Tensor:
    """Mean of the three pairwise cosines between aligned modality vectors; shape ``[N]``."""
    t, a, v = x
    psi = T.mul(T.add(T.add(T.cosine_sim(t, a), T.cosine_sim(t, v)), T.cosine_sim(a, v)), 1.0 / 3.0)
    if clamp:
        psi = T.where(psi.data < 0.0, 0.0, T.where(psi.data > 1.0, 1.0, psi))
    return psi


def padded_index(lengths) -> np.ndarray:
    """``[max_len, B]`` rows of the flat utterance matrix; padded steps point at row 0."""
    lengths = np.asarray(lengths)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    steps = np.arange(lengths.max())[:, None]
    return np.where(steps < lengths[None, :], starts[None, :] + steps, 0)


def context_encode(hf: Tensor, params: BiLstmParams, lengths=None) -> Tensor:
    lengths = [hf.shape[0]] if lengths is None else list(lengths)
    return bilstm_forward_padded(hf, params, lengths, padded_index(lengths))


def context_gate(psi: Tensor, mode: str = "crm") -> Tensor | float:
    """Weight on the context half: ``1 - psi`` or a static 1 / 0."""
    if mode == "crm":
        return T.sub(1.0, psi)
    if mode == "full":
        return 1.0
    if mode == "zero":
        return 0.0
    raise ValueError(f"unknown context gate {mode!r}")


def refuse_context(hf: Tensor, hc: Tensor, gate) -> Tensor:
    """``[h_f ; h_c * gate]`` with a per-utterance ``[N]`` gate or a scalar."""
    if isinstance(gate, Tensor):
        gate = T.reshape(gate, (gate.shape[0], 1))
    elif not isinstance(gate, (int, float)):
        gate = np.asarray(gate, dtype=float).reshape(-1, 1)
    return T.concat([hf, T.mul(hc, gate)], axis=1)


@dataclass
class CrmHeads:
    align: list[MlpParams]
    context: BiLstmParams

    @classmethod
    def init(cls, rng, in_dims, fusion_dim: int, cfg: CrmConfig, hidden=None, depth=1) -> "CrmHeads":
        return cls([MlpParams.init(rng, d, cfg.align_dim, hidden, depth) for d in in_dims],
                   BiLstmParams.init(rng, fusion_dim, cfg.context_hidden))

    def named_parameters(self, prefix="crm"):
        for m, name in enumerate(MODALITIES):
            yield from self.align[m].named_parameters(f"{prefix}.align.{name}")
        yield from self.context.named_parameters(f"{prefix}.context")
