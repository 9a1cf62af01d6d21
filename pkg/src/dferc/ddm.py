"""Dual-level disentanglement: modality-level and utterance-level projections.

Within one dialogue of ``n`` utterances the projected vectors are laid out
as the interleaved list ``[t_0, a_0, v_0, t_1, a_1, v_1, ...]``; position
``p`` holds modality ``p % 3`` of utterance ``p // 3``. A batch is several
dialogues back to back, and every contrastive term stays inside its own
dialogue.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import MODALITIES
from .numcore import MlpParams, Tensor
from .numcore import tensor as T

log = logging.getLogger(__name__)

# incremented whenever an anchor has no positives (modality level, n == 1)
empty_anchor_counter: Counter = Counter()


@dataclass
class DdmConfig:
    proj_dim: int = 300
    tau_m: float = 0.5
    tau_u: float = 0.3
    anchors: str = "all"  # "all" = every one of the 3n entries, "first_n" = literal outer sum

    def __post_init__(self):
        if self.tau_m <= 0 or self.tau_u <= 0:
            raise ValueError("contrastive temperatures must be positive")
        if self.anchors not in ("all", "first_n"):
            raise ValueError(f"anchors must be 'all' or 'first_n', got {self.anchors!r}")
        if self.proj_dim < 1:
            raise ValueError("proj_dim must be positive")


@dataclass
class DdmHeads:
    modality: list[MlpParams]
    utterance: list[MlpParams]

    @classmethod
    def init(cls, rng, raw_dims, cfg: DdmConfig, hidden=None, depth=1) -> "DdmHeads":
        return cls([MlpParams.init(rng, d, cfg.proj_dim, hidden, depth) for d in raw_dims],
                   [MlpParams.init(rng, d, cfg.proj_dim, hidden, depth) for d in raw_dims])

    def named_parameters(self, prefix="ddm"):
        for m, (hm, hu) in enumerate(zip(self.modality, self.utterance)):
            yield from hm.named_parameters(f"{prefix}.mod.{MODALITIES[m]}")
            yield from hu.named_parameters(f"{prefix}.utt.{MODALITIES[m]}")


@dataclass
class DisentangledFeatures:
    raw: list[Tensor]          # per modality [N, d_m]
    modality: list[Tensor]     # per modality [N, proj_dim]
    utterance: list[Tensor]    # per modality [N, proj_dim]
    fused_input: list[Tensor]  # residual concatenations [raw; modality; utterance]

    @property
    def n(self) -> int:
        return self.raw[0].shape[0]


def index_map(n: int) -> list[tuple[int, str]]:
    """Position -> (utterance, modality) for the interleaved list of one dialogue."""
    return [(p // 3, MODALITIES[p % 3]) for p in range(3 * n)]


def interleave(per_modality: Sequence[Tensor]) -> Tensor:
    """Stack ``[N, d]`` text/audio/video rows into the ``[3N, d]`` interleaved list."""
    N, d = per_modality[0].shape
    return T.reshape(T.concat(list(per_modality), axis=1), (3 * N, d))


def project_dual(raw: Sequence[Tensor], heads: DdmHeads, keep_projections: bool = True
                 ) -> DisentangledFeatures:
    n = raw[0].shape[0]
    if n < 1:
        raise ValueError("project_dual needs at least one utterance")
    mod = [h(x) for h, x in zip(heads.modality, raw)]
    utt = [h(x) for h, x in zip(heads.utterance, raw)]
    if keep_projections:
        cat = [T.concat([x, m, u], axis=1) for x, m, u in zip(raw, mod, utt)]
    else:
        cat = list(raw)
    return DisentangledFeatures(list(raw), mod, utt, cat)


def grouping_modality(n: int) -> list[set[int]]:
    return [{j for j in range(3 * n) if j % 3 == i % 3 and j != i} for i in range(3 * n)]


def grouping_utterance(n: int) -> list[set[int]]:
    return [{j for j in range(3 * n) if j // 3 == i // 3 and j != i} for i in range(3 * n)]


def _segments(lengths) -> np.ndarray:
    """Dialogue id of every interleaved position in a batch."""
    return np.repeat(np.arange(len(lengths)), 3 * np.asarray(lengths))


def batch_masks(lengths, level: str) -> tuple[np.ndarray, np.ndarray]:
    """Positive and denominator masks for a batch of dialogues with the given lengths."""
    seg = _segments(lengths)
    P = seg.shape[0]
    pos = np.arange(P)
    # local position inside each dialogue
    starts = np.repeat(np.concatenate([[0], np.cumsum(3 * np.asarray(lengths))[:-1]]),
                       3 * np.asarray(lengths))
    local = pos - starts
    not_self = ~np.eye(P, dtype=bool)
    scope = (seg[:, None] == seg[None, :]) & not_self
    if level == "modality":
        group = local % 3
    elif level == "utterance":
        group = local // 3
    else:
        raise ValueError(f"unknown grouping level {level!r}")
    positive = scope & (group[:, None] == group[None, :])
    return positive, scope


def anchor_mask(lengths, anchors: str) -> np.ndarray:
    lengths = np.asarray(lengths)
    if anchors == "all":
        return np.ones(int(3 * lengths.sum()), dtype=bool)
    starts = np.repeat(np.concatenate([[0], np.cumsum(3 * lengths)[:-1]]), 3 * lengths)
    local = np.arange(int(3 * lengths.sum())) - starts
    return local < np.repeat(lengths, 3 * lengths)


def _as_mask(positive_sets, P: int) -> np.ndarray:
    if isinstance(positive_sets, np.ndarray):
        return positive_sets.astype(bool)
    mask = np.zeros((P, P), dtype=bool)
    for a, s in enumerate(positive_sets):
        for k in s:
            mask[a, k] = True
    return mask


def supervised_contrastive_loss(h: Tensor, positive_sets, tau: float, scope: np.ndarray | None = None,
                                anchors: np.ndarray | None = None, counter: Counter | None = None
                                ) -> Tensor:
    """Sum over anchors and their positives of ``-log softmax_{j != a}(cos(h_a, h_j)/tau)[k]``.

    ``positive_sets`` is either a list of index sets (one per row of ``h``)
    or a boolean ``[P, P]`` matrix. ``scope`` restricts the denominator
    (default: every other row). Anchors with no positives contribute 0 and
    bump ``counter["empty_anchor"]``.
    """
    P = h.shape[0]
    if P < 2:
        raise ValueError("contrastive loss needs at least two vectors")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    pos = _as_mask(positive_sets, P)
    if np.any(np.diag(pos)):
        raise ValueError("positive sets must exclude the anchor itself")
    if scope is None:
        scope = ~np.eye(P, dtype=bool)
    if anchors is not None:
        pos = pos & anchors[:, None]
    npos = pos.sum(axis=1)
    live = anchors if anchors is not None else np.ones(P, dtype=bool)
    empty = int(np.sum(live & (npos == 0)))
    if empty:
        (counter if counter is not None else empty_anchor_counter)["empty_anchor"] += empty
        log.debug("%d contrastive anchors without positives contribute zero", empty)
    S = T.mul(T.cosine_matrix(h), 1.0 / tau)
    return contrastive_from_logits(S, pos, scope)


def contrastive_from_logits(S: Tensor, pos: np.ndarray, scope: np.ndarray) -> Tensor:
    """The loss given the temperature-scaled similarity matrix ``S`` directly."""
    npos = pos.sum(axis=1)
    attract = T.sum(T.mul(S, pos.astype(float)))
    rows = npos > 0
    if not rows.any():
        return T.mul(attract, 0.0)
    lse = T.masked_logsumexp(S[rows], scope[rows], axis=1)
    return T.sub(T.sum(T.mul(lse, npos[rows].astype(float))), attract)


def contrastive_losses(df: DisentangledFeatures, cfg: DdmConfig, lengths=None,
                       counter: Counter | None = None) -> tuple[Tensor, Tensor]:
    """Modality-level and utterance-level losses summed over the dialogues of a batch."""
    lengths = [df.n] if lengths is None else list(lengths)
    anchors = anchor_mask(lengths, cfg.anchors)
    pos_m, scope = batch_masks(lengths, "modality")
    pos_u, _ = batch_masks(lengths, "utterance")
    lm = supervised_contrastive_loss(interleave(df.modality), pos_m, cfg.tau_m, scope, anchors, counter)
    lu = supervised_contrastive_loss(interleave(df.utterance), pos_u, cfg.tau_u, scope, anchors, counter)
    return lm, lu


def ddm_loss(df: DisentangledFeatures, cfg: DdmConfig, lengths=None) -> Tensor:
    lm, lu = contrastive_losses(df, cfg, lengths)
    return T.add(lm, lu)
