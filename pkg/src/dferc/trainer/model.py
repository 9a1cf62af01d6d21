"""The full network: disentangle, fuse, refuse context, classify."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import cfm, crm, ddm
from ..dataio import MODALITIES, Dialogue
from ..numcore import DimensionError, MlpParams, Tensor, uniform_init
from ..numcore import tensor as T
from .config import ModelConfig, Variant, variant_spec

EPS_LOG = 1e-12
LOSS_NAMES = ("cl_m", "cl_u", "con", "sim", "emo")


@dataclass
class Batch:
    raw: list[np.ndarray]     # per modality [N, d_m]
    gold: np.ndarray          # [N]
    lengths: list[int]
    dialogue_ids: list[str]
    utt_ids: list[str]

    @classmethod
    def from_dialogues(cls, dialogues: Sequence[Dialogue]) -> "Batch":
        if not dialogues:
            raise ValueError("empty batch")
        raw = [np.concatenate([d.matrix(m) for d in dialogues]) for m in MODALITIES]
        gold = np.concatenate([d.labels for d in dialogues])
        return cls(raw, gold, [len(d) for d in dialogues], [d.dialogue_id for d in dialogues],
                   [u.utt_id for d in dialogues for u in d.utterances])

    @property
    def n(self) -> int:
        return int(self.gold.shape[0])


@dataclass
class ForwardResult:
    probs: Tensor                       # [N, K]
    total: Tensor
    losses: dict[str, Tensor]
    he: Tensor
    z: list[Tensor] | None = None
    tcp: np.ndarray | None = None       # [3, N]
    omega: list[Tensor] | None = None
    psi: Tensor | None = None
    aligned: list[Tensor] | None = None
    features: ddm.DisentangledFeatures | None = None
    extras: dict = field(default_factory=dict)

    def loss_values(self) -> dict[str, float]:
        return {k: float(v.data) for k, v in self.losses.items()}


def emotion_loss(probs: Tensor, gold) -> Tensor:
    gold = np.asarray(gold, dtype=int)
    return T.mul(T.sum(T.log(probs[np.arange(gold.shape[0]), gold], eps=EPS_LOG)), -1.0)


def total_loss(losses: dict[str, Tensor], alpha) -> Tensor:
    """alpha1 * L_cl + alpha2 * L_con + alpha3 * L_sim + L_emo."""
    a1, a2, a3 = alpha
    out = losses["emo"]
    for name, w in (("cl_m", a1), ("cl_u", a1), ("con", a2), ("sim", a3)):
        if name in losses:
            out = T.add(out, T.mul(losses[name], w))
    return out


def predict_distribution(he: Tensor, head: MlpParams) -> Tensor:
    return T.softmax(head(he), axis=-1)


def _masked_softmax_rows(scores: Tensor, mask: np.ndarray) -> Tensor:
    return T.softmax(T.where(mask, scores, -1e30), axis=-1)


class DFERCNetwork:
    def __init__(self, raw_dims, K: int, cfg: ModelConfig, variant: str | Variant = "full",
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.raw_dims = tuple(int(d) for d in raw_dims)
        self.K = int(K)
        self.cfg = cfg
        self.variant = variant if isinstance(variant, Variant) else variant_spec(variant)
        v = self.variant
        hidden, depth = cfg.mlp_hidden, cfg.mlp_depth
        self.ddm = ddm.DdmHeads.init(rng, self.raw_dims, cfg.ddm, hidden, depth) if v.projections else None
        p = cfg.ddm.proj_dim
        cat_dims = [d + 2 * p for d in self.raw_dims] if v.projections else list(self.raw_dims)
        self.cfm = cfm.CfmHeads.init(rng, cat_dims, K, cfg.cfm, hidden, depth)
        F = cfg.cfm.fusion_dim
        self.crm = crm.CrmHeads.init(rng, cat_dims, F, cfg.crm, hidden, depth)
        self.att_query = uniform_init(rng, F, (F,)) if v.fusion == "attention" else None
        self.classifier = MlpParams.init(rng, F + 2 * cfg.crm.context_hidden, K, hidden, depth)

    # -- parameters -------------------------------------------------------------

    def named_parameters(self):
        if self.ddm is not None:
            yield from self.ddm.named_parameters("ddm")
        yield from self.cfm.named_parameters("cfm")
        yield from self.crm.named_parameters("crm")
        if self.att_query is not None:
            yield "fusion.att_query", self.att_query
        yield from self.classifier.named_parameters("classifier")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing, extra = set(own) - set(state), set(state) - set(own)
            raise KeyError(f"parameter names differ; missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in own.items():
            if p.data.shape != np.shape(state[k]):
                raise DimensionError(f"{k}: shape {np.shape(state[k])} != {p.data.shape}")
            p.data[...] = state[k]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    # -- forward ------------------------------------------------------------------

    def forward(self, batch: Batch, store: crm.PrototypeStore | None = None, alpha=(0.3, 0.8, 0.3),
                train: bool = False, dropout: float = 0.0, rng: np.random.Generator | None = None,
                update_store: bool | None = None, tcp: np.ndarray | None = None) -> ForwardResult:
        """One pass over a batch. ``tcp`` pins the TCP targets (gradient checks)."""
        v = self.variant
        mask = v.modality_mask
        update_store = train if update_store is None else update_store
        for m, (x, d) in enumerate(zip(batch.raw, self.raw_dims)):
            if x.shape[1] != d:
                raise DimensionError(f"{MODALITIES[m]} features have dim {x.shape[1]}, network expects {d}")

        def gate(m, t):
            return t if mask[m] else T.mul(t, 0.0)

        raw = [Tensor(x * mask[m]) for m, x in enumerate(batch.raw)]
        raw = [T.dropout(x, dropout, rng, train) for x in raw]
        losses: dict[str, Tensor] = {}

        if self.ddm is not None:
            feats = ddm.project_dual(raw, self.ddm)
            feats.modality = [gate(m, t) for m, t in enumerate(feats.modality)]
            feats.utterance = [gate(m, t) for m, t in enumerate(feats.utterance)]
            lm, lu = ddm.contrastive_losses(feats, self.cfg.ddm, batch.lengths)
            if v.cl_modality:
                losses["cl_m"] = lm
            if v.cl_utterance:
                losses["cl_u"] = lu
            cat = [gate(m, t) for m, t in enumerate(feats.fused_input)]
        else:
            feats = None
            cat = raw

        # contribution-aware fusion
        adapted = [gate(m, t) for m, t in enumerate(cfm.adapt(cat, self.cfm))]
        z = omega = None
        extras = {}
        if v.fusion == "cfm":
            z = cfm.teacher_distributions(cat, self.cfm)
            tcp = cfm.tcp_targets(z, batch.gold) if tcp is None else tcp
            omega = [gate(m, w) for m, w in enumerate(cfm.contribution_weights(cat, self.cfm))]
            terms = cfm.cfm_loss_terms(z, tcp, omega, batch.gold, mask)
            extras["p"] = T.add(T.add(terms[0][0], terms[1][0]), terms[2][0])
            extras["q"] = T.add(T.add(terms[0][1], terms[1][1]), terms[2][1])
            losses["con"] = T.add(extras["p"], extras["q"])
            hf = cfm.fuse(adapted, omega)
        elif v.fusion == "uniform":
            tcp = None
            hf = cfm.fuse(adapted, [mask[m] / 3.0 for m in range(3)])
        else:
            tcp = None
            hf = cfm.attention_fuse(adapted, self.att_query)

        # context refusion
        aligned = [gate(m, t) for m, t in enumerate(crm.align_project(cat, self.crm.align))]
        if store is not None:
            if update_store:
                crm.update_prototypes(store, aligned, batch.gold, mask)
            losses["sim"] = crm.prototype_margin_loss(store, aligned, batch.gold, self.cfg.crm.beta,
                                                      batch.lengths, mask)
        psi = crm.modality_consistency(aligned, self.cfg.crm.clamp_psi)
        hc = crm.context_encode(hf, self.crm.context, batch.lengths)
        if v.context == "attention":
            he = T.concat([hf, self._context_attention(hc, batch.lengths)], axis=1)
        else:
            he = crm.refuse_context(hf, hc, crm.context_gate(psi, v.context))

        probs = predict_distribution(he, self.classifier)
        losses["emo"] = emotion_loss(probs, batch.gold)
        total = total_loss(losses, alpha)
        return ForwardResult(probs, total, losses, he, z, tcp, omega, psi, aligned, feats, extras)

    def _context_attention(self, hc: Tensor, lengths) -> Tensor:
        seg = np.repeat(np.arange(len(lengths)), lengths)
        scores = T.mul(T.matmul(hc, T.transpose(hc)), 1.0 / np.sqrt(hc.shape[1]))
        att = _masked_softmax_rows(scores, seg[:, None] == seg[None, :])
        return T.matmul(att, hc)
