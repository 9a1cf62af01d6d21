"""Training, evaluation and per-utterance inference records."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..crm import PrototypeStore
from ..dataio import Dataset, Dialogue, batch_dialogues
from ..numcore import NonFiniteError
from .checkpoint import Checkpoint
from .config import ModelConfig, TrainConfig
from .metrics import Metrics, compute_metrics
from .model import Batch, DFERCNetwork, ForwardResult
from .optim import AdamW, clip_grad_norm

log = logging.getLogger(__name__)

STREAMS = {"data": 0, "init": 1, "dropout": 2, "shuffle": 3}
EVAL_BATCH = 32


class TrainingError(RuntimeError):
    pass


def stream(seed: int, name: str) -> np.random.SeedSequence:
    """Named, independent random sub-stream of one root seed."""
    return np.random.SeedSequence([int(seed), STREAMS[name]])


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[dict] = field(default_factory=list)
    network: DFERCNetwork | None = None


def build_network(labels_K: int, raw_dims, model_cfg: ModelConfig, train_cfg: TrainConfig) -> DFERCNetwork:
    rng = np.random.default_rng(stream(train_cfg.seed, "init"))
    return DFERCNetwork(raw_dims, labels_K, model_cfg, train_cfg.variant, rng)


def network_from_checkpoint(ckpt: Checkpoint) -> DFERCNetwork:
    net = build_network(ckpt.labels.K, ckpt.raw_dims, ckpt.model_config, ckpt.train_config)
    net.load_state_dict(ckpt.params)
    return net


def train(cfg: TrainConfig, model_cfg: ModelConfig, train_ds: Dataset, valid_ds: Dataset | None = None,
          log_path=None, on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Optimise the joint objective; keeps the epoch with the best validation weighted F1."""
    if len(train_ds) == 0:
        raise ValueError("training split is empty")
    if valid_ds is not None:
        _check_compatible(train_ds, valid_ds)
    labels = train_ds.label_space
    dims = train_ds.manifest.dims
    net = build_network(labels.K, dims, model_cfg, cfg)
    params = net.parameters()
    store = PrototypeStore.empty(labels.K, model_cfg.crm.align_dim)
    opt = AdamW(params, cfg.lr, weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps)
    dropout_rng = np.random.default_rng(stream(cfg.seed, "dropout"))
    shuffle_seed = int(stream(cfg.seed, "shuffle").generate_state(1)[0])

    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    history: list[dict] = []
    best = None
    step = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            sums: dict[str, float] = {}
            n_utts = 0
            for dialogues in batch_dialogues(train_ds, cfg.batch_size, seed=shuffle_seed, epoch=epoch):
                batch = Batch.from_dialogues(dialogues)
                step += 1
                try:
                    fwd = net.forward(batch, store, cfg.alpha, train=True, dropout=cfg.dropout, rng=dropout_rng)
                except NonFiniteError as exc:
                    raise TrainingError(f"non-finite value at epoch {epoch} step {step}: {exc}") from exc
                values = fwd.loss_values()
                values["total"] = float(fwd.total.data)
                if not all(np.isfinite(v) for v in values.values()):
                    raise TrainingError(f"non-finite loss at epoch {epoch} step {step}: {values}")
                net.zero_grad()
                fwd.total.backward()
                clip_grad_norm(params, cfg.max_grad_norm)
                opt.step()
                for k, v in values.items():
                    sums[k] = sums.get(k, 0.0) + v
                n_utts += batch.n
            record = {"epoch": epoch, "step": step,
                      "train_loss": {k: v / n_utts for k, v in sums.items()}}
            if valid_ds is not None:
                m = evaluate_network(net, valid_ds)
                record["valid"] = {"accuracy": m.accuracy, "weighted_f1": m.weighted_f1}
                if best is None or m.weighted_f1 > best[0]:
                    best = (m.weighted_f1, epoch, net.state_dict(), store.copy(), record["valid"])
            history.append(record)
            log.info("epoch %d loss %.4f %s", epoch, record["train_loss"]["total"], record.get("valid", ""))
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
            if on_epoch:
                on_epoch(record)
        if best is None:
            best = (None, cfg.epochs, net.state_dict(), store.copy(), None)
        else:
            net.load_state_dict(best[2])
        ckpt = Checkpoint(labels, tuple(dims), model_cfg, cfg, best[2], best[3],
                          {"dropout": dropout_rng.bit_generator.state}, best[1], step, best[4])
        if log_fh:
            log_fh.write(json.dumps({"event": "final", "best_epoch": best[1], "valid": best[4]}) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(ckpt, history, net)


def _check_compatible(a: Dataset, b: Dataset) -> None:
    if a.label_space != b.label_space:
        raise ValueError("label spaces differ between splits")
    if a.manifest.dims != b.manifest.dims:
        raise ValueError(f"feature dims differ between splits: {a.manifest.dims} vs {b.manifest.dims}")


def iter_forward(net: DFERCNetwork, dialogues: Sequence[Dialogue], batch_size: int = EVAL_BATCH,
                 store: PrototypeStore | None = None, alpha=(0.3, 0.8, 0.3)):
    """Inference-mode forward passes over dialogues in file order."""
    for dlg in batch_dialogues(list(dialogues), batch_size, seed=None):
        batch = Batch.from_dialogues(dlg)
        yield batch, net.forward(batch, store, alpha, train=False, update_store=False)


def predict_proba(net: DFERCNetwork, dialogues: Sequence[Dialogue]) -> np.ndarray:
    return np.concatenate([f.probs.data for _, f in iter_forward(net, dialogues)])


def evaluate_network(net: DFERCNetwork, ds: Dataset) -> Metrics:
    if ds.label_space.K != net.K:
        raise ValueError(f"label space has {ds.label_space.K} classes, model has {net.K}")
    pred = predict_proba(net, ds.dialogues).argmax(axis=1)
    return compute_metrics(ds.labels(), pred, net.K)


def evaluate(ckpt: Checkpoint, ds: Dataset) -> Metrics:
    if ds.label_space != ckpt.labels:
        raise ValueError("dataset label space does not match the checkpoint")
    return evaluate_network(network_from_checkpoint(ckpt), ds)


@dataclass
class Records:
    """Per-utterance inference outputs over a split, in file order."""

    dialogue_ids: list[str]
    utt_ids: list[str]
    lengths: list[int]
    gold: np.ndarray
    probs: np.ndarray
    psi: np.ndarray
    omega: np.ndarray | None      # [N, 3]
    tcp: np.ndarray | None        # [N, 3]
    modality_proj: np.ndarray | None   # [3N, p] interleaved
    utterance_proj: np.ndarray | None  # [3N, p] interleaved

    @property
    def pred(self) -> np.ndarray:
        return self.probs.argmax(axis=1)

    @property
    def cross_entropy(self) -> np.ndarray:
        return -np.log(np.maximum(self.probs[np.arange(self.gold.shape[0]), self.gold], 1e-12))


def collect_records(net: DFERCNetwork, ds: Dataset) -> Records:
    parts: dict[str, list] = {k: [] for k in ("did", "uid", "len", "gold", "probs", "psi", "omega",
                                              "tcp", "hm", "hu")}
    for batch, f in iter_forward(net, ds.dialogues):
        parts["did"] += batch.dialogue_ids
        parts["uid"] += batch.utt_ids
        parts["len"] += batch.lengths
        parts["gold"].append(batch.gold)
        parts["probs"].append(f.probs.data)
        parts["psi"].append(f.psi.data)
        if f.omega is not None:
            parts["omega"].append(np.stack([w.data for w in f.omega], axis=1))
            parts["tcp"].append(f.tcp.T)
        if f.features is not None:
            parts["hm"].append(_interleave_np(f.features.modality))
            parts["hu"].append(_interleave_np(f.features.utterance))

    def cat(k):
        return np.concatenate(parts[k]) if parts[k] else None

    return Records(parts["did"], parts["uid"], parts["len"], cat("gold"), cat("probs"), cat("psi"),
                   cat("omega"), cat("tcp"), cat("hm"), cat("hu"))


def _interleave_np(per_modality) -> np.ndarray:
    N, d = per_modality[0].shape
    return np.concatenate([t.data for t in per_modality], axis=1).reshape(3 * N, d)


def forward_batch(net: DFERCNetwork, dialogues, store=None, alpha=(0.3, 0.8, 0.3)) -> ForwardResult:
    return net.forward(Batch.from_dialogues(dialogues), store, alpha)


def save_history(history: list[dict], path) -> None:
    Path(path).write_text("".join(json.dumps(r) + "\n" for r in history))
