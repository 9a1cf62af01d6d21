"""scikit-learn style wrapper around the training harness.

Inputs are dialogues rather than a flat design matrix: ``X`` is a
:class:`~dferc.dataio.Dataset` or a list of :class:`~dferc.dataio.Dialogue`.
Predictions come back flat, one row per utterance in dialogue order, so they
line up with ``Dataset.labels()`` and plug into ``sklearn.metrics``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .cfm import CfmConfig
from .crm import CrmConfig
from .dataio import Dataset, Dialogue, LabelSpace, Manifest, Utterance
from .ddm import DdmConfig
from .trainer import (Checkpoint, ModelConfig, TrainConfig, collect_records,
                      compute_metrics, network_from_checkpoint, predict_proba, train)
from .trainer.loop import iter_forward


def check_dialogues(X, labels: LabelSpace | None = None, dims=None) -> Dataset:
    """Coerce ``X`` to a validated :class:`Dataset`, checking dims against a fitted model."""
    if isinstance(X, Dataset):
        ds = X
    else:
        dialogues = list(X)
        if not dialogues or not all(isinstance(d, Dialogue) for d in dialogues):
            raise ValueError("X must be a Dataset or a non-empty sequence of Dialogue objects")
        first = dialogues[0].utterances[0]
        inferred = (first.text.shape[0], first.audio.shape[0], first.video.shape[0])
        if labels is None:
            K = 1 + max(int(u.label) for d in dialogues for u in d.utterances)
            labels = LabelSpace.default(max(K, 2))
        ds = Dataset(Manifest(labels, *(dims or inferred)), dialogues)
    if dims is not None and tuple(ds.manifest.dims) != tuple(dims):
        raise ValueError(f"X has feature dims {ds.manifest.dims}, model was fitted on {tuple(dims)}")
    if labels is not None and ds.label_space.K != labels.K:
        raise ValueError(f"X has {ds.label_space.K} classes, model was fitted on {labels.K}")
    return ds


def _with_labels(ds: Dataset, y) -> Dataset:
    y = np.asarray(y, dtype=int)
    if y.shape != (ds.n_utterances,):
        raise ValueError(f"y has shape {y.shape}, X holds {ds.n_utterances} utterances")
    it = iter(y)
    dialogues = [Dialogue(d.dialogue_id, [Utterance(u.utt_id, int(next(it)), u.text, u.audio, u.video,
                                                    u.speaker) for u in d.utterances])
                 for d in ds.dialogues]
    return Dataset(ds.manifest, dialogues)


class DFERCClassifier(ClassifierMixin, BaseEstimator):
    """Per-utterance emotion classifier over text/audio/video feature vectors.

    Hyperparameter defaults follow the reference widths (300-d projections,
    600-d fusion, 500-d alignment, 300-d context) and the MELD loss weights.
    """

    def __init__(self, alpha1=0.3, alpha2=0.8, alpha3=0.3, proj_dim=300, tau_m=0.5, tau_u=0.3,
                 anchors="all", fusion_dim=600, align_dim=500, beta=0.1, context_hidden=300,
                 clamp_psi=False, mlp_hidden=None, mlp_depth=1, lr=1e-3, weight_decay=0.01,
                 warmup_steps=100, max_grad_norm=1.0, epochs=10, batch_size=8, dropout=0.2,
                 variant="full", random_state=0):
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.alpha3 = alpha3
        self.proj_dim = proj_dim
        self.tau_m = tau_m
        self.tau_u = tau_u
        self.anchors = anchors
        self.fusion_dim = fusion_dim
        self.align_dim = align_dim
        self.beta = beta
        self.context_hidden = context_hidden
        self.clamp_psi = clamp_psi
        self.mlp_hidden = mlp_hidden
        self.mlp_depth = mlp_depth
        self.lr = lr
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.max_grad_norm = max_grad_norm
        self.epochs = epochs
        self.batch_size = batch_size
        self.dropout = dropout
        self.variant = variant
        self.random_state = random_state

    def _configs(self) -> tuple[ModelConfig, TrainConfig]:
        model = ModelConfig(DdmConfig(self.proj_dim, self.tau_m, self.tau_u, self.anchors),
                            CfmConfig(self.fusion_dim),
                            CrmConfig(self.align_dim, self.beta, self.context_hidden, self.clamp_psi),
                            self.mlp_hidden, self.mlp_depth)
        tc = TrainConfig((self.alpha1, self.alpha2, self.alpha3), self.lr, self.weight_decay,
                         self.warmup_steps, self.max_grad_norm, self.epochs, self.batch_size,
                         self.dropout, int(self.random_state), self.variant)
        return model, tc

    def fit(self, X, y=None, eval_set=None):
        """Train on dialogues ``X``; ``eval_set`` (dialogues) drives best-epoch selection."""
        ds = check_dialogues(X)
        if y is not None:
            ds = _with_labels(ds, y)
        valid = None
        if eval_set is not None:
            valid = check_dialogues(eval_set, ds.label_space, ds.manifest.dims)
        model_cfg, train_cfg = self._configs()
        result = train(train_cfg, model_cfg, ds, valid)
        self.checkpoint_ = result.checkpoint
        self.network_ = result.network
        self.history_ = result.history
        self.label_space_ = ds.label_space
        self.classes_ = np.arange(ds.label_space.K)
        self.feature_dims_ = tuple(ds.manifest.dims)
        return self

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "DFERCClassifier":
        m, t = ckpt.model_config, ckpt.train_config
        est = cls(alpha1=t.alpha[0], alpha2=t.alpha[1], alpha3=t.alpha[2], proj_dim=m.ddm.proj_dim,
                  tau_m=m.ddm.tau_m, tau_u=m.ddm.tau_u, anchors=m.ddm.anchors,
                  fusion_dim=m.cfm.fusion_dim, align_dim=m.crm.align_dim, beta=m.crm.beta,
                  context_hidden=m.crm.context_hidden, clamp_psi=m.crm.clamp_psi,
                  mlp_hidden=m.mlp_hidden, mlp_depth=m.mlp_depth, lr=t.lr,
                  weight_decay=t.weight_decay, warmup_steps=t.warmup_steps,
                  max_grad_norm=t.max_grad_norm, epochs=t.epochs, batch_size=t.batch_size,
                  dropout=t.dropout, variant=t.variant, random_state=t.seed)
        est.checkpoint_ = ckpt
        est.network_ = network_from_checkpoint(ckpt)
        est.history_ = []
        est.label_space_ = ckpt.labels
        est.classes_ = np.arange(ckpt.labels.K)
        est.feature_dims_ = tuple(ckpt.raw_dims)
        return est

    def _check(self, X) -> Dataset:
        check_is_fitted(self, "network_")
        return check_dialogues(X, self.label_space_, self.feature_dims_)

    def predict_proba(self, X) -> np.ndarray:
        ds = self._check(X)
        return predict_proba(self.network_, ds.dialogues)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def transform(self, X) -> np.ndarray:
        """Final utterance representations ``[h_f ; gated h_c]``."""
        ds = self._check(X)
        return np.concatenate([f.he.data for _, f in iter_forward(self.network_, ds.dialogues)])

    def score(self, X, y=None, sample_weight=None) -> float:
        """Weighted F1 over utterances (labels from ``X`` unless ``y`` is given)."""
        ds = self._check(X)
        gold = ds.labels() if y is None else np.asarray(y, dtype=int)
        return compute_metrics(gold, self.predict(ds), self.label_space_.K).weighted_f1

    def records(self, X):
        ds = self._check(X)
        return collect_records(self.network_, ds)
