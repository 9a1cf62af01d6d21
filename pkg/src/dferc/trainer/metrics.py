from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class ClassReport:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class Metrics:
    accuracy: float
    weighted_f1: float
    per_class: list[ClassReport]
    confusion: list[list[int]]

    @property
    def total(self) -> int:
        return int(np.sum(self.confusion))

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "weighted_f1": self.weighted_f1,
                "per_class": [asdict(c) for c in self.per_class], "confusion": self.confusion}

    @classmethod
    def from_dict(cls, d: dict) -> "Metrics":
        return cls(d["accuracy"], d["weighted_f1"], [ClassReport(**c) for c in d["per_class"]],
                   d["confusion"])


def confusion_matrix(y_true, y_pred, K: int) -> np.ndarray:
    """Rows are gold classes, columns predictions."""
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm


def compute_metrics(y_true, y_pred, K: int) -> Metrics:
    """Accuracy and support-weighted F1; classes with no predictions or no gold get F1 = 0."""
    cm = confusion_matrix(y_true, y_pred, K)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("cannot score an empty prediction set")
    tp = np.diag(cm).astype(float)
    predicted = cm.sum(axis=0).astype(float)
    support = cm.sum(axis=1)
    reports = []
    wf1 = 0.0
    for k in range(K):
        p = tp[k] / predicted[k] if predicted[k] > 0 else 0.0
        r = tp[k] / support[k] if support[k] > 0 else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        reports.append(ClassReport(float(p), float(r), float(f1), int(support[k])))
        wf1 += support[k] / total * f1
    return Metrics(float(tp.sum() / total), float(wf1), reports, cm.tolist())
