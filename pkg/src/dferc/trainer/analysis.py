"""Post-hoc analyses over a trained model, emitted as CSV tables.

``similarity_quintiles``
    quintile, psi_low, psi_high, psi_mean, count, accuracy, weighted_f1
``weight_by_ce``
    quartile, ce_low, ce_high, count, weight_text, weight_audio, weight_video, accuracy, weighted_f1
``tcp_mse``
    dialogue_id, utt_id, modality, tcp, omega, sq_err
``projections`` (one table per projection level)
    dialogue_id, utt_id, modality, pc1, pc2
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..dataio import MODALITIES
from .loop import Records
from .metrics import compute_metrics

ANALYSES = ("similarity_quintiles", "weight_by_ce", "tcp_mse", "projections")


def quantile_groups(values: np.ndarray, n_groups: int) -> list[np.ndarray]:
    """Indices sorted by value (stable) and split into groups whose sizes differ by at most one."""
    order = np.argsort(values, kind="stable")
    return np.array_split(order, n_groups)


def _group_scores(rec: Records, idx: np.ndarray, K: int) -> tuple[float, float]:
    if idx.size == 0:
        return float("nan"), float("nan")
    m = compute_metrics(rec.gold[idx], rec.pred[idx], K)
    return m.accuracy, m.weighted_f1


def similarity_quintiles(rec: Records, K: int) -> list[dict]:
    rows = []
    for q, idx in enumerate(quantile_groups(rec.psi, 5), start=1):
        acc, wf1 = _group_scores(rec, idx, K)
        vals = rec.psi[idx]
        rows.append({"quintile": q, "psi_low": float(vals.min()) if idx.size else float("nan"),
                     "psi_high": float(vals.max()) if idx.size else float("nan"),
                     "psi_mean": float(vals.mean()) if idx.size else float("nan"),
                     "count": int(idx.size), "accuracy": acc, "weighted_f1": wf1})
    return rows


def weight_by_ce(rec: Records, K: int) -> list[dict]:
    if rec.omega is None:
        raise ValueError("this model variant has no contribution weights")
    ce = rec.cross_entropy
    rows = []
    for q, idx in enumerate(quantile_groups(ce, 4), start=1):
        acc, wf1 = _group_scores(rec, idx, K)
        row = {"quartile": q, "ce_low": float(ce[idx].min()), "ce_high": float(ce[idx].max()),
               "count": int(idx.size)}
        for m, name in enumerate(MODALITIES):
            row[f"weight_{name}"] = float(rec.omega[idx, m].mean())
        row.update(accuracy=acc, weighted_f1=wf1)
        rows.append(row)
    return rows


def tcp_mse(rec: Records) -> list[dict]:
    if rec.omega is None:
        raise ValueError("this model variant has no contribution weights")
    rows = []
    dids = np.repeat(rec.dialogue_ids, rec.lengths)
    for i, uid in enumerate(rec.utt_ids):
        for m, name in enumerate(MODALITIES):
            t, w = float(rec.tcp[i, m]), float(rec.omega[i, m])
            rows.append({"dialogue_id": str(dids[i]), "utt_id": uid, "modality": name,
                         "tcp": t, "omega": w, "sq_err": (t - w) ** 2})
    return rows


def tcp_mse_summary(rec: Records) -> np.ndarray:
    """Mean squared TCP residual per modality."""
    return ((rec.tcp - rec.omega) ** 2).mean(axis=0)


def pca_2d(x: np.ndarray) -> np.ndarray:
    centred = x - x.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    comps = vt[:2]
    # deterministic sign: largest-magnitude loading positive
    signs = np.sign(comps[np.arange(comps.shape[0]), np.abs(comps).argmax(axis=1)])
    comps = comps * np.where(signs == 0, 1.0, signs)[:, None]
    out = centred @ comps.T
    if out.shape[1] < 2:
        out = np.pad(out, ((0, 0), (0, 2 - out.shape[1])))
    return out


def projections(rec: Records) -> dict[str, list[dict]]:
    if rec.modality_proj is None:
        raise ValueError("this model variant has no disentangled projections")
    tables = {}
    dids = np.repeat(rec.dialogue_ids, rec.lengths)
    for level, h in (("modality", rec.modality_proj), ("utterance", rec.utterance_proj)):
        coords = pca_2d(h)
        tables[level] = [{"dialogue_id": str(dids[p // 3]), "utt_id": rec.utt_ids[p // 3],
                          "modality": MODALITIES[p % 3], "pc1": float(coords[p, 0]),
                          "pc2": float(coords[p, 1])} for p in range(h.shape[0])]
    return tables


def ddm_geometry(rec: Records) -> dict[str, float]:
    """Mean within-group minus cross-group cosine of the projections, pairs taken inside dialogues."""
    if rec.modality_proj is None:
        raise ValueError("this model variant has no disentangled projections")
    out = {}
    for level, h in (("modality", rec.modality_proj), ("utterance", rec.utterance_proj)):
        within, cross = [], []
        start = 0
        for n in rec.lengths:
            block = h[3 * start:3 * (start + n)]
            norms = np.linalg.norm(block, axis=1, keepdims=True)
            u = np.divide(block, norms, out=np.zeros_like(block), where=norms >= 1e-12)
            S = u @ u.T
            pos = np.arange(3 * n)
            group = pos % 3 if level == "modality" else pos // 3
            same = group[:, None] == group[None, :]
            off = ~np.eye(3 * n, dtype=bool)
            within.append(S[same & off])
            cross.append(S[~same])
            start += n
        w, c = np.concatenate(within), np.concatenate(cross)
        out[f"{level}_within"] = float(w.mean()) if w.size else float("nan")
        out[f"{level}_cross"] = float(c.mean()) if c.size else float("nan")
        out[f"{level}_gap"] = out[f"{level}_within"] - out[f"{level}_cross"]
    return out


def quintile_accuracy(rec: Records, K: int) -> np.ndarray:
    return np.array([r["accuracy"] for r in similarity_quintiles(rec, K)])


def analyze(rec: Records, K: int, which: str) -> dict[str, list[dict]]:
    """Return ``{table_name: rows}`` for one analysis."""
    if which == "similarity_quintiles":
        return {which: similarity_quintiles(rec, K)}
    if which == "weight_by_ce":
        return {which: weight_by_ce(rec, K)}
    if which == "tcp_mse":
        return {which: tcp_mse(rec)}
    if which == "projections":
        return {f"projections_{k}": v for k, v in projections(rec).items()}
    raise ValueError(f"unknown analysis {which!r}; choose from {ANALYSES}")


def write_csv(rows: list[dict], path) -> None:
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
