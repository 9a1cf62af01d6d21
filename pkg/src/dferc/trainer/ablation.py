"""Multi-seed ablation runs over mechanism and modality variants."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Iterable, Mapping

import numpy as np

from ..dataio import Dataset
from .config import ModelConfig, TrainConfig, variant_spec
from .loop import evaluate_network, train

Splits = Mapping[str, Dataset]


def run_variant(cfg: TrainConfig, model_cfg: ModelConfig, splits: Splits, variant: str, seed: int,
                eval_split: str = "test") -> dict:
    variant_spec(variant)
    run_cfg = replace(cfg, variant=variant, seed=seed)
    result = train(run_cfg, model_cfg, splits["train"], splits.get("valid"))
    m = evaluate_network(result.network, splits[eval_split])
    return {"variant": variant, "seed": seed, "accuracy": m.accuracy, "weighted_f1": m.weighted_f1,
            "_result": result}


def ablate(cfg: TrainConfig, model_cfg: ModelConfig, data: Splits | Callable[[int], Splits],
           variants: Iterable[str], seeds: Iterable[int], eval_split: str = "test",
           keep_results: bool = False) -> list[dict]:
    """One row per (variant, seed) followed by a mean and a std row per variant.

    ``data`` is either fixed splits or a function from seed to splits, so
    synthetic benchmarks can redraw the data with every seed.
    """
    variants, seeds = list(variants), list(seeds)
    for v in variants:
        variant_spec(v)
    rows = []
    for seed in seeds:
        splits = data(seed) if callable(data) else data
        for v in variants:
            row = run_variant(cfg, model_cfg, splits, v, seed, eval_split)
            if not keep_results:
                row.pop("_result")
            rows.append(row)
    return rows + summary_rows(rows, variants)


def summary_rows(rows: list[dict], variants) -> list[dict]:
    out = []
    for v in variants:
        per_seed = [r for r in rows if r["variant"] == v and r["seed"] not in ("mean", "std")]
        for stat, fn in (("mean", np.mean), ("std", np.std)):
            out.append({"variant": v, "seed": stat,
                        "accuracy": float(fn([r["accuracy"] for r in per_seed])),
                        "weighted_f1": float(fn([r["weighted_f1"] for r in per_seed]))})
    return out


def public_rows(rows: list[dict]) -> list[dict]:
    return [{k: v for k, v in r.items() if not k.startswith("_")} for r in rows]
