"""Command-line entry point: ``dferc <verb> [options]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
Set ``DFERC_LOG`` (DEBUG, INFO, WARNING, ...) for log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .dataio import DatasetError, load_dataset, write_dataset
from .runconfig import SWEEPABLE, ConfigError, RunConfig
from .trainer import Checkpoint, CheckpointError, TrainingError, collect_records, evaluate, train
from .trainer.ablation import ablate, public_rows
from .trainer.analysis import ANALYSES, analyze, write_csv
from .trainer.config import MECHANISM_VARIANTS, MODALITY_VARIANTS

log = logging.getLogger("dferc")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "seeds", None):
        overrides["seeds"] = [int(s) for s in args.seeds.split(",")]
    return cfg.override(**overrides)


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    splits = cfg.splits()
    for name, ds in splits.items():
        write_dataset(ds, out / f"{name}.jsonl")
        print(f"{name}: {len(ds)} dialogues, {ds.n_utterances} utterances -> {out / f'{name}.jsonl'}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    splits = cfg.splits()
    result = train(cfg.train_config(), cfg.model_config(), splits["train"], splits.get("valid"),
                   log_path=out / "train_log.jsonl")
    result.checkpoint.save(out / "checkpoint.json")
    summary = {"best_epoch": result.checkpoint.epoch, "valid": result.checkpoint.best_valid}
    if "test" in splits:
        m = evaluate(result.checkpoint, splits["test"])
        summary["test"] = {"accuracy": m.accuracy, "weighted_f1": m.weighted_f1}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    m = evaluate(ckpt, load_dataset(args.data))
    if args.out:
        Path(args.out).write_text(json.dumps(m.to_dict(), indent=2))
    print(json.dumps({"accuracy": m.accuracy, "weighted_f1": m.weighted_f1}))
    return 0


def _parse_variants(text: str | None) -> list[str]:
    if not text or text == "table2":
        return ["full", *MECHANISM_VARIANTS]
    if text == "table3":
        return ["full", *MODALITY_VARIANTS]
    return [v.strip() for v in text.split(",") if v.strip()]


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    variants = _parse_variants(args.variants)
    rows = public_rows(ablate(cfg.train_config(), cfg.model_config(), cfg.splits, variants, cfg.seeds,
                              eval_split="test"))
    write_csv(rows, out / "ablation.csv")
    for r in rows:
        if r["seed"] == "mean":
            print(f"{r['variant']:>12}  acc {r['accuracy']:.4f}  w-f1 {r['weighted_f1']:.4f}")
    return 0


def cmd_analyze(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    ds = load_dataset(args.data)
    from .trainer import network_from_checkpoint

    rec = collect_records(network_from_checkpoint(ckpt), ds)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    which = ANALYSES if args.which == "all" else [args.which]
    for w in which:
        for name, rows in analyze(rec, ckpt.labels.K, w).items():
            write_csv(rows, out / f"{name}.csv")
            print(f"{name}: {len(rows)} rows -> {out / f'{name}.csv'}")
    return 0


def _sweep_override(cfg: RunConfig, param: str, value: float) -> RunConfig:
    field_type = type(getattr(cfg, param))
    return cfg.override(**{param: field_type(value)})


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.param not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {args.param!r}; choose from {SWEEPABLE}")
    out = _out_dir(args, cfg)
    values = [float(v) for v in args.values.split(",")]
    rows = []
    for value in values:
        run = _sweep_override(cfg, args.param, value)
        scores = [r for r in ablate(run.train_config(), run.model_config(), run.splits, [run.variant],
                                    run.seeds) if r["seed"] not in ("mean", "std")]
        wf1 = np.array([r["weighted_f1"] for r in scores])
        rows.append({args.param: value, "mean_weighted_f1": float(wf1.mean()),
                     "std_weighted_f1": float(wf1.std())})
        print(f"{args.param}={value:g}  w-f1 {wf1.mean():.4f} +/- {wf1.std():.4f}")
    write_csv(rows, out / f"sweep_{args.param}.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dferc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON run configuration")
            sp.add_argument("--seed", type=int, help="root seed override")
        sp.add_argument("--out", help="output directory (default: config out_dir)")

    sp = sub.add_parser("gen-data", help="write synthetic train/valid/test JSONL splits")
    common(sp)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train one model and save the best checkpoint")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score a checkpoint on a dataset file")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", help="write full metrics JSON here")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="multi-seed ablation table")
    common(sp)
    sp.add_argument("--variants", help="comma list, or 'table2' (default) / 'table3'")
    sp.add_argument("--seeds", help="comma list of seeds")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("analyze", help="write analysis CSV tables")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--which", default="all", choices=[*ANALYSES, "all"])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", help="grid sweep of one hyperparameter")
    common(sp)
    sp.add_argument("--param", required=True)
    sp.add_argument("--values", required=True, help="comma list of values")
    sp.add_argument("--seeds", help="comma list of seeds")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DFERC_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, CheckpointError, FileNotFoundError, ValueError, KeyError) as exc:
        where = f" (config: {args.config})" if getattr(args, "config", None) else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return 1
    except (TrainingError, OSError, RuntimeError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
