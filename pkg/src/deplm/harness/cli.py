"""Command line entry point: ``deplm <command> [options]``."""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from deplm.encoder import ConfigError
from deplm.harness.config import DEFAULT_TASK_PRESETS, PRESETS, ExperimentConfig, from_dict, load_config, preset_config
from deplm.harness.data import DataError, load_dataset
from deplm.harness.experiment import evaluate_model, run_experiment, write_csv
from deplm.harness.opcount import count_training_ops, estimate_energy
from deplm.harness.sweep import SWEEP_HEADER, sweep_sparsity_noise
from deplm.ingest.events import write_events_csv
from deplm.ingest.images import write_idx
from deplm.ingest.synthetic import generate_synthetic
from deplm.pointset import PointSet, write_pts
from deplm.readout import TrainingError, load_model

ABLATIONS = ("deep", "single-layer", "pool-only")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def resolve_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset_config(args.preset)
    else:
        cfg = from_dict({})
    if args.seed is not None:
        cfg.seed = int(args.seed)
        cfg.validate()
    return cfg


def ablation_config(cfg: ExperimentConfig, variant: str) -> ExperimentConfig:
    """``single-layer``: one map into a global pool; ``pool-only``: sum of raw coordinates."""
    if variant == "deep":
        return cfg
    if cfg.task == "segment-shapes":
        raise ConfigError("ablations apply to classification tasks")
    if variant == "single-layer":
        enc = replace(cfg.encoder, widths=[cfg.encoder.widths[-1]], points=[0], k=[1])
    else:
        enc = replace(cfg.encoder, widths=[], points=[], k=[])
    return replace(cfg, encoder=enc).validate()


def cmd_ingest(args, cfg: ExperimentConfig, out: Path) -> None:
    if args.raw:
        _write_raw(cfg, out)
        return
    ds = load_dataset(cfg)
    for name, split in (("train", ds.train), ("test", ds.test)):
        d = out / "points" / name
        d.mkdir(parents=True, exist_ok=True)
        n = len(split) if not args.limit else min(args.limit, len(split))
        rows = []
        for i in range(n):
            fname = f"{int(split.ids[i]):06d}.pts"
            if cfg.task == "segment-shapes":
                write_pts(d / fname, PointSet(split.coords[i], labels=split.labels[i]))
                rows.append([fname, ds.class_names[int(split.classes[i])]])
            else:
                write_pts(d / fname, PointSet(split.coords[i]))
                rows.append([fname, str(int(split.labels[i]))])
        write_csv(d / "manifest.csv", ["file", "label"], rows)
        _log(f"wrote {n} {name} point sets to {d}")


def _write_raw(cfg: ExperimentConfig, out: Path) -> None:
    """Synthetic data in the native input formats (IDX, events CSV, labeled points)."""
    d = cfg.data
    if d.source != "synthetic":
        raise ConfigError("--raw exports synthetic data only")
    ds = generate_synthetic(d.kind, d.count, cfg.seed, n_points=d.n_points, n_classes=d.n_classes)
    out.mkdir(parents=True, exist_ok=True)
    if d.kind == "shape-images":
        write_idx(out / "images-idx3-ubyte", np.stack(ds.samples))
        write_idx(out / "labels-idx1-ubyte", np.asarray(ds.labels, dtype=np.uint8))
    elif d.kind == "moving-blob-gestures":
        rows = []
        for i, (ev, lab) in enumerate(zip(ds.samples, ds.labels)):
            write_events_csv(out / f"stream{i:05d}.csv", ev)
            rows.append([f"stream{i:05d}.csv", ds.class_names[lab]])
        write_csv(out / "manifest.csv", ["file", "label"], rows)
    else:
        rows = []
        for i, (pts, lab) in enumerate(zip(ds.samples, ds.labels)):
            write_pts(out / f"shape{i:05d}.pts", PointSet(pts, labels=lab))
            rows.append([f"shape{i:05d}.pts", ds.class_names[ds.classes[i]]])
        write_csv(out / "manifest.csv", ["file", "class"], rows)
    _log(f"wrote {d.count} raw {d.kind} samples to {out}")


def _summary(metrics: dict) -> str:
    keys = [k for k in ("accuracy", "instance_miou", "class_miou_mean") if k in metrics]
    return ", ".join(f"{k}={metrics[k]:.4f}" for k in keys)


def cmd_train(args, cfg, out: Path) -> None:
    t0 = time.perf_counter()
    rep = run_experiment(cfg, out, threads=args.threads)
    _log(f"{cfg.task}: {_summary(rep.metrics)} ({time.perf_counter() - t0:.1f}s); results in {out}")


def cmd_eval(args, cfg, out: Path) -> None:
    model = load_model(args.model)
    metrics = evaluate_model(cfg, model, out, threads=args.threads)
    _log(f"{cfg.task}: {_summary(metrics)}; results in {out}")


def cmd_ablate(args, cfg, out: Path) -> None:
    chosen = [v for v, flag in (("pool-only", args.pool_only), ("single-layer", args.single_layer)) if flag]
    variants = chosen or list(ABLATIONS)
    ds = load_dataset(cfg)
    rows = []
    for v in variants:
        rep = run_experiment(ablation_config(cfg, v), out, threads=args.threads, ds=ds, tag=f"{v}_")
        rows.append([v, rep.primary])
        _log(f"{v}: {_summary(rep.metrics)}")
    write_csv(out / "ablation.csv", ["variant", "accuracy"], rows)


def cmd_sweep(args, cfg, out: Path) -> None:
    rows = sweep_sparsity_noise(cfg, out / "sweep.csv", threads=args.threads)
    for r in rows:
        if r[2] == "all":
            _log(f"sparsity {r[0]:g} noise {r[1]:g}: mean {r[3]:.4f} std {r[4]:.4f}")
    _log(f"wrote {out / 'sweep.csv'} ({SWEEP_HEADER})")


def _opcount_targets(args, cfg):
    if args.all_presets:
        return [(p, preset_config(p, seed=cfg.seed)) for p in DEFAULT_TASK_PRESETS]
    return [(cfg.preset or cfg.task, cfg)]


def cmd_opcount(args, cfg, out: Path) -> None:
    rows = []
    for name, c in _opcount_targets(args, cfg):
        b = count_training_ops(c)
        for phase, dep, ref in b.rows():
            rows.append([name, phase, dep, ref, dep / ref if ref else 0.0])
        rows.append([name, "reduction", "", "", b.reduction])
        _log(f"{name}: training ops reduced by {100 * b.reduction:.2f}%, "
             f"backward at {100 * b.deplm_backward / max(b.reference_backward, 1):.3f}% of the reference")
    write_csv(out / "opcount.csv", ["config", "phase", "deplm_ops", "reference_ops", "ratio"], rows)


def cmd_energy(args, cfg, out: Path) -> None:
    consts = {"crossbar": cfg.energy.crossbar, "peripheral": cfg.energy.peripheral, "digital": cfg.energy.digital}
    for name in consts:
        val = getattr(args, name)
        if val is not None:
            consts[name] = val
    rows = []
    for name, c in _opcount_targets(args, cfg):
        for item, ops, k, joules in estimate_energy(count_training_ops(c), consts):
            rows.append([name, item, ops, "" if item == "total" else k, joules])
    write_csv(out / "energy_model.csv", ["config", "item", "ops", "joules_per_op", "joules_model"], rows)
    _log("energy figures are op counts times the given constants (a model, not a measurement)")


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "opcount": cmd_opcount,
    "energy": cmd_energy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset (ignored with --config)")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--out", default="deplm-out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads")

    p = argparse.ArgumentParser(prog="deplm", description="Deep extreme point learning on simulated random RRAM.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("ingest", parents=[common], help="write the configured data as point-set files")
    s.add_argument("--limit", type=int, default=0, help="samples per split (0: all)")
    s.add_argument("--raw", action="store_true", help="export synthetic data in the native input formats")
    sub.add_parser("train", parents=[common], help="encode, fit the readout and evaluate")
    s = sub.add_parser("eval", parents=[common], help="evaluate a saved readout on the test split")
    s.add_argument("--model", required=True, help="readout model file")
    s = sub.add_parser("ablate", parents=[common], help="compare deep, single-layer and pool-only encoders")
    s.add_argument("--pool-only", action="store_true")
    s.add_argument("--single-layer", action="store_true")
    sub.add_parser("sweep", parents=[common], help="sparsity x read-noise grid")
    for name in ("opcount", "energy"):
        s = sub.add_parser(name, parents=[common], help="training op counts" if name == "opcount" else
                           "model-based energy from op counts")
        s.add_argument("--all-presets", action="store_true", help="the three default task configs")
        if name == "energy":
            for const in ("crossbar", "peripheral", "digital"):
                s.add_argument(f"--{const}", type=float, help=f"J per op for the {const} line items")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("deplm: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, out)
    except (ConfigError, DataError, TrainingError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"deplm: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
