"""Sparsity x read-noise robustness grid."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from deplm import streams
from deplm.encoder import plan_groups
from deplm.harness.config import ExperimentConfig
from deplm.harness.data import Dataset, load_dataset
from deplm.harness.experiment import _pmap, build_models, fit_and_score, write_csv

SWEEP_HEADER = ["sparsity", "noise_level", "run", "metric", "std", "n"]


def electroform_seed(cfg: ExperimentConfig, run: int) -> int:
    if cfg.sweep.fixed_electroform:
        return cfg.seed
    return streams.derive_seed(cfg.seed, streams.SWEEP, 0, run)


def noise_seed(cfg: ExperimentConfig, si: int, ni: int, run: int) -> int:
    return streams.derive_seed(cfg.seed, streams.SWEEP, 1, si, ni, run)


def sweep_dataset(cfg: ExperimentConfig) -> Dataset:
    """The configured data cut down to the sweep's train/test sizes."""
    sw = cfg.sweep
    ds = load_dataset(cfg)
    return Dataset(ds.train.head(sw.train_limit), ds.test.head(sw.test_limit), ds.class_names, ds.part_sets)


def run_cell(cfg: ExperimentConfig, ds: Dataset, si: int, ni: int, run: int, plans=(None, None)) -> float:
    """Primary metric of one run; read noise perturbs training and test encodes alike."""
    s = cfg.sweep.sparsities[si]
    lvl = cfg.sweep.noise_levels[ni]
    enc, dec = build_models(cfg, sparsity=s, noise_level=lvl, seed=electroform_seed(cfg, run))
    _, metrics, _, _ = fit_and_score(cfg, ds, enc, dec, threads=1, noise_seed=noise_seed(cfg, si, ni, run),
                                     plans=plans)
    return metrics["instance_miou" if cfg.task == "segment-shapes" else "accuracy"]


def sweep_rows(cfg: ExperimentConfig, results: dict) -> list:
    """Per-run rows, then one aggregate row (``run = all``) per cell."""
    rows = []
    sw = cfg.sweep
    for si, s in enumerate(sw.sparsities):
        for ni, lvl in enumerate(sw.noise_levels):
            vals = np.array([results[(si, ni, r)] for r in range(sw.runs)])
            rows += [[float(s), float(lvl), int(r), float(v), "", 1] for r, v in enumerate(vals)]
            rows.append([float(s), float(lvl), "all", float(vals.mean()), float(vals.std()), sw.runs])
    return rows


def sweep_sparsity_noise(cfg: ExperimentConfig, out_path=None, threads: int = 1, ds: Dataset | None = None) -> list:
    """Run every (sparsity, noise, run) cell and return the CSV rows.

    Cells run in parallel; each one owns its electroform and noise streams,
    so the rows do not depend on ``threads``.
    """
    ds = ds or sweep_dataset(cfg)
    enc_cfg = cfg.encoder_config()
    plans = (plan_groups(ds.train.coords, enc_cfg), plan_groups(ds.test.coords, enc_cfg))
    sw = cfg.sweep
    keys = [(si, ni, r) for si in range(len(sw.sparsities)) for ni in range(len(sw.noise_levels))
            for r in range(sw.runs)]
    vals = _pmap(lambda key: run_cell(cfg, ds, *key, plans=plans), keys, threads)
    rows = sweep_rows(cfg, dict(zip(keys, vals)))
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        write_csv(out_path, SWEEP_HEADER, rows)
    return rows


def read_sweep_csv(path) -> list:
    """Rows as dicts with numeric fields parsed; ``std`` is None on per-run rows."""
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    head = lines[0].split(",")
    out = []
    for ln in lines[1:]:
        r = dict(zip(head, ln.split(",")))
        out.append({
            "sparsity": float(r["sparsity"]),
            "noise_level": float(r["noise_level"]),
            "run": r["run"] if r["run"] == "all" else int(r["run"]),
            "metric": float(r["metric"]),
            "std": float(r["std"]) if r["std"] else None,
            "n": int(r["n"]),
        })
    return out
