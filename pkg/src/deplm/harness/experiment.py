"""End-to-end runs: ingest, encode (and decode), fit the readout, evaluate, report."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

import deplm
from deplm import streams
from deplm.decoder import Decoder, build_decoder, decode_batch
from deplm.encoder import Encoder, GroupPlan, build_encoder, encode_batch
from deplm.harness.config import ExperimentConfig, dump_config
from deplm.harness.data import Dataset, Split, load_dataset
from deplm.ingest.augment import shift_offsets
from deplm.readout import (
    ReadoutModel,
    accuracy,
    class_distance_summary,
    confusion_matrix,
    feature_distance_matrix,
    miou,
    predict,
    save_model,
    train_readout,
)


def fmt(x) -> str:
    """Shortest text that reads back to the same float."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


@dataclass
class ExperimentReport:
    task: str
    metrics: dict  # name -> value, in emission order
    confusion: np.ndarray
    model: ReadoutModel
    files: list = field(default_factory=list)

    @property
    def primary(self) -> float:
        return self.metrics["instance_miou" if self.task == "segment-shapes" else "accuracy"]


def _chunks(n: int, size: int):
    return [slice(s, min(s + size, n)) for s in range(0, n, size)]


def _pmap(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def encode_representations(coords: np.ndarray, enc: Encoder, ids: np.ndarray, batch_size: int = 32,
                           threads: int = 1, noise_seed: int | None = None, read_counter: int = 0,
                           plan: GroupPlan | None = None) -> np.ndarray:
    """``(M, rep_dim)`` representations; chunks run on ``threads`` workers.

    Every sample draws noise from its own stream, so the result does not
    depend on ``batch_size`` or ``threads``.
    """

    def one(sl):
        p = plan.take(sl) if plan is not None else None
        return encode_batch(coords[sl], enc, sample_ids=ids[sl], noise_seed=noise_seed,
                            read_counter=read_counter, plan=p).representation

    parts = _pmap(one, _chunks(coords.shape[0], batch_size), threads)
    return np.concatenate(parts, axis=0)


def augmented_coords(split: Split, copy: int, fraction: float, seed: int) -> np.ndarray:
    """Training coords shifted by one random offset per sample (copy ``copy``)."""
    out = np.empty_like(split.coords)
    for i, sid in enumerate(split.ids):
        rng = streams.stream(seed, streams.AUGMENT, int(sid), copy)
        out[i] = split.coords[i] + shift_offsets(split.coords[i], fraction, rng)
    return out


def classification_features(cfg: ExperimentConfig, ds: Dataset, enc: Encoder, threads: int = 1,
                            noise_seed: int | None = None, plans=(None, None)):
    bs = cfg.batch_size
    tr = encode_representations(ds.train.coords, enc, ds.train.ids, bs, threads, noise_seed, plan=plans[0])
    ytr = ds.train.labels
    if cfg.data.augment_copies:
        feats, labels = [tr], [ytr]
        for c in range(cfg.data.augment_copies):
            xc = augmented_coords(ds.train, c, cfg.data.augment_fraction, cfg.seed)
            feats.append(encode_representations(xc, enc, ds.train.ids, bs, threads, noise_seed, read_counter=c + 1))
            labels.append(ytr)
        tr, ytr = np.concatenate(feats), np.concatenate(labels)
    te = encode_representations(ds.test.coords, enc, ds.test.ids, bs, threads, noise_seed, plan=plans[1])
    return tr, ytr, te


def point_features(split: Split, enc: Encoder, dec: Decoder, sl, noise_seed=None, plan=None) -> np.ndarray:
    p = plan.take(sl) if plan is not None else None
    trace = encode_batch(split.coords[sl], enc, sample_ids=split.ids[sl], noise_seed=noise_seed, plan=p)
    return decode_batch(trace, dec, split.ids[sl], noise_seed)


def train_point_sample(cfg: ExperimentConfig, split: Split, enc: Encoder, dec: Decoder, threads: int = 1,
                       noise_seed: int | None = None, plan=None):
    """Decoder features of ``points_per_shape`` random points of each training shape."""
    n_pts = split.coords.shape[1]
    keep = min(cfg.train.points_per_shape, n_pts)

    def one(sl):
        F = point_features(split, enc, dec, sl, noise_seed, plan)
        rows, labs = [], []
        for b, sid in enumerate(split.ids[sl]):
            rng = streams.stream(cfg.seed, streams.SAMPLING, 1, int(sid))
            sel = np.sort(rng.choice(n_pts, size=keep, replace=False))
            rows.append(F[b, sel])
            labs.append(split.labels[sl][b, sel])
        return np.concatenate(rows), np.concatenate(labs)

    parts = _pmap(one, _chunks(len(split), cfg.batch_size), threads)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def predict_points(model: ReadoutModel, split: Split, enc: Encoder, dec: Decoder, part_sets: dict,
                   batch_size: int, threads: int = 1, noise_seed: int | None = None, plan=None) -> np.ndarray:
    """Per-point part predictions ``(M, N)``, restricted to each shape's class parts."""

    def one(sl):
        F = point_features(split, enc, dec, sl, noise_seed, plan)
        out = np.empty(F.shape[:2], dtype=np.int64)
        for b, cls in enumerate(split.classes[sl]):
            out[b] = predict(model, F[b], allowed=part_sets[int(cls)])[0]
        return out

    return np.concatenate(_pmap(one, _chunks(len(split), batch_size), threads))


def fit_and_score(cfg: ExperimentConfig, ds: Dataset, enc: Encoder, dec: Decoder | None = None, threads: int = 1,
                  noise_seed: int | None = None, plans=(None, None)):
    """Train the readout and evaluate it on the test split.

    Returns ``(model, metrics, confusion, test_features or None)``.
    """
    tcfg = cfg.train_config()
    K = ds.n_classes
    if cfg.task == "segment-shapes":
        Xtr, ytr = train_point_sample(cfg, ds.train, enc, dec, threads, noise_seed, plans[0])
        model = train_readout(Xtr, ytr, tcfg, K)
        preds = predict_points(model, ds.test, enc, dec, ds.part_sets, cfg.batch_size, threads, noise_seed, plans[1])
        m = miou(list(preds), list(ds.test.labels), [int(c) for c in ds.test.classes], ds.part_sets)
        metrics = {"instance_miou": m["instance"], "class_miou_mean": m["class_mean"]}
        for c, v in sorted(m["class"].items()):
            metrics[f"class_miou[{ds.class_names[c]}]"] = v
        metrics["point_accuracy"] = accuracy(preds.reshape(-1), ds.test.labels.reshape(-1))
        metrics["train_point_accuracy"] = accuracy(predict(model, Xtr)[0], ytr)
        cm = confusion_matrix(preds.reshape(-1), ds.test.labels.reshape(-1), K)
        return model, metrics, cm, None
    Xtr, ytr, Xte = classification_features(cfg, ds, enc, threads, noise_seed, plans)
    model = train_readout(Xtr, ytr, tcfg, K)
    preds = predict(model, Xte)[0]
    metrics = {
        "accuracy": accuracy(preds, ds.test.labels),
        "train_accuracy": accuracy(predict(model, Xtr)[0], ytr),
    }
    return model, metrics, confusion_matrix(preds, ds.test.labels, K), Xte


def build_models(cfg: ExperimentConfig, **enc_overrides):
    enc = build_encoder(cfg.encoder_config(**enc_overrides))
    dec = build_decoder(cfg.decoder_config(), enc) if cfg.task == "segment-shapes" else None
    return enc, dec


def provenance(cfg: ExperimentConfig, ds: Dataset, enc: Encoder, extra: dict | None = None) -> str:
    info = {
        "package_version": deplm.__version__,
        "n_train": len(ds.train),
        "n_test": len(ds.test),
        "n_classes": ds.n_classes,
        "class_names": list(ds.class_names),
        "representation_dim": enc.cfg.rep_dim,
        "electroform_seed": enc.cfg.seed,
        "streams": "SeedSequence(seed, spawn_key=purpose key) per crossbar, sample and window",
    }
    info.update(extra or {})
    return dump_config(cfg) + yaml.safe_dump({"provenance": info}, sort_keys=False)


def write_confusion(path, cm: np.ndarray) -> None:
    K = cm.shape[0]
    write_csv(path, ["true\\pred"] + [str(j) for j in range(K)], [[str(i)] + list(cm[i]) for i in range(K)])


def write_distances(path, cfg: ExperimentConfig, feats: np.ndarray, labels: np.ndarray) -> dict:
    n = min(cfg.report.distance_limit, feats.shape[0])
    D, order = feature_distance_matrix(feats[:n], labels[:n])
    lab = labels[:n][order]
    rows = [[int(order[i]), int(lab[i])] + list(D[i]) for i in range(n)]
    write_csv(path, ["sample", "label"] + [f"d{j}" for j in range(n)], rows)
    intra, inter = class_distance_summary(D, lab)
    return {"mean_intra_class_distance": intra, "mean_inter_class_distance": inter}


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1, ds: Dataset | None = None,
                   tag: str = "") -> ExperimentReport:
    """Ingest, encode, train, evaluate; write metrics, confusion, model and provenance."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = ds or load_dataset(cfg)
    enc, dec = build_models(cfg)
    model, metrics, cm, Xte = fit_and_score(cfg, ds, enc, dec, threads)
    metrics = {**metrics, "n_train": len(ds.train), "n_test": len(ds.test)}
    files = []
    if cfg.report.distance_matrix and Xte is not None:
        dpath = out / f"{tag}distances.csv"
        metrics.update(write_distances(dpath, cfg, Xte, ds.test.labels))
        files.append(dpath)
    paths = {k: out / f"{tag}{k}" for k in ("metrics.csv", "confusion.csv", "model.txt", "provenance.yaml")}
    write_csv(paths["metrics.csv"], ["metric", "value"], [[k, v] for k, v in metrics.items()])
    write_confusion(paths["confusion.csv"], cm)
    save_model(paths["model.txt"], model)
    paths["provenance.yaml"].write_text(provenance(cfg, ds, enc), encoding="utf-8", newline="\n")
    files += list(paths.values())
    return ExperimentReport(cfg.task, metrics, cm, model, files)


def evaluate_model(cfg: ExperimentConfig, model: ReadoutModel, out_dir, threads: int = 1,
                   ds: Dataset | None = None) -> dict:
    """Score a saved readout on the test split with the configured encoder."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = ds or load_dataset(cfg)
    enc, dec = build_models(cfg)
    K = ds.n_classes
    if cfg.task == "segment-shapes":
        preds = predict_points(model, ds.test, enc, dec, ds.part_sets, cfg.batch_size, threads)
        m = miou(list(preds), list(ds.test.labels), [int(c) for c in ds.test.classes], ds.part_sets)
        metrics = {"instance_miou": m["instance"], "class_miou_mean": m["class_mean"],
                   "point_accuracy": accuracy(preds.reshape(-1), ds.test.labels.reshape(-1))}
        cm = confusion_matrix(preds.reshape(-1), ds.test.labels.reshape(-1), K)
    else:
        Xte = encode_representations(ds.test.coords, enc, ds.test.ids, cfg.batch_size, threads)
        preds = predict(model, Xte)[0]
        metrics = {"accuracy": accuracy(preds, ds.test.labels)}
        cm = confusion_matrix(preds, ds.test.labels, K)
    metrics["n_test"] = len(ds.test)
    write_csv(out / "eval_metrics.csv", ["metric", "value"], [[k, v] for k, v in metrics.items()])
    write_confusion(out / "eval_confusion.csv", cm)
    return metrics
