"""Turns a config's data section into fixed-size point-set arrays."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from deplm import streams
from deplm.encoder import ConfigError
from deplm.harness.config import FASHION_ENV, ExperimentConfig
from deplm.ingest.events import read_events_csv, read_manifest, stream_to_pointsets
from deplm.ingest.images import image_coords, load_fashion_mnist
from deplm.ingest.synthetic import generate_synthetic
from deplm.pointset import read_pts

FASHION_CLASSES = ("t-shirt", "trouser", "pullover", "dress", "coat", "sandal", "shirt", "sneaker", "bag", "boot")


class DataError(RuntimeError):
    pass


@dataclass
class Split:
    coords: np.ndarray  # (M, N, c)
    labels: np.ndarray  # (M,) classes, or (M, N) part ids for segmentation
    classes: np.ndarray  # (M,) object class per sample
    ids: np.ndarray  # (M,) sample ids keying per-sample rng streams

    def __len__(self):
        return self.coords.shape[0]

    def head(self, n: int) -> "Split":
        if n <= 0 or n >= len(self):
            return self
        return Split(self.coords[:n], self.labels[:n], self.classes[:n], self.ids[:n])


@dataclass
class Dataset:
    train: Split
    test: Split
    class_names: tuple
    part_sets: dict | None = None  # object class -> legal part ids (segmentation)

    @property
    def n_classes(self) -> int:
        if self.part_sets is not None:
            return int(max(max(p) for p in self.part_sets.values())) + 1
        return len(self.class_names)


def _split_point(count: int, test_fraction: float) -> int:
    n_test = int(round(count * test_fraction))
    if not 0 < n_test < count:
        raise DataError(f"test_fraction {test_fraction} leaves an empty split of {count} samples")
    return count - n_test


def _classify_split(coords, labels, offset: int) -> Split:
    labels = np.asarray(labels, dtype=np.int64)
    return Split(np.asarray(coords, dtype=np.float64), labels, labels.copy(),
                 offset + np.arange(len(labels), dtype=np.int64))


def _label_codes(raw_labels):
    """Integer labels and class names from manifest label strings."""
    try:
        codes = [int(v) for v in raw_labels]
        names = tuple(str(i) for i in range(max(codes) + 1))
        return codes, names
    except ValueError:
        names = tuple(sorted(set(raw_labels)))
        return [names.index(v) for v in raw_labels], names


def load_images(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.source == "idx":
        if not d.root or not Path(d.root).is_dir():
            where = f"directory {d.root} does not exist" if d.root else "no directory configured"
            raise DataError(f"Fashion-MNIST IDX files not found ({where}); set data.root or {FASHION_ENV}")
        try:
            xtr, ytr = load_fashion_mnist(d.root, "train")
            xte, yte = load_fashion_mnist(d.root, "test")
        except FileNotFoundError as exc:
            raise DataError(f"Fashion-MNIST file missing: {exc.filename}") from None
        names = FASHION_CLASSES
    else:
        if d.kind != "shape-images":
            raise ConfigError(f"classify-image needs synthetic kind 'shape-images', got {d.kind!r}")
        ds = generate_synthetic("shape-images", d.count, cfg.seed, n_classes=d.n_classes)
        cut = _split_point(d.count, d.test_fraction)
        imgs = np.stack(ds.samples)
        lab = np.asarray(ds.labels)
        xtr, ytr, xte, yte = imgs[:cut], lab[:cut], imgs[cut:], lab[cut:]
        names = ds.class_names
    if d.train_limit:
        xtr, ytr = xtr[: d.train_limit], ytr[: d.train_limit]
    if d.test_limit:
        xte, yte = xte[: d.test_limit], yte[: d.test_limit]
    return Dataset(_classify_split(image_coords(xtr), ytr, 0), _classify_split(image_coords(xte), yte, len(ytr)),
                   tuple(names))


def _windows(streams_in, cfg: ExperimentConfig, first_index: int):
    """Point sets of every window of every ``(events, label)`` stream."""
    dvs = cfg.dvs_config()
    coords, labels = [], []
    for j, (events, label) in enumerate(streams_in):
        si = first_index + j
        rng_for = lambda w, si=si: streams.stream(cfg.seed, streams.SAMPLING, 0, si, w)  # noqa: E731
        for ps, lab in stream_to_pointsets(events, label, dvs, rng_for):
            coords.append(ps.coords)
            labels.append(lab)
    if not coords:
        raise DataError("no event windows survived preprocessing")
    return np.stack(coords), np.asarray(labels, dtype=np.int64)


def _event_manifest(path, root=None):
    entries = read_manifest(path)
    codes, names = _label_codes([lab for _, lab in entries])
    out = []
    for (f, _), code in zip(entries, codes):
        f = Path(root) / f.name if root and not f.exists() else f
        if not f.exists():
            raise DataError(f"event file not found: {f}")
        out.append((f, code))
    return out, names


def load_events(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.source == "events":
        if not d.train_manifest:
            raise DataError("classify-events needs data.train_manifest")
        tr, names = _event_manifest(d.train_manifest, d.root)
        if d.test_manifest:
            te, names_te = _event_manifest(d.test_manifest, d.root)
            if names_te != names and not set(names_te) <= set(names):
                raise DataError("test manifest has classes absent from the training manifest")
        else:
            cut = _split_point(len(tr), d.test_fraction)
            tr, te = tr[:cut], tr[cut:]
        load = lambda items: [(read_events_csv(f), lab) for f, lab in items]  # noqa: E731
        train_streams, test_streams = load(tr), load(te)
    else:
        if d.kind != "moving-blob-gestures":
            raise ConfigError(f"classify-events needs synthetic kind 'moving-blob-gestures', got {d.kind!r}")
        ds = generate_synthetic("moving-blob-gestures", d.count, cfg.seed, n_classes=d.n_classes)
        cut = _split_point(d.count, d.test_fraction)
        pairs = list(zip(ds.samples, ds.labels))
        train_streams, test_streams = pairs[:cut], pairs[cut:]
        names = ds.class_names
    xtr, ytr = _windows(train_streams, cfg, 0)
    xte, yte = _windows(test_streams, cfg, len(train_streams))
    if d.train_limit:
        xtr, ytr = xtr[: d.train_limit], ytr[: d.train_limit]
    if d.test_limit:
        xte, yte = xte[: d.test_limit], yte[: d.test_limit]
    return Dataset(_classify_split(xtr, ytr, 0), _classify_split(xte, yte, len(ytr)), tuple(names))


def _resample(coords, labels, n: int, rng: np.random.Generator):
    """Exactly ``n`` points: a subset without replacement, or all plus repeats."""
    N = coords.shape[0]
    if N >= n:
        idx = np.sort(rng.choice(N, size=n, replace=False))
    else:
        idx = np.sort(np.concatenate([np.arange(N), rng.choice(N, size=n - N, replace=True)]))
    return coords[idx], labels[idx]


def _read_shape_manifest(path):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or len(rows[0]) < 2:
        raise DataError(f"{path}: manifest needs columns file,class")
    return [(path.parent / r[0], r[1].strip()) for r in rows[1:]]


def _shape_split(entries, codes, cfg: ExperimentConfig, offset: int) -> Split:
    n = cfg.data.n_points
    coords, labels = [], []
    for j, (f, _) in enumerate(entries):
        if not f.exists():
            raise DataError(f"point file not found: {f}")
        ps = read_pts(f)
        if ps.labels is None:
            raise DataError(f"{f}: point file carries no part labels")
        if ps.c != 3:
            raise DataError(f"{f}: expected 3-D coordinates, got c={ps.c}")
        rng = streams.stream(cfg.seed, streams.SAMPLING, 2, offset + j)
        c, lab = _resample(ps.coords, ps.labels, n, rng)
        coords.append(c)
        labels.append(lab)
    codes = np.asarray(codes, dtype=np.int64)
    return Split(np.stack(coords), np.stack(labels).astype(np.int64), codes,
                 offset + np.arange(len(entries), dtype=np.int64))


def load_shapes(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.source == "pts":
        if not d.train_manifest:
            raise DataError("segment-shapes needs data.train_manifest")
        tr = _read_shape_manifest(d.train_manifest)
        te = _read_shape_manifest(d.test_manifest) if d.test_manifest else None
        if te is None:
            cut = _split_point(len(tr), d.test_fraction)
            tr, te = tr[:cut], tr[cut:]
        if d.train_limit:
            tr = tr[: d.train_limit]
        if d.test_limit:
            te = te[: d.test_limit]
        codes, names = _label_codes([c for _, c in tr + te])
        train = _shape_split(tr, codes[: len(tr)], cfg, 0)
        test = _shape_split(te, codes[len(tr):], cfg, len(tr))
        part_sets = {}
        for split in (train, test):
            for cls, lab in zip(split.classes, split.labels):
                part_sets.setdefault(int(cls), set()).update(np.unique(lab).tolist())
        part_sets = {c: sorted(p) for c, p in sorted(part_sets.items())}
    else:
        if d.kind != "two-part-shapes":
            raise ConfigError(f"segment-shapes needs synthetic kind 'two-part-shapes', got {d.kind!r}")
        ds = generate_synthetic("two-part-shapes", d.count, cfg.seed, n_points=d.n_points)
        cut = _split_point(d.count, d.test_fraction)
        X = np.stack(ds.samples)
        Y = np.stack(ds.labels)
        C = np.asarray(ds.classes, dtype=np.int64)
        ntr = min(cut, d.train_limit) if d.train_limit else cut
        nte = min(d.count - cut, d.test_limit) if d.test_limit else d.count - cut
        train = Split(X[:ntr], Y[:ntr], C[:ntr], np.arange(ntr, dtype=np.int64))
        test = Split(X[cut:cut + nte], Y[cut:cut + nte], C[cut:cut + nte], ntr + np.arange(nte, dtype=np.int64))
        names = ds.class_names
        part_sets = {0: [0, 1]}
    return Dataset(train, test, tuple(names), part_sets)


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    loader = {"classify-image": load_images, "classify-events": load_events, "segment-shapes": load_shapes}[cfg.task]
    ds = loader(cfg)
    if len(ds.train) == 0 or len(ds.test) == 0:
        raise DataError("empty train or test split")
    if cfg.task != "segment-shapes" and np.unique(ds.train.labels).size < 2:
        raise DataError("training split holds a single class")
    return ds
