"""Linear readout, the only trained component, and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from deplm import streams


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "softmax-sgd"  # or "ridge-closed-form"
    lr: float = 0.01
    epochs: int = 50
    batch_size: int = 128
    l2: float = 1e-4
    seed: int = 0
    momentum: float = 0.9
    precondition: bool = True
    standardize: bool = True

    def __post_init__(self):
        if self.mode not in ("softmax-sgd", "ridge-closed-form"):
            raise ValueError(f"unknown readout mode {self.mode!r}")
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("lr, epochs and batch_size must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class ReadoutModel:
    weights: np.ndarray  # (K, d)
    bias: np.ndarray  # (K,)
    mean: np.ndarray  # (d,)
    std: np.ndarray  # (d,)
    history: list = field(default_factory=list)

    def __post_init__(self):
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise TrainingError("readout parameters are not finite")
        if np.any(self.std <= 0):
            raise TrainingError("standardization std must be positive")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def scores(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected (M, {self.dim}) features, got {x.shape}")
        return ((x - self.mean) / self.std) @ self.weights.T + self.bias


def feature_stats(x: np.ndarray, standardize: bool = True):
    d = x.shape[1]
    if not standardize:
        return np.zeros(d), np.ones(d)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[~(std > 1e-12)] = 1.0
    return mean, std


def softmax_loss_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean cross-entropy plus ``l2 * ||W||^2`` and its gradients w.r.t. ``W`` and ``b``."""
    z = X @ W.T + b
    z -= z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    n = X.shape[0]
    rows = np.arange(n)
    loss = -np.mean(np.log(p[rows, y])) + l2 * np.sum(W * W)
    p[rows, y] -= 1.0
    p /= n
    return loss, p.T @ X + 2.0 * l2 * W, p.sum(axis=0)


def whitening(X: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``P`` such that ``X @ P.T`` has near-identity covariance.

    Eigenvalues are floored at ``floor * max`` so null directions stay bounded.
    """
    C = X.T @ X / X.shape[0]
    ev, U = np.linalg.eigh(C)
    ev = np.maximum(ev, 0.0)
    return (U / np.sqrt(ev + floor * max(ev.max(), 1e-300))).T


def _train_sgd(X, y, K, cfg: TrainConfig):
    """Minibatch SGD with momentum and cosine-decayed step size.

    With ``cfg.precondition`` the iterate is ``W = V @ P`` for a fixed
    whitening ``P`` and SGD runs on ``V``. The objective is unchanged; random
    features are strongly collinear and plain SGD barely moves along their
    low-variance directions.
    """
    M, d = X.shape
    P = whitening(X) if cfg.precondition else None
    V = np.zeros((K, d))
    b = np.zeros(K)
    vV = np.zeros_like(V)
    vb = np.zeros_like(b)
    rng = streams.stream(cfg.seed, streams.READOUT)
    steps_per_epoch = -(-M // cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    step = 0
    history = []
    W = V
    for _ in range(cfg.epochs):
        order = rng.permutation(M)
        for s in range(0, M, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            _, gW, gb = softmax_loss_grad(W, b, X[idx], y[idx], cfg.l2)
            gV = gW @ P.T if P is not None else gW
            lr = cfg.lr * 0.5 * (1.0 + np.cos(np.pi * step / total))
            vV = cfg.momentum * vV - lr * gV
            vb = cfg.momentum * vb - lr * gb
            V += vV
            b += vb
            W = V @ P if P is not None else V
            step += 1
        history.append(float(softmax_loss_grad(W, b, X, y, cfg.l2)[0]))
    return W.copy(), b, history


def ridge_solve(X: np.ndarray, Y: np.ndarray, l2: float):
    """Least squares on ``[X, 1]`` with ``l2`` on the weights only.

    Returns ``(W (K, d), b (K,))``.
    """
    M, d = X.shape
    A = np.hstack([X, np.ones((M, 1))])
    reg = np.full(d + 1, l2)
    reg[-1] = 0.0
    G = A.T @ A + np.diag(reg)
    sol = np.linalg.solve(G, A.T @ Y)
    return sol[:d].T.copy(), sol[d].copy()


def train_readout(features, labels, cfg: TrainConfig | None = None, n_classes: int | None = None) -> ReadoutModel:
    cfg = cfg or TrainConfig()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise TrainingError("features must be (M, d) with one label per row")
    if not np.isfinite(X).all():
        raise TrainingError("features contain non-finite values")
    if y.size and y.min() < 0:
        raise TrainingError("labels must be non-negative")
    K = int(n_classes) if n_classes is not None else int(y.max()) + 1
    if K < 2 or np.unique(y).size < 2:
        raise TrainingError("training labels must contain at least two classes")
    if X.shape[0] < K:
        raise TrainingError("fewer samples than classes")
    mean, std = feature_stats(X, cfg.standardize)
    Xs = (X - mean) / std
    if cfg.mode == "ridge-closed-form":
        W, b = ridge_solve(Xs, np.eye(K)[y], cfg.l2)
        history = []
    else:
        W, b, history = _train_sgd(Xs, y, K, cfg)
    return ReadoutModel(weights=W, bias=b, mean=mean, std=std, history=history)


def predict(model: ReadoutModel, features, allowed=None):
    """``(labels, scores)``; argmax ties go to the lowest class index.

    ``allowed`` optionally restricts the candidate classes.
    """
    s = model.scores(features)
    if allowed is not None:
        mask = np.full(s.shape[1], -np.inf)
        mask[np.asarray(list(allowed), dtype=np.int64)] = 0.0
        s = s + mask
    return np.argmax(s, axis=1), s


def accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.size == 0 or preds.shape != labels.shape:
        raise ValueError("accuracy needs equal-length non-empty inputs")
    return float(np.mean(preds == labels))


def confusion_matrix(preds, labels, n_classes: int | None = None, normalize: bool = False) -> np.ndarray:
    """Rows are true classes, columns predictions."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.size == 0 or preds.shape != labels.shape:
        raise ValueError("confusion matrix needs equal-length non-empty inputs")
    K = n_classes or int(max(preds.max(), labels.max())) + 1
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    if not normalize:
        return cm
    tot = cm.sum(axis=1, keepdims=True).astype(np.float64)
    out = np.zeros(cm.shape)
    np.divide(cm, tot, out=out, where=tot > 0)
    return out


def shape_iou(preds, labels, parts) -> float:
    """Mean part IoU for one shape; a part absent from both counts as 1."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    parts = list(parts)
    legal = set(parts)
    unknown = set(np.unique(labels).tolist()) - legal
    if unknown:
        raise ValueError(f"labels contain part ids {sorted(unknown)} outside the class part set")
    ious = []
    for p in parts:
        pp = preds == p
        gp = labels == p
        union = np.sum(pp | gp)
        ious.append(1.0 if union == 0 else np.sum(pp & gp) / union)
    return float(np.mean(ious))


def miou(shape_preds, shape_labels, shape_classes, class_parts) -> dict:
    """Per-class mIoU, their mean, and the instance (per-shape) mIoU."""
    per_class: dict = {}
    all_ious = []
    for pr, gt, cls in zip(shape_preds, shape_labels, shape_classes):
        iou = shape_iou(pr, gt, class_parts[cls])
        per_class.setdefault(cls, []).append(iou)
        all_ious.append(iou)
    class_miou = {c: float(np.mean(v)) for c, v in per_class.items()}
    return {
        "class": class_miou,
        "class_mean": float(np.mean(list(class_miou.values()))),
        "instance": float(np.mean(all_ious)),
    }


def feature_distance_matrix(features, labels):
    """Pairwise Euclidean distances with rows/cols gathered by class.

    Returns ``(D, order)`` where ``order`` maps matrix rows to input rows.
    """
    X = np.asarray(features, dtype=np.float64)
    order = np.argsort(np.asarray(labels), kind="stable")
    Xo = X[order]
    sq = np.sum(Xo * Xo, axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (Xo @ Xo.T)
    np.maximum(D2, 0.0, out=D2)
    D = np.sqrt(D2)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D, order


def class_distance_summary(D: np.ndarray, sorted_labels) -> tuple:
    """Mean intra-class and inter-class distance (diagonal excluded); NaN when no pair exists."""
    lab = np.asarray(sorted_labels)
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(len(lab), dtype=bool)
    intra, inter = D[same & off], D[~same]
    return (float(intra.mean()) if intra.size else float("nan"),
            float(inter.mean()) if inter.size else float("nan"))


def save_model(path, model: ReadoutModel) -> None:
    K, d = model.weights.shape

    def row(v):
        return " ".join(repr(float(x)) for x in v)

    lines = [f"DEPLM-RO 1 {K} {d}", row(model.mean), row(model.std), row(model.bias)]
    lines += [row(w) for w in model.weights]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_model(path) -> ReadoutModel:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln.strip()]
    head = lines[0].split()
    if head[:2] != ["DEPLM-RO", "1"]:
        raise ValueError(f"{path}: not a DEPLM-RO v1 model file")
    K, d = int(head[2]), int(head[3])
    if len(lines) != 4 + K:
        raise ValueError(f"{path}: expected {4 + K} lines, found {len(lines)}")

    def vec(line, n):
        v = np.array(line.split(), dtype=np.float64)
        if v.size != n:
            raise ValueError(f"{path}: row has {v.size} values, expected {n}")
        return v

    mean, std, bias = vec(lines[1], d), vec(lines[2], d), vec(lines[3], K)
    W = np.stack([vec(ln, d) for ln in lines[4:]])
    return ReadoutModel(weights=W, bias=bias, mean=mean, std=std)
