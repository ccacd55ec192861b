"""Grayscale images as point sets, and the IDX file format."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from deplm.pointset import PointSet

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


def image_coords(images: np.ndarray) -> np.ndarray:
    """``(M, H, W)`` uint8 images -> ``(M, H*W, 3)`` point coordinates.

    ``x`` is the column and ``y`` the row, each scaled to ``[-0.5, 0.5]`` by
    ``i / (dim - 1) - 0.5``; gray levels 0..255 map linearly onto ``[-1, 1]``.
    """
    images = np.asarray(images)
    if images.ndim == 2:
        images = images[None]
    M, H, W = images.shape
    if H < 1 or W < 1:
        raise ValueError("empty image")
    ys, xs = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    x = xs.reshape(-1) / max(W - 1, 1) - 0.5
    y = ys.reshape(-1) / max(H - 1, 1) - 0.5
    out = np.empty((M, H * W, 3))
    out[:, :, 0] = x
    out[:, :, 1] = y
    out[:, :, 2] = images.reshape(M, -1).astype(np.float64) / 127.5 - 1.0
    return out


def image_to_pointset(image) -> PointSet:
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise ValueError("expected a non-empty H x W image")
    return PointSet(image_coords(image[None])[0])


def pointset_to_image(ps: PointSet, shape=(28, 28)) -> np.ndarray:
    """Inverse of :func:`image_to_pointset`."""
    H, W = shape
    img = np.zeros(shape, dtype=np.uint8)
    cols = np.rint((ps.coords[:, 0] + 0.5) * (W - 1)).astype(int)
    rows = np.rint((ps.coords[:, 1] + 0.5) * (H - 1)).astype(int)
    img[rows, cols] = np.rint((ps.coords[:, 2] + 1.0) * 127.5).astype(np.uint8)
    return img


def _open(path):
    path = Path(path)
    if not path.exists() and path.with_suffix(path.suffix + ".gz").exists():
        path = path.with_suffix(path.suffix + ".gz")
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Read an IDX images (0x803) or labels (0x801) file, optionally gzipped."""
    with _open(path) as fh:
        data = fh.read()
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == IDX_IMAGES:
        n, rows, cols = struct.unpack_from(">III", data, 4)
        arr = np.frombuffer(data, dtype=np.uint8, count=n * rows * cols, offset=16)
        return arr.reshape(n, rows, cols).copy()
    if magic == IDX_LABELS:
        (n,) = struct.unpack_from(">I", data, 4)
        return np.frombuffer(data, dtype=np.uint8, count=n, offset=8).copy()
    raise ValueError(f"{path}: unknown IDX magic {magic:#010x}")


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.uint8)
    if array.ndim == 3:
        header = struct.pack(">IIII", IDX_IMAGES, *array.shape)
    elif array.ndim == 1:
        header = struct.pack(">II", IDX_LABELS, array.shape[0])
    else:
        raise ValueError("IDX writer takes (n, rows, cols) images or (n,) labels")
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


FASHION_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_fashion_mnist(root, split: str):
    """``(images, labels)`` from a directory holding the standard IDX files."""
    root = Path(root)
    img_name, lab_name = FASHION_FILES[split]
    images = read_idx(root / img_name)
    labels = read_idx(root / lab_name).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{root}: {images.shape[0]} images but {labels.shape[0]} labels")
    return images, labels
