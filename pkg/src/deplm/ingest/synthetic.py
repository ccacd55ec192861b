"""Desk-scale synthetic stand-ins for the three modalities.

* ``two-part-shapes``: sphere + attached cylinder point clouds, per-point part
  labels 0 (sphere) and 1 (cylinder).
* ``moving-blob-gestures``: event streams of a blob moving in one of six
  ways across a 128 x 128 sensor, with sparse background noise.
* ``shape-images``: 28 x 28 grayscale glyphs in ten classes, for exercising
  the image path without the real image dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deplm import streams
from deplm.ingest.events import make_events

GESTURES = (
    "left-to-right",
    "right-to-left",
    "top-to-bottom",
    "bottom-to-top",
    "clockwise",
    "counter-clockwise",
)

SHAPE_IMAGE_CLASSES = (
    "disk", "ring", "square", "frame", "triangle",
    "h-bars", "v-bars", "diagonal", "cross", "ellipse",
)


@dataclass
class SyntheticDataset:
    kind: str
    samples: list  # point arrays, event streams or images
    labels: list  # class per sample (or per-point part labels for shapes)
    classes: list  # object class per sample
    class_names: tuple


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _orthobasis(u):
    a = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = _unit(np.cross(u, a))
    return e1, np.cross(u, e1)


def two_part_shape(rng: np.random.Generator, n_points: int = 1024):
    """A sphere with a cylinder sticking out of it, normalized to the unit ball."""
    r = rng.uniform(0.35, 0.5)
    u = _unit(rng.normal(size=3))
    length = rng.uniform(0.6, 1.0)
    rc = rng.uniform(0.08, 0.15)
    area_s = 4 * np.pi * r * r
    area_c = 2 * np.pi * rc * length
    n_s = int(np.clip(round(n_points * area_s / (area_s + area_c)), 0.3 * n_points, 0.7 * n_points))
    n_c = n_points - n_s
    sphere = r * _unit(rng.normal(size=(n_s, 3)))
    e1, e2 = _orthobasis(u)
    phi = rng.uniform(0, 2 * np.pi, n_c)
    h = rng.uniform(0, length, n_c) + 0.9 * r
    cyl = h[:, None] * u + rc * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
    pts = np.vstack([sphere, cyl])
    labels = np.concatenate([np.zeros(n_s, dtype=np.int64), np.ones(n_c, dtype=np.int64)])
    perm = rng.permutation(n_points)
    pts, labels = pts[perm], labels[perm]
    pts = pts - pts.mean(axis=0)
    pts /= np.linalg.norm(pts, axis=1).max()
    return pts, labels


def blob_gesture(rng: np.random.Generator, cls: int, duration: float = 1.0, rate: float = 6000.0,
                 noise_rate: float = 300.0, sensor: int = 128) -> np.ndarray:
    """Event stream of one gesture class, sorted by time."""
    n = rng.poisson(rate * duration)
    t = np.sort(rng.uniform(0.0, duration, n))
    s = t / duration
    mid = sensor / 2.0
    jitter = rng.uniform(-12, 12, size=2)
    span = rng.uniform(0.6, 0.8) * sensor
    name = GESTURES[cls]
    if name in ("left-to-right", "right-to-left"):
        cx = mid - span / 2 + span * (s if name == "left-to-right" else 1 - s)
        cy = np.full(n, mid)
    elif name in ("top-to-bottom", "bottom-to-top"):
        cy = mid - span / 2 + span * (s if name == "top-to-bottom" else 1 - s)
        cx = np.full(n, mid)
    else:
        radius = rng.uniform(28, 40)
        period = rng.uniform(0.8, 1.2)
        phase = rng.uniform(0, 2 * np.pi)
        sign = 1.0 if name == "clockwise" else -1.0
        # image y grows downward, so +angle in (x, y) reads as clockwise
        ang = phase + sign * 2 * np.pi * t / period
        cx = mid + radius * np.cos(ang)
        cy = mid + radius * np.sin(ang)
    sigma = rng.uniform(3.0, 5.0)
    x = cx + jitter[0] + sigma * rng.normal(size=n)
    y = cy + jitter[1] + sigma * rng.normal(size=n)
    m = rng.poisson(noise_rate * duration)
    tn = rng.uniform(0.0, duration, m)
    xn = rng.uniform(0, sensor, m)
    yn = rng.uniform(0, sensor, m)
    t_all = np.concatenate([t, tn])
    x_all = np.clip(np.rint(np.concatenate([x, xn])), 0, sensor - 1).astype(np.int64)
    y_all = np.clip(np.rint(np.concatenate([y, yn])), 0, sensor - 1).astype(np.int64)
    p_all = rng.choice(np.array([-1, 1]), size=t_all.size)
    order = np.argsort(t_all, kind="stable")
    return make_events(t_all[order], x_all[order], y_all[order], p_all[order])


def shape_image(rng: np.random.Generator, cls: int, size: int = 28) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = size / 2 - 0.5 + rng.uniform(-2.5, 2.5, size=2)
    s = rng.uniform(6.0, 10.0)
    dx, dy = xx - c[0], yy - c[1]
    name = SHAPE_IMAGE_CLASSES[cls]
    if name == "disk":
        m = dx**2 + dy**2 <= s**2
    elif name == "ring":
        rr = np.sqrt(dx**2 + dy**2)
        m = (rr <= s) & (rr >= s - 2.5)
    elif name == "square":
        m = (np.abs(dx) <= s * 0.85) & (np.abs(dy) <= s * 0.85)
    elif name == "frame":
        a = np.maximum(np.abs(dx), np.abs(dy))
        m = (a <= s * 0.85) & (a >= s * 0.85 - 2.5)
    elif name == "triangle":
        m = (dy <= s * 0.8) & (dy >= -s * 0.8 + 1.6 * np.abs(dx))
    elif name == "h-bars":
        m = (np.abs(dx) <= s) & (np.abs(dy) <= s) & (np.mod(np.floor((dy + s) / 3.0), 2) == 0)
    elif name == "v-bars":
        m = (np.abs(dx) <= s) & (np.abs(dy) <= s) & (np.mod(np.floor((dx + s) / 3.0), 2) == 0)
    elif name == "diagonal":
        m = (np.abs(dx - dy) <= 2.0) & (np.abs(dx) <= s)
    elif name == "cross":
        m = ((np.abs(dx) <= 1.8) | (np.abs(dy) <= 1.8)) & (np.abs(dx) <= s) & (np.abs(dy) <= s)
    else:
        m = (dx / s) ** 2 + (dy / (0.5 * s)) ** 2 <= 1.0
    level = rng.uniform(140, 255)
    img = m * level + rng.normal(0, 12, size=(size, size))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_synthetic(kind: str, count: int, seed: int = 0, n_points: int = 1024,
                       n_classes: int | None = None) -> SyntheticDataset:
    """Deterministic labeled dataset; sample ``i`` uses its own stream keyed by ``(seed, i)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    samples, labels, classes = [], [], []
    if kind == "two-part-shapes":
        for i in range(count):
            pts, lab = two_part_shape(streams.stream(seed, streams.SYNTHETIC, 0, i), n_points)
            samples.append(pts)
            labels.append(lab)
            classes.append(0)
        return SyntheticDataset(kind, samples, labels, classes, ("sphere-cylinder",))
    if kind == "moving-blob-gestures":
        K = n_classes or len(GESTURES)
        if not 4 <= K <= len(GESTURES):
            raise ValueError(f"gesture class count must be in [4, {len(GESTURES)}]")
        for i in range(count):
            cls = i % K
            samples.append(blob_gesture(streams.stream(seed, streams.SYNTHETIC, 1, i), cls))
            labels.append(cls)
            classes.append(cls)
        return SyntheticDataset(kind, samples, labels, classes, GESTURES[:K])
    if kind == "shape-images":
        K = n_classes or len(SHAPE_IMAGE_CLASSES)
        for i in range(count):
            cls = i % K
            samples.append(shape_image(streams.stream(seed, streams.SYNTHETIC, 2, i), cls))
            labels.append(cls)
            classes.append(cls)
        return SyntheticDataset(kind, samples, labels, classes, SHAPE_IMAGE_CLASSES[:K])
    raise ValueError(f"unknown synthetic dataset kind {kind!r}")
