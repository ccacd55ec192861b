"""Event-camera streams as spatiotemporal point sets.

A recording is clipped into overlapping windows, each window is denoised and
a fixed number of events is sampled and normalized to ``[0, 1]^3``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from deplm.pointset import PointSet

# one EventRecord per row
EVENT_DTYPE = np.dtype([("t", "f8"), ("x", "i4"), ("y", "i4"), ("p", "i1")])


class SkipSample(Exception):
    """Raised when a window has no events left to sample."""


@dataclass(frozen=True)
class DvsPreprocConfig:
    window_len: float = 0.5
    step: float = 0.25
    denoise_window: float = 0.01
    sample_count: int = 1024
    seed: int = 0
    sensor_size: tuple = (128, 128)  # (width, height)
    neighbor_radius: int = 1
    denoise: bool = True

    def __post_init__(self):
        if self.step > self.window_len:
            raise ValueError("step must not exceed window_len")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


@dataclass
class EventWindow:
    events: np.ndarray
    label: int | None
    start: float


def make_events(t, x, y, p=None) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    ev = np.zeros(t.shape[0], dtype=EVENT_DTYPE)
    ev["t"] = t
    ev["x"] = x
    ev["y"] = y
    ev["p"] = 1 if p is None else p
    return ev


def clip_event_stream(events: np.ndarray, cfg: DvsPreprocConfig = DvsPreprocConfig(), label: int | None = None,
                      duration: float | None = None) -> list:
    """Half-open windows ``[t0 + i*step, t0 + i*step + window_len)``.

    ``t0`` is the first timestamp and ``duration`` defaults to the span of the
    recording. A recording shorter than one window yields a single window.
    """
    if len(events) == 0:
        return []
    t = events["t"]
    if np.any(np.diff(t) < 0):
        raise ValueError("event stream must be sorted by time")
    t0 = float(t[0])
    if duration is None:
        duration = float(t[-1]) - t0
    n = 1
    if duration >= cfg.window_len:
        n = int(math.floor((duration - cfg.window_len) / cfg.step + 1e-9)) + 1
    out = []
    for i in range(n):
        start = t0 + i * cfg.step
        lo = np.searchsorted(t, start, side="left")
        hi = np.searchsorted(t, start + cfg.window_len, side="left")
        out.append(EventWindow(events[lo:hi], label, start))
    return out


def denoise_events(events: np.ndarray, window: float = 0.01, radius: int = 1) -> np.ndarray:
    """Keep events with at least one other event within Chebyshev pixel
    distance ``radius`` and ``|dt| <= window``."""
    n = len(events)
    if n == 0:
        return events
    t = events["t"].astype(np.float64)
    x = events["x"].astype(np.int64)
    y = events["y"].astype(np.int64)
    x0, y0 = x.min() - radius, y.min() - radius
    width = int(x.max() - x0) + radius + 1
    pid = (y - y0) * width + (x - x0)
    rel = t - t.min()
    span = rel.max() + 2.0 * window + 1.0
    key = pid * span + rel
    skey = np.sort(key)
    count = np.zeros(n, dtype=np.int64)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            q = (pid + dy * width + dx) * span + rel
            count += np.searchsorted(skey, q + window, side="right") - np.searchsorted(skey, q - window, side="left")
    return events[count > 1]


def events_to_pointset(events: np.ndarray, cfg: DvsPreprocConfig = DvsPreprocConfig(),
                       rng: np.random.Generator | None = None) -> PointSet:
    """Sample ``cfg.sample_count`` events and normalize ``(x, y, t)`` onto ``[0, 1]``.

    Sampling is without replacement; when fewer events exist all are kept and
    the remainder is drawn with replacement. ``x`` and ``y`` are scaled by the
    sensor size, ``t`` by the window's own min and max.
    """
    n = len(events)
    if n == 0:
        raise SkipSample("window has no events")
    rng = rng or np.random.default_rng(cfg.seed)
    m = cfg.sample_count
    if n >= m:
        idx = rng.choice(n, size=m, replace=False)
    else:
        idx = np.concatenate([np.arange(n), rng.choice(n, size=m - n, replace=True)])
    idx = np.sort(idx)
    t = events["t"].astype(np.float64)
    t_lo, t_hi = t.min(), t.max()
    tn = (t[idx] - t_lo) / (t_hi - t_lo) if t_hi > t_lo else np.zeros(m)
    w, h = cfg.sensor_size
    coords = np.stack([
        events["x"][idx] / max(w - 1, 1),
        events["y"][idx] / max(h - 1, 1),
        tn,
    ], axis=1)
    return PointSet(np.clip(coords, 0.0, 1.0))


def stream_to_pointsets(events: np.ndarray, label: int | None, cfg: DvsPreprocConfig,
                        rng_for_window) -> list:
    """Clip, denoise and sample one recording -> ``[(PointSet, label), ...]``.

    ``rng_for_window(i)`` supplies the sampling stream of window ``i``.
    """
    out = []
    for i, win in enumerate(clip_event_stream(events, cfg, label)):
        ev = denoise_events(win.events, cfg.denoise_window, cfg.neighbor_radius) if cfg.denoise else win.events
        try:
            out.append((events_to_pointset(ev, cfg, rng_for_window(i)), label))
        except SkipSample:
            continue
    return out


def read_events_csv(path) -> np.ndarray:
    """Events CSV with header ``t,x,y,p``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["t", "x", "y", "p"]:
            raise ValueError(f"{path}: expected header t,x,y,p, got {','.join(header)}")
        rows = [r for r in reader if r]
    if not rows:
        return np.zeros(0, dtype=EVENT_DTYPE)
    arr = np.array(rows, dtype=object)
    ev = make_events(arr[:, 0].astype(np.float64), arr[:, 1].astype(np.int64), arr[:, 2].astype(np.int64),
                     arr[:, 3].astype(np.int64))
    if np.any(~np.isin(ev["p"], (-1, 1))):
        raise ValueError(f"{path}: polarity must be -1 or 1")
    return ev


def write_events_csv(path, events: np.ndarray) -> None:
    lines = ["t,x,y,p"]
    lines += [f"{e['t']:.9g},{int(e['x'])},{int(e['y'])},{int(e['p'])}" for e in events]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_manifest(path) -> list:
    """``[(file, label), ...]`` from a two-column CSV; file paths resolve next to the manifest."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) < 2:
            raise ValueError(f"{path}: manifest needs two columns")
        return [(path.parent / r[0], r[1].strip()) for r in reader if r]
