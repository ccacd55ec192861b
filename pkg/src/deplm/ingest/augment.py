import numpy as np

from deplm.pointset import PointSet


def shift_offsets(coords: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """One offset per sample, each axis uniform in ``+-fraction * range``."""
    span = coords.max(axis=-2) - coords.min(axis=-2)
    return rng.uniform(-1.0, 1.0, size=span.shape) * fraction * span


def augment_shift(ps: PointSet, fraction: float = 0.1, rng: np.random.Generator | None = None) -> PointSet:
    """Rigidly translate a point set by a random offset; features are untouched."""
    if fraction == 0:
        return PointSet(ps.coords.copy(), ps.feats.copy(), ps.labels)
    rng = rng or np.random.default_rng()
    off = shift_offsets(ps.coords, fraction, rng)
    return PointSet(ps.coords + off, ps.feats.copy(), ps.labels)
