"""Random resistive-memory crossbars.

Cells are electroformed once into a zero-inflated Gaussian conductance
population. A weight is the scaled conductance difference of a positive and a
negative cell, and every read adds fresh cycle-to-cycle noise to each formed
cell. Conductances are in microsiemens throughout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MU_G = 35.85  # formed-cell conductance mode, uS
DEFAULT_NOISE_LEVEL = 0.0075  # 0.27 uS / 35.85 uS


@dataclass(frozen=True)
class ElectroformParams:
    sparsity: float = 0.5
    mu_g: float = MU_G
    sigma_g: float = 3.0
    clip_floor: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError(f"sparsity must be in [0, 1], got {self.sparsity}")
        if self.mu_g <= 0:
            raise ValueError("mu_g must be positive")
        if self.sigma_g < 0:
            raise ValueError("sigma_g must be non-negative")
        if self.clip_floor <= 0:
            raise ValueError("clip_floor must be positive")


@dataclass(frozen=True)
class ReadNoiseModel:
    """Cycle-to-cycle read noise; std per formed cell is ``level * mu_g``."""

    level: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("noise level must be non-negative")

    @property
    def active(self) -> bool:
        return self.enabled and self.level > 0

    def cell_std(self, mu_g: float = MU_G) -> float:
        return self.level * mu_g


@dataclass(frozen=True)
class Quantization:
    """Optional DAC/ADC model. Off by default."""

    enabled: bool = False
    input_bits: int = 16
    output_bits: int = 14


@dataclass(frozen=True)
class ConductanceMatrix:
    values: np.ndarray
    formed: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.formed.shape:
            raise ValueError("values and formed mask must have the same shape")
        if np.any(self.values[~self.formed] != 0.0):
            raise ValueError("unformed cells must have zero conductance")
        if np.any(~(self.values[self.formed] > 0)) or not np.isfinite(self.values).all():
            raise ValueError("formed cells must have finite positive conductance")

    @property
    def shape(self):
        return self.values.shape


def electroform(rows: int, cols: int, params: ElectroformParams, seed) -> ConductanceMatrix:
    """One-shot stochastic forming of a ``rows x cols`` array.

    Each cell stays insulating with probability ``params.sparsity``; formed
    cells draw from a Gaussian truncated below at ``clip_floor``.
    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("crossbar dimensions must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    formed = rng.random((rows, cols)) >= params.sparsity
    g = rng.normal(params.mu_g, params.sigma_g, size=(rows, cols))
    low = g < params.clip_floor
    while low.any():
        g[low] = rng.normal(params.mu_g, params.sigma_g, size=int(low.sum()))
        low = g < params.clip_floor
    values = np.where(formed, g, 0.0)
    return ConductanceMatrix(values=values, formed=formed)


@dataclass(frozen=True)
class DifferentialCrossbar:
    g_pos: ConductanceMatrix
    g_neg: ConductanceMatrix
    scale: float
    mu_g: float = MU_G

    def __post_init__(self):
        if self.g_pos.shape != self.g_neg.shape:
            raise ValueError(f"sub-array shapes differ: {self.g_pos.shape} vs {self.g_neg.shape}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def shape(self):
        return self.g_pos.shape

    @property
    def rows(self) -> int:
        return self.g_pos.shape[0]

    @property
    def cols(self) -> int:
        return self.g_pos.shape[1]

    @classmethod
    def form(cls, rows: int, cols: int, params: ElectroformParams, rng: np.random.Generator,
             g_scale: float | None = None) -> "DifferentialCrossbar":
        """Electroform both sub-arrays. ``g_scale`` defaults to ``1/sqrt(cols)``."""
        if g_scale is None:
            g_scale = 1.0 / np.sqrt(cols)
        g_pos = electroform(rows, cols, params, rng)
        g_neg = electroform(rows, cols, params, rng)
        return cls(g_pos, g_neg, scale=g_scale / params.mu_g, mu_g=params.mu_g)

    def weights(self) -> np.ndarray:
        return pair_to_weights(self)

    def formed_count(self) -> np.ndarray:
        """Formed cells per weight position (0, 1 or 2)."""
        return self.g_pos.formed.astype(np.float64) + self.g_neg.formed


def pair_to_weights(xbar: DifferentialCrossbar) -> np.ndarray:
    """Nominal (noiseless) weights ``scale * (g_pos - g_neg)``."""
    if xbar.g_pos.shape != xbar.g_neg.shape:
        raise ValueError("sub-array shapes differ")
    return xbar.scale * (xbar.g_pos.values - xbar.g_neg.values)


def _quantize(x: np.ndarray, bits: int) -> np.ndarray:
    """Symmetric uniform quantization against the per-row full scale."""
    full = np.max(np.abs(x), axis=-1, keepdims=True)
    full[full == 0] = 1.0
    levels = 2 ** (bits - 1) - 1
    return np.round(x / full * levels) / levels * full


def read_vmm(xbar: DifferentialCrossbar, x, noise: ReadNoiseModel | None = None,
             rng: np.random.Generator | None = None,
             quant: Quantization | None = None) -> np.ndarray:
    """One in-memory vector-matrix read.

    A 1-D input is a single read: every formed cell of both sub-arrays gets its
    own noise draw. A 2-D ``(n, cols)`` input is ``n`` independent reads; see
    :func:`read_vmm_batch`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != xbar.cols:
        raise ValueError(f"input length {x.shape[-1]} does not match crossbar columns {xbar.cols}")
    if x.ndim == 2:
        return read_vmm_batch(xbar, x, noise, rng, quant)
    if x.ndim != 1:
        raise ValueError("input must be a vector or an (n, cols) matrix")
    if quant is not None and quant.enabled:
        x = _quantize(x, quant.input_bits)
    if noise is None or not noise.active:
        out = pair_to_weights(xbar) @ x
    else:
        if rng is None:
            raise ValueError("a noisy read needs an rng stream")
        std = noise.cell_std(xbar.mu_g)
        eta_pos = rng.normal(0.0, std, size=xbar.shape) * xbar.g_pos.formed
        eta_neg = rng.normal(0.0, std, size=xbar.shape) * xbar.g_neg.formed
        g = (xbar.g_pos.values + eta_pos) - (xbar.g_neg.values + eta_neg)
        out = xbar.scale * (g @ x)
    if quant is not None and quant.enabled:
        out = _quantize(out, quant.output_bits)
    return out


def read_vmm_batch(xbar: DifferentialCrossbar, x: np.ndarray, noise: ReadNoiseModel | None = None,
                   rng: np.random.Generator | None = None,
                   quant: Quantization | None = None,
                   weights: np.ndarray | None = None) -> np.ndarray:
    """Independent reads for each row of ``x (n, cols)`` -> ``(n, rows)``.

    Per-cell Gaussian noise summed through the crossbar is itself Gaussian,
    with per-output variance ``(scale * std)^2 * sum_j F_ij x_j^2`` where
    ``F_ij`` counts formed cells at that weight position. Sampling that directly
    is exact in distribution and avoids drawing ``rows * cols`` values per read.
    """
    x = np.asarray(x, dtype=np.float64)
    if quant is not None and quant.enabled:
        x = _quantize(x, quant.input_bits)
    w = pair_to_weights(xbar) if weights is None else weights
    out = x @ w.T
    if noise is not None and noise.active:
        if rng is None:
            raise ValueError("a noisy read needs an rng stream")
        var = (x * x) @ xbar.formed_count().T
        out += (xbar.scale * noise.cell_std(xbar.mu_g)) * np.sqrt(var) * rng.standard_normal(out.shape)
    if quant is not None and quant.enabled:
        out = _quantize(out, quant.output_bits)
    return out


def sample_read_weights(xbar: DifferentialCrossbar, noise: ReadNoiseModel, rng: np.random.Generator,
                        reads: int) -> np.ndarray:
    """Effective weights seen by ``reads`` successive reads -> ``(reads, rows, cols)``."""
    std = noise.cell_std(xbar.mu_g) if noise.active else 0.0
    shape = (reads,) + xbar.shape
    g_pos = xbar.g_pos.values + rng.normal(0.0, std, size=shape) * xbar.g_pos.formed
    g_neg = xbar.g_neg.values + rng.normal(0.0, std, size=shape) * xbar.g_neg.formed
    return xbar.scale * (g_pos - g_neg)


def per_weight_read_std(xbar: DifferentialCrossbar, noise: ReadNoiseModel, rng: np.random.Generator,
                        reads: int, chunk: int = 1000) -> np.ndarray:
    """Empirical std of every weight over ``reads`` noisy reads.

    Sums are shifted by the nominal weights so the one-pass formula does not
    cancel catastrophically.
    """
    nominal = pair_to_weights(xbar)
    s1 = np.zeros(xbar.shape)
    s2 = np.zeros(xbar.shape)
    done = 0
    while done < reads:
        n = min(chunk, reads - done)
        dev = sample_read_weights(xbar, noise, rng, n) - nominal
        s1 += dev.sum(axis=0)
        s2 += (dev * dev).sum(axis=0)
        done += n
    var = (s2 - s1 * s1 / reads) / (reads - 1)
    return np.sqrt(np.maximum(var, 0.0))


def expected_weight_noise_std(sparsity: float, per_cell_std: float) -> float:
    """Mean per-weight read-noise std over the three differential-pair classes.

    Both cells formed: ``sigma * sqrt(2)``; one formed: ``sigma``; none: 0.
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError("sparsity must be in [0, 1]")
    if per_cell_std < 0:
        raise ValueError("per-cell std must be non-negative")
    s = sparsity
    return (1 - s) ** 2 * per_cell_std * np.sqrt(2.0) + 2 * s * (1 - s) * per_cell_std


_SNAP_MAGIC = b"DXBR"


def save_crossbar(path, xbar: DifferentialCrossbar) -> None:
    """Binary little-endian snapshot: header, g_pos, g_neg, packed formed masks."""
    R, C = xbar.shape
    with open(path, "wb") as fh:
        fh.write(_SNAP_MAGIC)
        fh.write(struct.pack("<IIId", 1, R, C, xbar.scale))
        fh.write(np.ascontiguousarray(xbar.g_pos.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(xbar.g_neg.values, dtype="<f8").tobytes())
        fh.write(np.packbits(xbar.g_pos.formed.reshape(-1)).tobytes())
        fh.write(np.packbits(xbar.g_neg.formed.reshape(-1)).tobytes())


def load_crossbar(path, mu_g: float = MU_G) -> DifferentialCrossbar:
    data = Path(path).read_bytes()
    if data[:4] != _SNAP_MAGIC:
        raise ValueError(f"{path}: bad crossbar snapshot magic")
    version, R, C, scale = struct.unpack_from("<IIId", data, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    off = 4 + struct.calcsize("<IIId")
    n = R * C
    g_pos = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(R, C).astype(np.float64)
    off += 8 * n
    g_neg = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(R, C).astype(np.float64)
    off += 8 * n
    nbytes = (n + 7) // 8
    m_pos = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=off))[:n]
    off += nbytes
    m_neg = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=off))[:n]
    return DifferentialCrossbar(
        ConductanceMatrix(g_pos, m_pos.reshape(R, C).astype(bool)),
        ConductanceMatrix(g_neg, m_neg.reshape(R, C).astype(bool)),
        scale=scale,
        mu_g=mu_g,
    )
