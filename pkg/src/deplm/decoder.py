"""Random decoder: propagates the representation back onto every input point.

Walking the encoder trace from coarse to fine, each level interpolates the
current features onto the next finer point set, concatenates that level's
encoder features and applies a fixed random crossbar map. Encoder features
enter divided by their pooling gain so that no block swamps the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deplm import streams
from deplm.encoder import ACTIVATIONS, BatchTrace, ConfigError, Encoder, EncoderTrace, layer_scale, map_points
from deplm.pointset import nearest_batch
from deplm.rram import DifferentialCrossbar, pair_to_weights

EPS = 1e-8


@dataclass(frozen=True)
class DecoderConfig:
    widths: tuple = ()  # empty: reversed encoder widths
    m: int = 3
    seed: int | None = None  # None: encoder seed
    activation: str = "relu"
    eps: float = EPS

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if any(w < 1 for w in self.widths):
            raise ConfigError("decoder widths must be >= 1")
        if self.m < 1:
            raise ConfigError("interpolation needs m >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class Decoder:
    cfg: DecoderConfig
    enc: Encoder
    crossbars: tuple
    weights: tuple

    @property
    def out_dim(self) -> int:
        return self.crossbars[-1].rows


def _level_dims(enc: Encoder) -> list:
    """Feature width of each encoder trace level, input first."""
    cfg = enc.cfg
    dims = [cfg.stages[0].d_in if cfg.stages else cfg.coord_dim]
    dims += [cfg.out_dim(i) for i in range(len(cfg.stages))]
    if not cfg.stages or not cfg.stages[-1].is_global:
        dims.append(dims[-1])
    return dims


def build_decoder(cfg: DecoderConfig, enc: Encoder) -> Decoder:
    dims = _level_dims(enc)
    L = len(dims) - 1
    widths = cfg.widths or tuple(st.d_out for st in reversed(enc.cfg.stages))
    if len(widths) != L:
        raise ConfigError(f"decoder needs {L} level widths, got {len(widths)}")
    seed = enc.cfg.seed if cfg.seed is None else cfg.seed
    xbars = []
    current = dims[L]
    for j in range(L):
        d_in = current + dims[L - 1 - j]
        rng = streams.stream(seed, streams.ELECTROFORM, 1, j)
        xbars.append(DifferentialCrossbar.form(widths[j], d_in, enc.cfg.electroform, rng,
                                               g_scale=layer_scale(enc.cfg, d_in)))
        current = widths[j]
    if cfg.widths != widths:
        cfg = DecoderConfig(widths=widths, m=cfg.m, seed=cfg.seed, activation=cfg.activation, eps=cfg.eps)
    return Decoder(cfg=cfg, enc=enc, crossbars=tuple(xbars), weights=tuple(pair_to_weights(x) for x in xbars))


def interpolate_batch(fine: np.ndarray, coarse: np.ndarray, coarse_feats: np.ndarray, m: int,
                      eps: float = EPS) -> np.ndarray:
    """Inverse-distance interpolation on batches: ``(B, Nf, c)``, ``(B, Nc, c)``, ``(B, Nc, d)``."""
    B, Nc, _ = coarse.shape
    if Nc < 1:
        raise ValueError("coarse point set is empty")
    m = min(m, Nc)
    nn, d = nearest_batch(fine, coarse, m)
    w = 1.0 / (d + eps)
    hit = d[..., 0] < eps
    if hit.any():
        w[hit] = 0.0
        w[hit, 0] = 1.0
    w /= w.sum(axis=-1, keepdims=True)
    rows = np.arange(B)[:, None]
    out = w[..., 0, None] * coarse_feats[rows, nn[..., 0]]
    for j in range(1, m):
        out += w[..., j, None] * coarse_feats[rows, nn[..., j]]
    return out


def interpolate_features(fine_coords, coarse_coords, coarse_feats, m: int = 3, eps: float = EPS) -> np.ndarray:
    """Feature at each fine point from its ``m`` nearest coarse points.

    Weights are ``1/(dist + eps)`` normalized to one; a fine point closer than
    ``eps`` to a coarse point copies that feature.
    """
    fine = np.asarray(fine_coords, dtype=np.float64)
    coarse = np.asarray(coarse_coords, dtype=np.float64)
    feats = np.asarray(coarse_feats, dtype=np.float64)
    if coarse.ndim == 1:
        coarse = coarse[:, None]
    if fine.ndim == 1:
        fine = fine[:, None]
    if feats.ndim == 1:
        feats = feats[:, None]
    if coarse.shape[0] == 0:
        raise ValueError("coarse point set is empty")
    return interpolate_batch(fine[None], coarse[None], feats[None], m, eps)[0]


def decode_batch(trace: BatchTrace, dec: Decoder, sample_ids=None, noise_seed: int | None = None,
                 read_counter: int = 0) -> np.ndarray:
    """Per-point features ``(B, N_input, d_final)``."""
    L = len(trace.coords) - 1
    if L != len(dec.crossbars):
        raise ConfigError(f"trace has {L} levels but decoder has {len(dec.crossbars)}")
    enc_cfg = dec.enc.cfg
    noise = enc_cfg.noise
    B = trace.coords[0].shape[0]
    if sample_ids is None:
        sample_ids = range(B)
    if noise_seed is None:
        noise_seed = enc_cfg.seed
    act = ACTIVATIONS[dec.cfg.activation]
    gains = enc_cfg.level_gains(trace.coords[0].shape[1])
    cur = trace.feats[L] / gains[L]
    for j in range(L):
        fine = L - 1 - j
        up = interpolate_batch(trace.coords[fine], trace.coords[fine + 1], cur, dec.cfg.m, dec.cfg.eps)
        x = np.concatenate([up, trace.feats[fine] / gains[fine]], axis=-1)
        rngs = None
        if noise.active:
            rngs = [streams.stream(noise_seed, streams.DECODER_NOISE, j, int(s), read_counter) for s in sample_ids]
        cur = act(map_points(x, dec.crossbars[j], dec.weights[j], noise, enc_cfg.quant, rngs))
    return cur


def decode(trace: EncoderTrace, dec: Decoder, sample_id: int = 0, noise_seed: int | None = None,
           read_counter: int = 0) -> np.ndarray:
    return decode_batch(trace.to_batch(), dec, [sample_id], noise_seed, read_counter)[0]
