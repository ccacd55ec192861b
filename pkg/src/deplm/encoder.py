"""Hierarchical random encoder.

Each stage maps every point through a fixed random crossbar, picks centers by
farthest point sampling, groups them with kNN and sum-pools each group. A stage
with ``P == 0`` pools all points into a single representation vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from deplm import streams
from deplm.pointset import PointSet, fps_batch, knn_batch, pool_groups, write_pts
from deplm.rram import (
    DifferentialCrossbar,
    ElectroformParams,
    Quantization,
    ReadNoiseModel,
    pair_to_weights,
    read_vmm_batch,
)


class ConfigError(ValueError):
    pass


def _relu(x):
    return np.maximum(x, 0.0, out=x)


ACTIVATIONS = {
    "identity": lambda x: x,
    "relu": _relu,
    "sign": np.sign,
}


@dataclass(frozen=True)
class StageConfig:
    d_in: int
    d_out: int
    P: int
    k: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if self.d_in < 1 or self.d_out < 1:
            raise ConfigError("stage widths must be >= 1")
        if self.P < 0 or self.k < 1:
            raise ConfigError("stage needs P >= 0 and k >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def is_global(self) -> bool:
        return self.P == 0


@dataclass(frozen=True)
class EncoderConfig:
    stages: tuple = ()
    coord_dim: int = 3
    concat_coords: bool = True
    seed: int = 0
    electroform: ElectroformParams = field(default_factory=ElectroformParams)
    noise: ReadNoiseModel = field(default_factory=ReadNoiseModel)
    quant: Quantization = field(default_factory=Quantization)
    g_scale: float | None = None  # None: 1/sqrt(d_in) per layer
    pool_gain_norm: bool = True  # divide each map input by its level's pooling gain

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        self.validate()

    def out_dim(self, i: int) -> int:
        """Feature width of stage ``i``'s output point set."""
        st = self.stages[i]
        extra = self.coord_dim if (self.concat_coords and not st.is_global) else 0
        return st.d_out + extra

    def validate(self):
        if self.coord_dim < 1:
            raise ConfigError("coord_dim must be >= 1")
        expected = self.coord_dim
        for i, st in enumerate(self.stages):
            if st.d_in != expected:
                raise ConfigError(f"stage {i} expects d_in={expected}, configured {st.d_in}")
            if st.is_global and i != len(self.stages) - 1:
                raise ConfigError("only the last stage may be a global pool")
            expected = self.out_dim(i)

    def level_gains(self, n_points: int) -> list:
        """Pooling gain of every trace level, input first.

        A grouped stage sums ``k`` rows per output, a global pool sums every
        row of its input. With ``pool_gain_norm`` off all gains are 1.
        """
        gains = [1.0]
        n = n_points
        for st in self.stages:
            gains.append(float(n if st.is_global else st.k))
            n = 1 if st.is_global else st.P
        if not self.stages or not self.stages[-1].is_global:
            gains.append(float(n))
        if not self.pool_gain_norm:
            gains = [1.0] * len(gains)
        return gains

    @property
    def rep_dim(self) -> int:
        if not self.stages:
            return self.coord_dim
        return self.out_dim(len(self.stages) - 1)

    @classmethod
    def chain(cls, widths: Sequence[int], points: Sequence[int], ks: Sequence[int] | int,
              coord_dim: int = 3, concat_coords: bool = True, activation: str = "relu",
              **kwargs) -> "EncoderConfig":
        """Build a stage list whose input widths follow from the previous stage."""
        if isinstance(ks, int):
            ks = [ks] * len(widths)
        if not (len(widths) == len(points) == len(ks)):
            raise ConfigError("widths, points and ks must have equal length")
        stages = []
        d_in = coord_dim
        for w, p, k in zip(widths, points, ks):
            stages.append(StageConfig(d_in=d_in, d_out=int(w), P=int(p), k=int(k), activation=activation))
            d_in = int(w) + (coord_dim if concat_coords and p != 0 else 0)
        return cls(stages=tuple(stages), coord_dim=coord_dim, concat_coords=concat_coords, **kwargs)


@dataclass(frozen=True)
class Encoder:
    cfg: EncoderConfig
    crossbars: tuple
    weights: tuple  # nominal weights, cached

    def with_noise(self, noise: ReadNoiseModel) -> "Encoder":
        return replace(self, cfg=replace(self.cfg, noise=noise))


def layer_scale(cfg: EncoderConfig, d_in: int) -> float:
    return cfg.g_scale if cfg.g_scale is not None else 1.0 / np.sqrt(d_in)


def build_encoder(cfg: EncoderConfig) -> Encoder:
    """Electroform one differential crossbar per stage from ``(seed, stage)``."""
    cfg.validate()
    xbars = []
    for i, st in enumerate(cfg.stages):
        rng = streams.stream(cfg.seed, streams.ELECTROFORM, 0, i)
        xbars.append(DifferentialCrossbar.form(st.d_out, st.d_in, cfg.electroform, rng,
                                               g_scale=layer_scale(cfg, st.d_in)))
    return Encoder(cfg=cfg, crossbars=tuple(xbars), weights=tuple(pair_to_weights(x) for x in xbars))


@dataclass
class BatchTrace:
    """Per-level coords ``(B, N_i, c)`` and feats ``(B, N_i, d_i)``; level 0 is the input."""

    coords: list
    feats: list

    @property
    def representation(self) -> np.ndarray:
        return self.feats[-1][:, 0, :]

    def sample(self, b: int) -> "EncoderTrace":
        levels = [PointSet(c[b], f[b]) for c, f in zip(self.coords, self.feats)]
        return EncoderTrace(levels=levels, representation=self.feats[-1][b, 0].copy())


@dataclass
class EncoderTrace:
    levels: list  # PointSet per level, input first
    representation: np.ndarray

    def export(self, directory, prefix: str = "level") -> list:
        """Write every level as a points file; returns the paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, ps in enumerate(self.levels):
            path = directory / f"{prefix}{i}.pts"
            write_pts(path, ps)
            paths.append(path)
        return paths

    def to_batch(self) -> BatchTrace:
        return BatchTrace(coords=[ps.coords[None] for ps in self.levels],
                          feats=[ps.feats[None] for ps in self.levels])


def map_points(x: np.ndarray, xbar: DifferentialCrossbar, weights: np.ndarray, noise: ReadNoiseModel,
               quant: Quantization, rngs) -> np.ndarray:
    """Crossbar read of every point of a ``(B, N, d_in)`` batch."""
    B, N, d = x.shape
    if not noise.active and not quant.enabled:
        return (x.reshape(B * N, d) @ weights.T).reshape(B, N, -1)
    out = np.empty((B, N, xbar.rows))
    for b in range(B):
        out[b] = read_vmm_batch(xbar, x[b], noise, rngs[b] if rngs is not None else None, quant, weights=weights)
    return out


@dataclass
class GroupPlan:
    """Centers and groups of every stage for a batch.

    Grouping looks at coordinates only, so one plan serves any number of
    encodes of the same samples (different crossbars, noise draws, ...).
    """

    coords: list  # (B, N_i, c) per level, input first
    members: list  # (B, P, k) int32 per grouped stage, None for a global stage

    def take(self, rows) -> "GroupPlan":
        return GroupPlan(coords=[c[rows] for c in self.coords],
                         members=[None if m is None else m[rows] for m in self.members])


def plan_groups(coords: np.ndarray, cfg: EncoderConfig) -> GroupPlan:
    coords = np.asarray(coords, dtype=np.float64)
    plan = GroupPlan(coords=[coords], members=[])
    cur = coords
    for st in cfg.stages:
        if st.is_global:
            cur = cur.mean(axis=1, keepdims=True)
            plan.members.append(None)
        else:
            if st.P > cur.shape[1] or st.k > cur.shape[1]:
                raise ValueError(f"stage needs P={st.P}, k={st.k} <= N={cur.shape[1]}")
            centers = fps_batch(cur, st.P)
            plan.members.append(knn_batch(cur, centers, st.k).astype(np.int32))
            cur = np.take_along_axis(cur, centers[:, :, None], axis=1)
        plan.coords.append(cur)
    return plan


def encode_stage_batch(coords: np.ndarray, feats: np.ndarray, stage: StageConfig, xbar: DifferentialCrossbar,
                       weights: np.ndarray, noise: ReadNoiseModel, rngs=None, concat_coords: bool = True,
                       quant: Quantization | None = None, groups=None):
    """One mapping-aggregating stage on a batch. Returns ``(coords, feats)`` of the pooled set.

    ``groups`` optionally supplies precomputed ``(center_coords, members)``.
    """
    B, N, _ = coords.shape
    if feats.shape[-1] != stage.d_in:
        raise ConfigError(f"stage expects {stage.d_in} input channels, got {feats.shape[-1]}")
    quant = quant or Quantization()
    mapped = ACTIVATIONS[stage.activation](map_points(feats, xbar, weights, noise, quant, rngs))
    if stage.is_global:
        return coords.mean(axis=1, keepdims=True), mapped.sum(axis=1, keepdims=True)
    if groups is not None:
        center_coords, members = groups
    else:
        if stage.P > N or stage.k > N:
            raise ValueError(f"stage needs P={stage.P}, k={stage.k} <= N={N}")
        centers = fps_batch(coords, stage.P)
        members = knn_batch(coords, centers, stage.k)
        center_coords = np.take_along_axis(coords, centers[:, :, None], axis=1)
    pooled = pool_groups(mapped, members)
    if concat_coords:
        rel = pool_groups(coords, members) - stage.k * center_coords
        pooled = np.concatenate([pooled, rel], axis=-1)
    return center_coords, pooled


def encode_stage(ps: PointSet, stage: StageConfig, xbar: DifferentialCrossbar, noise: ReadNoiseModel | None = None,
                 rng: np.random.Generator | None = None, concat_coords: bool = False) -> PointSet:
    """Single-sample stage. Points without features feed their coordinates."""
    feats = ps.feats if ps.d else ps.coords
    noise = noise or ReadNoiseModel()
    c, f = encode_stage_batch(ps.coords[None], feats[None], stage, xbar, pair_to_weights(xbar), noise,
                              [rng], concat_coords)
    return PointSet(c[0], f[0])


def _noise_rngs(seed: int, kind: int, level: int, sample_ids, read_counter: int):
    return [streams.stream(seed, kind, level, int(s), read_counter) for s in sample_ids]


def encode_batch(coords: np.ndarray, enc: Encoder, feats: np.ndarray | None = None, sample_ids=None,
                 noise_seed: int | None = None, read_counter: int = 0, plan: GroupPlan | None = None) -> BatchTrace:
    """Encode ``(B, N, c)`` samples. Noise streams are keyed per sample id, so
    results never depend on how samples are batched.

    ``plan`` reuses grouping computed by :func:`plan_groups` for these coords.
    """
    cfg = enc.cfg
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 3 or coords.shape[-1] != cfg.coord_dim:
        raise ConfigError(f"expected (B, N, {cfg.coord_dim}) coords, got {coords.shape}")
    B = coords.shape[0]
    if sample_ids is None:
        sample_ids = range(B)
    if noise_seed is None:
        noise_seed = cfg.seed
    x = coords if feats is None or feats.shape[-1] == 0 else np.asarray(feats, dtype=np.float64)
    trace = BatchTrace(coords=[coords], feats=[x])
    gains = cfg.level_gains(coords.shape[1])
    cur_c, cur_f = coords, x
    for i, (st, xbar, w) in enumerate(zip(cfg.stages, enc.crossbars, enc.weights)):
        rngs = _noise_rngs(noise_seed, streams.ENCODER_NOISE, i, sample_ids, read_counter) if cfg.noise.active else None
        if gains[i] != 1.0:
            cur_f = cur_f / gains[i]
        groups = None
        if plan is not None and plan.members[i] is not None:
            groups = (plan.coords[i + 1], plan.members[i])
        cur_c, cur_f = encode_stage_batch(cur_c, cur_f, st, xbar, w, cfg.noise, rngs, cfg.concat_coords, cfg.quant,
                                          groups)
        trace.coords.append(cur_c)
        trace.feats.append(cur_f)
    if not cfg.stages or not cfg.stages[-1].is_global:
        trace.coords.append(cur_c.mean(axis=1, keepdims=True))
        trace.feats.append(cur_f.sum(axis=1, keepdims=True))
    return trace


def encode(sample: PointSet, enc: Encoder, sample_id: int = 0, noise_seed: int | None = None,
           read_counter: int = 0) -> EncoderTrace:
    if sample.c != enc.cfg.coord_dim:
        raise ConfigError(f"sample has {sample.c} coordinates, encoder expects {enc.cfg.coord_dim}")
    feats = sample.feats[None] if sample.d else None
    bt = encode_batch(sample.coords[None], enc, feats, [sample_id], noise_seed, read_counter)
    return bt.sample(0)
