"""Analytic operation counts for training, and a linear energy model on top.

Counts are multiply-accumulates (one add counts as one op) per training
sample, summed over the whole training schedule of ``epochs`` passes:

* DEPLM encodes (and decodes) each sample once; features are cached and only
  the readout runs every epoch.
* The fully-trained reference has the same architecture with every mapping
  layer trainable, so it repeats the full forward and backward pass every
  epoch. Its grouping depends on coordinates only, so grouping distances
  are computed once for both.

Updates are one SGD step per minibatch, amortized over the batch. For
segmentation both models fit the readout on the same sampled points of each
shape; the reference still backpropagates through every point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from deplm.harness.config import ExperimentConfig
from deplm.ingest.synthetic import GESTURES

DVS128_CLASSES = 11
SHAPENET_PARTS = 50


@dataclass(frozen=True)
class Layer:
    n: int  # points mapped
    d_in: int
    d_out: int


@dataclass
class Architecture:
    """Sizes needed for counting, derived from a config."""

    n_points: int
    n_classes: int
    coord_dim: int
    layers: list  # crossbar maps, encoder first then decoder
    distance: int  # pairwise distance MACs of FPS, kNN and interpolation
    pooling: int  # sum-pool and interpolation accumulations
    readout_rows: int  # 1 for classification, trained points per shape for segmentation
    readout_dim: int
    infer_rows: int  # rows scored at inference: 1, or every point
    epochs: int
    batch_size: int


@dataclass
class OpCountBreakdown:
    deplm_forward: int
    deplm_backward: int
    deplm_update: int
    reference_forward: int
    reference_backward: int
    reference_update: int
    components: dict = field(default_factory=dict)  # one inference pass, by subsystem

    @property
    def deplm_total(self) -> int:
        return self.deplm_forward + self.deplm_backward + self.deplm_update

    @property
    def reference_total(self) -> int:
        return self.reference_forward + self.reference_backward + self.reference_update

    @property
    def reduction(self) -> float:
        """Fraction of the reference's training ops saved by DEPLM."""
        if self.reference_total == 0:
            return 0.0
        return 1.0 - self.deplm_total / self.reference_total

    def rows(self) -> list:
        return [
            ["forward", self.deplm_forward, self.reference_forward],
            ["backward", self.deplm_backward, self.reference_backward],
            ["update", self.deplm_update, self.reference_update],
            ["total", self.deplm_total, self.reference_total],
        ]


def task_size(cfg: ExperimentConfig) -> tuple:
    """``(points per sample, classes)`` of a config's task."""
    d = cfg.data
    if cfg.task == "classify-image":
        return 784, d.n_classes or 10
    if cfg.task == "classify-events":
        k = d.n_classes or (len(GESTURES) if d.source == "synthetic" else DVS128_CLASSES)
        return cfg.dvs.sample_count, k
    return d.n_points, d.n_classes or (2 if d.source == "synthetic" else SHAPENET_PARTS)


def architecture(cfg: ExperimentConfig, n_points: int | None = None, n_classes: int | None = None) -> Architecture:
    N0, K = task_size(cfg)
    N0 = n_points or N0
    K = n_classes or K
    enc = cfg.encoder_config()
    c = enc.coord_dim
    layers, distance, pooling = [], 0, 0
    sizes = [N0]  # points per trace level
    dims = [c]
    n = N0
    for i, st in enumerate(enc.stages):
        layers.append(Layer(n, st.d_in, st.d_out))
        if st.is_global:
            pooling += n * st.d_out
            n = 1
        else:
            distance += 2 * st.P * n * c  # FPS updates plus kNN distances
            pooling += st.P * st.k * enc.out_dim(i)
            n = st.P
        sizes.append(n)
        dims.append(enc.out_dim(i))
    if not enc.stages or not enc.stages[-1].is_global:
        pooling += n * dims[-1]
        sizes.append(1)
        dims.append(dims[-1])
    readout_rows, readout_dim, infer_rows = 1, dims[-1], 1
    if cfg.task == "segment-shapes":
        dec = cfg.decoder_config()
        L = len(sizes) - 1
        widths = dec.widths or tuple(st.d_out for st in reversed(enc.stages))
        cur = dims[L]
        for j in range(L):
            fine = L - 1 - j
            nf, nc = sizes[fine], sizes[fine + 1]
            m = min(dec.m, nc)
            distance += nf * nc * c
            pooling += nf * m * cur
            layers.append(Layer(nf, cur + dims[fine], widths[j]))
            cur = widths[j]
        readout_rows, readout_dim, infer_rows = min(cfg.train.points_per_shape, N0), cur, N0
    return Architecture(N0, K, c, layers, distance, pooling, readout_rows, readout_dim, infer_rows,
                        cfg.train.epochs, cfg.train.batch_size)


def count_training_ops(cfg: ExperimentConfig, n_points: int | None = None,
                       n_classes: int | None = None) -> OpCountBreakdown:
    a = architecture(cfg, n_points, n_classes)
    E, bs = a.epochs, a.batch_size
    maps = sum(ly.n * ly.d_in * ly.d_out for ly in a.layers)
    map_params = sum(ly.d_in * ly.d_out for ly in a.layers)
    readout = a.readout_rows * a.readout_dim * a.n_classes
    readout_params = a.readout_dim * a.n_classes + a.n_classes
    # readout backward: weight gradient plus the bias reduction
    readout_bwd = readout + a.readout_rows * a.n_classes
    # reference backward: weight and input gradients of every map (the first
    # layer needs no input gradient), the readout's input gradient, and the
    # scatter back through pooling and interpolation
    ref_bwd = readout_bwd + readout + 2 * maps + a.pooling
    if a.layers:
        first = a.layers[0]
        ref_bwd -= first.n * first.d_in * first.d_out
    readout_infer = a.infer_rows * a.readout_dim * a.n_classes
    inference = maps + a.distance + a.pooling + readout_infer
    conversions = sum(ly.n * (ly.d_in + ly.d_out) for ly in a.layers)
    return OpCountBreakdown(
        deplm_forward=maps + a.distance + a.pooling + E * readout,
        deplm_backward=E * readout_bwd,
        deplm_update=-(-E * readout_params // bs),
        reference_forward=a.distance + E * (maps + a.pooling + readout),
        reference_backward=E * ref_bwd,
        reference_update=-(-E * (map_params + readout_params) // bs),
        components={
            "crossbar_vmm": maps,
            "conversions": conversions,
            "distance": a.distance,
            "aggregation": a.pooling,
            "readout": readout_infer,
            "inference_total": inference,
        },
    )


ENERGY_LINES = (
    # line item, op component, constant
    ("crossbar_vmm", "crossbar_vmm", "crossbar"),
    ("peripheral", "conversions", "peripheral"),
    ("distance", "distance", "digital"),
    ("aggregation", "aggregation", "digital"),
    ("readout", "readout", "digital"),
)


def estimate_energy(breakdown: OpCountBreakdown, constants: dict) -> list:
    """Model-based energy of one inference: ``[(item, ops, J_per_op, joules)]`` plus a total row.

    These are op counts times user-supplied constants, not measurements.
    """
    for name in ("crossbar", "peripheral", "digital"):
        if constants.get(name, 0.0) < 0:
            raise ValueError(f"energy constant {name!r} must be non-negative")
    rows = []
    for item, comp, const in ENERGY_LINES:
        ops = breakdown.components[comp]
        k = float(constants.get(const, 0.0))
        rows.append((item, ops, k, ops * k))
    rows.append(("total", sum(r[1] for r in rows), float("nan"), sum(r[3] for r in rows)))
    return rows
