"""Experiment configuration: nested YAML sections over named presets.

A config file may start from a preset (``preset: fashion-mnist``) and
override any key. Every resolved value is written back out with the results,
so a run never depends on a default that is not on record.
"""

from __future__ import annotations

import copy
import os
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

import yaml

from deplm.decoder import DecoderConfig
from deplm.encoder import ConfigError, EncoderConfig
from deplm.ingest.events import DvsPreprocConfig
from deplm.readout import TrainConfig
from deplm.rram import DEFAULT_NOISE_LEVEL, MU_G, ElectroformParams, Quantization, ReadNoiseModel

TASKS = ("classify-image", "classify-events", "segment-shapes")
SOURCES = ("idx", "events", "pts", "synthetic")
FASHION_ENV = "DEPLM_FASHION_MNIST_DIR"


@dataclass
class DataSection:
    source: str = "synthetic"
    root: str | None = None  # IDX directory, or base for relative manifest paths
    train_manifest: str | None = None
    test_manifest: str | None = None
    kind: str = "shape-images"  # synthetic generator
    count: int = 1000  # synthetic samples (streams for gestures)
    n_classes: int | None = None
    n_points: int = 1024  # points per shape (synthetic shapes, resampled pts files)
    test_fraction: float = 0.2  # when no separate test split exists
    train_limit: int = 0  # 0: use every sample
    test_limit: int = 0
    augment_copies: int = 0
    augment_fraction: float = 0.1


@dataclass
class EncoderSection:
    widths: list = field(default_factory=lambda: [64, 128, 256])
    points: list = field(default_factory=lambda: [512, 128, 0])
    k: list = field(default_factory=lambda: [16, 16, 16])
    activation: str = "relu"
    concat_coords: bool = True
    pool_gain_norm: bool = True
    g_scale: float | None = None


@dataclass
class DecoderSection:
    widths: list = field(default_factory=list)  # empty: reversed encoder widths
    m: int = 3
    activation: str = "relu"


@dataclass
class CrossbarSection:
    sparsity: float = 0.5
    mu_g: float = MU_G
    sigma_g: float = 3.0
    clip_floor: float = 1.0


@dataclass
class NoiseSection:
    enabled: bool = False
    level: float = DEFAULT_NOISE_LEVEL


@dataclass
class QuantSection:
    enabled: bool = False
    input_bits: int = 16
    output_bits: int = 14


@dataclass
class DvsSection:
    window_len: float = 0.5
    step: float = 0.25
    denoise_window: float = 0.01
    sample_count: int = 1024
    sensor_size: list = field(default_factory=lambda: [128, 128])
    neighbor_radius: int = 1
    denoise: bool = True


@dataclass
class TrainSection:
    mode: str = "softmax-sgd"
    lr: float = 0.01
    epochs: int = 50
    batch_size: int = 128
    l2: float = 1e-4
    momentum: float = 0.9
    precondition: bool = True
    standardize: bool = True
    points_per_shape: int = 256  # segmentation: training points sampled per shape


@dataclass
class SweepSection:
    sparsities: list = field(default_factory=lambda: [0.0, 0.5, 0.9])
    noise_levels: list = field(default_factory=lambda: [0.0, 0.0075, 0.02, 0.04, 0.08])
    runs: int = 10
    fixed_electroform: bool = False
    train_limit: int = 2000
    test_limit: int = 1000


@dataclass
class ReportSection:
    distance_matrix: bool = False
    distance_limit: int = 500  # rows of the exported distance matrix


@dataclass
class EnergySection:
    crossbar: float = 0.0  # J per MAC on the crossbar
    peripheral: float = 0.0  # J per DAC/ADC conversion
    digital: float = 0.0  # J per digital MAC


@dataclass
class ExperimentConfig:
    task: str = "classify-image"
    preset: str | None = None
    seed: int = 0
    batch_size: int = 32  # samples per encode batch
    data: DataSection = field(default_factory=DataSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    decoder: DecoderSection = field(default_factory=DecoderSection)
    crossbar: CrossbarSection = field(default_factory=CrossbarSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    quant: QuantSection = field(default_factory=QuantSection)
    dvs: DvsSection = field(default_factory=DvsSection)
    train: TrainSection = field(default_factory=TrainSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    report: ReportSection = field(default_factory=ReportSection)
    energy: EnergySection = field(default_factory=EnergySection)

    def validate(self) -> "ExperimentConfig":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {', '.join(TASKS)}")
        if self.data.source not in SOURCES:
            raise ConfigError(f"unknown data source {self.data.source!r}")
        if self.sweep.runs < 1:
            raise ConfigError("sweep.runs must be >= 1")
        if not self.sweep.sparsities or not self.sweep.noise_levels:
            raise ConfigError("sweep grid must be non-empty")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.task == "segment-shapes" and self.train.points_per_shape < 1:
            raise ConfigError("train.points_per_shape must be >= 1")
        e = self.encoder
        if isinstance(e.k, int):
            e.k = [e.k] * len(e.widths)
        if not (len(e.widths) == len(e.points) == len(e.k)):
            raise ConfigError("encoder.widths, encoder.points and encoder.k must have equal length")
        # building the nested configs runs their own checks
        self.encoder_config()
        self.train_config()
        self.dvs_config()
        self.decoder_config()
        return self

    @property
    def coord_dim(self) -> int:
        return 3

    def encoder_config(self, sparsity: float | None = None, noise_level: float | None = None,
                       seed: int | None = None) -> EncoderConfig:
        cb = self.crossbar
        ef = ElectroformParams(sparsity=cb.sparsity if sparsity is None else sparsity, mu_g=cb.mu_g,
                               sigma_g=cb.sigma_g, clip_floor=cb.clip_floor)
        if noise_level is None:
            noise = ReadNoiseModel(level=self.noise.level, enabled=self.noise.enabled)
        else:
            noise = ReadNoiseModel(level=noise_level, enabled=noise_level > 0)
        e = self.encoder
        return EncoderConfig.chain(
            e.widths, e.points, e.k, coord_dim=self.coord_dim, concat_coords=e.concat_coords,
            activation=e.activation, seed=self.seed if seed is None else seed, electroform=ef, noise=noise,
            quant=Quantization(**asdict(self.quant)), g_scale=e.g_scale, pool_gain_norm=e.pool_gain_norm,
        )

    def decoder_config(self) -> DecoderConfig:
        d = self.decoder
        return DecoderConfig(widths=tuple(d.widths), m=d.m, activation=d.activation)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(mode=t.mode, lr=t.lr, epochs=t.epochs, batch_size=t.batch_size, l2=t.l2, seed=self.seed,
                           momentum=t.momentum, precondition=t.precondition, standardize=t.standardize)

    def dvs_config(self) -> DvsPreprocConfig:
        d = self.dvs
        return DvsPreprocConfig(window_len=d.window_len, step=d.step, denoise_window=d.denoise_window,
                                sample_count=d.sample_count, seed=self.seed, sensor_size=tuple(d.sensor_size),
                                neighbor_radius=d.neighbor_radius, denoise=d.denoise)

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "fashion-mnist": {
        "task": "classify-image",
        "data": {"source": "idx", "root": None},
        "encoder": {"widths": [64, 128, 256], "points": [512, 128, 0], "k": [16, 16, 16]},
    },
    "shape-images": {
        "task": "classify-image",
        "data": {"source": "synthetic", "kind": "shape-images", "count": 3000, "test_fraction": 1 / 3},
        "encoder": {"widths": [64, 128, 256], "points": [512, 128, 0], "k": [16, 16, 16]},
    },
    "dvs-gestures": {
        "task": "classify-events",
        "data": {"source": "synthetic", "kind": "moving-blob-gestures", "count": 480, "test_fraction": 0.2},
        "encoder": {"widths": [64, 128, 256], "points": [256, 128, 0], "k": [32, 32, 32]},
    },
    "shapes": {
        "task": "segment-shapes",
        "data": {"source": "synthetic", "kind": "two-part-shapes", "count": 600, "test_fraction": 1 / 6,
                 "n_points": 1024},
        "encoder": {"widths": [64, 128, 256], "points": [512, 128, 0], "k": [32, 32, 32]},
        "decoder": {"widths": [256, 256, 512]},
    },
    "shapenet": {
        "task": "segment-shapes",
        "data": {"source": "pts", "n_points": 2048},
        "encoder": {"widths": [64, 128, 256], "points": [512, 128, 0], "k": [32, 32, 32]},
        "decoder": {"widths": [256, 256, 512]},
    },
}

# the three default task configurations used for op counting
DEFAULT_TASK_PRESETS = ("shapenet", "dvs-gestures", "fashion-mnist")


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a section")
            out[key] = _merge(out[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


_SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig) if f.default_factory is not MISSING}


def from_dict(raw: dict | None) -> ExperimentConfig:
    raw = dict(raw or {})
    preset = raw.get("preset")
    base = asdict(ExperimentConfig())
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {', '.join(PRESETS)}")
        base = _merge(base, PRESETS[preset])
    merged = _merge(base, raw)
    kw = {k: v for k, v in merged.items() if k not in _SECTIONS}
    for name, factory in _SECTIONS.items():
        kw[name] = factory(**merged[name])
    cfg = ExperimentConfig(**kw)
    if cfg.data.source == "idx" and not cfg.data.root:
        cfg.data.root = os.environ.get(FASHION_ENV)
    return cfg.validate()


def preset_config(name: str, **overrides) -> ExperimentConfig:
    return from_dict({"preset": name, **overrides})


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg = from_dict(raw)
    for name in ("root", "train_manifest", "test_manifest"):
        val = getattr(cfg.data, name)
        if val and not Path(val).is_absolute():
            setattr(cfg.data, name, str(path.parent / val))
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
