"""Deep extreme point learning on simulated random resistive memory."""

from deplm.pointset import PointSet, GroupIndex, farthest_point_sampling, knn_group, sum_pool
from deplm.rram import (
    ConductanceMatrix,
    DifferentialCrossbar,
    ElectroformParams,
    ReadNoiseModel,
    electroform,
    expected_weight_noise_std,
    pair_to_weights,
    read_vmm,
)
from deplm.encoder import Encoder, EncoderConfig, EncoderTrace, StageConfig, build_encoder, encode
from deplm.decoder import Decoder, DecoderConfig, build_decoder, decode, interpolate_features
from deplm.readout import ReadoutModel, TrainConfig, predict, train_readout

__version__ = "0.1.0"
