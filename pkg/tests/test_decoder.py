import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deplm import streams
from deplm.decoder import DecoderConfig, build_decoder, decode, decode_batch, interpolate_features
from deplm.encoder import ConfigError, EncoderConfig, build_encoder, encode, encode_batch
from deplm.harness.config import preset_config
from deplm.harness.experiment import build_models
from deplm.ingest.synthetic import two_part_shape
from deplm.pointset import PointSet, nearest_batch


def small_enc(**kw):
    return build_encoder(EncoderConfig.chain([16, 24, 32], [12, 6, 0], [4, 3, 1], **kw))


def test_coincident_copies_feature():
    coarse = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    feats = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    out = interpolate_features(coarse[[1]], coarse, feats)
    assert out.tolist() == [[3.0, 4.0]]


def test_constant_field():
    rng = np.random.default_rng(0)
    coarse, fine = rng.normal(size=(7, 3)), rng.normal(size=(20, 3))
    v = np.array([0.25, -4.0])
    out = interpolate_features(fine, coarse, np.tile(v, (7, 1)))
    assert np.allclose(out, v, rtol=1e-12)


def test_midpoint():
    out = interpolate_features([[0.5]], [[0.0], [1.0]], [[0.0], [1.0]], m=2)
    assert out[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_empty_coarse():
    with pytest.raises(ValueError):
        interpolate_features(np.zeros((2, 2)), np.zeros((0, 2)), np.zeros((0, 1)))


def test_m_larger_than_coarse():
    out = interpolate_features([[0.2]], [[0.0], [1.0]], [[1.0], [1.0]], m=5)
    assert out[0, 0] == pytest.approx(1.0)


def test_linear_field_m1_coincident():
    rng = np.random.default_rng(1)
    coarse = rng.normal(size=(10, 3))
    field = coarse @ np.array([1.0, -2.0, 0.5]) + 3.0
    out = interpolate_features(coarse, coarse, field[:, None], m=1)
    assert np.allclose(out[:, 0], field, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)), elements=st.floats(-5, 5)),
       arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)), elements=st.floats(-5, 5)),
       st.integers(1, 4))
def test_weights_sum_to_one(fine, coarse, m):
    # interpolating one-hot features yields each fine point's weight vector
    out = interpolate_features(fine, coarse, np.eye(len(coarse)), m=m)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)
    assert (out >= 0).all()


def test_decoder_output_rows():
    enc = small_enc()
    dec = build_decoder(DecoderConfig(), enc)
    pts = np.random.default_rng(2).uniform(-1, 1, size=(40, 3))
    out = decode(encode(PointSet(pts), enc), dec)
    assert out.shape == (40, dec.out_dim)
    assert dec.cfg.widths == (32, 24, 16)


def test_decoder_shapenet_rows():
    cfg = preset_config("shapenet")
    enc, dec = build_models(cfg)
    pts = np.random.default_rng(3).uniform(-1, 1, size=(1, cfg.data.n_points, 3))
    out = decode_batch(encode_batch(pts, enc), dec)
    assert out.shape == (1, 2048, 512)


def test_degenerate_single_level():
    enc = build_encoder(EncoderConfig.chain([5], [0], [1]))
    dec = build_decoder(DecoderConfig(widths=(4,)), enc)
    p = np.array([[0.1, 0.2, -0.3]])
    tr = encode(PointSet(p), enc)
    out = decode(tr, dec)
    x = np.concatenate([tr.representation, p[0]])  # gains are 1 for a single point
    assert np.allclose(out[0], np.maximum(dec.weights[0] @ x, 0.0), rtol=1e-12)


def test_level_mismatch():
    enc = small_enc()
    with pytest.raises(ConfigError):
        build_decoder(DecoderConfig(widths=(8, 8)), enc)
    dec = build_decoder(DecoderConfig(), enc)
    tr = encode_batch(np.zeros((1, 40, 3)) + np.arange(40)[None, :, None] * 0.01, enc)
    tr.coords.pop()
    tr.feats.pop()
    with pytest.raises(ConfigError):
        decode_batch(tr, dec)


def test_inter_part_distance_exceeds_intra():
    enc = build_encoder(EncoderConfig.chain([64, 128, 256], [128, 32, 0], [16, 16, 1]))
    dec = build_decoder(DecoderConfig(), enc)
    pts, lab = two_part_shape(streams.stream(0, streams.SYNTHETIC, 0, 0), 512)
    f = decode(encode(PointSet(pts), enc), dec)
    f = (f - f.mean(0)) / (f.std(0) + 1e-12)
    D = np.sqrt(((f[:, None] - f[None]) ** 2).sum(-1))
    same = lab[:, None] == lab[None]
    off = ~np.eye(len(lab), dtype=bool)
    assert D[~same].mean() > D[same & off].mean()


def test_decode_determinism_and_permutation():
    enc = small_enc()
    dec = build_decoder(DecoderConfig(), enc)
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1, 1, size=(40, 3))
    perm = rng.permutation(40)
    a = decode(encode(PointSet(pts), enc), dec)
    b = decode(encode(PointSet(pts[perm]), enc), dec)
    assert np.array_equal(a, decode(encode(PointSet(pts), enc), dec))
    assert np.allclose(a[perm], b, rtol=1e-6, atol=1e-9)


def test_nearest_batch_sorted():
    rng = np.random.default_rng(5)
    idx, d = nearest_batch(rng.normal(size=(2, 9, 3)), rng.normal(size=(2, 6, 3)), 4)
    assert (np.diff(d, axis=-1) >= 0).all()
