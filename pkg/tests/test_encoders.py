import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attnloco import tensor as T
from attnloco.encoders import (
    ENCODER_KINDS,
    AttentionMapEncoder,
    EncoderConfig,
    build_encoder,
    cnn_downsample_shape,
    embed_proprioception,
    extract_local_features,
    mha_forward,
    vit_patch_grid,
)
from attnloco.errors import ConfigurationError, DimensionError
from oracles import naive_attention

SMALL = EncoderConfig(map_length=6, map_width=5, dim=8, heads=2, proprio_dim=7, cnn_hidden=3, kernel=3)


def _inputs(rng, cfg, n=None):
    lead = () if n is None else (n,)
    scan = rng.standard_normal((*lead, cfg.map_length, cfg.map_width, 3))
    return scan, rng.standard_normal((*lead, cfg.proprio_dim))


def test_reference_quadruped_shapes(rng):
    cfg = EncoderConfig(map_length=26, map_width=16, dim=64, heads=16, proprio_dim=48)
    enc = AttentionMapEncoder(cfg, rng)
    scan, proprio = _inputs(rng, cfg)
    out = enc(scan, proprio)
    assert out.encoding.shape == (1, 64)
    assert out.attention.shape == (16, 1, 416)
    assert cfg.head_dim == 4
    assert extract_local_features(scan, enc).shape == (416, 64)


def test_cnn_preserves_spatial_extent(rng):
    enc = AttentionMapEncoder(SMALL, rng)
    scan, _ = _inputs(rng, SMALL, n=3)
    feats = extract_local_features(scan, enc)
    assert feats.shape == (3, SMALL.num_points, SMALL.dim)
    # the last three channels are the raw point coordinates
    np.testing.assert_allclose(feats.data[..., -3:], scan.reshape(3, -1, 3).astype(feats.data.dtype))


def test_attention_matches_per_head_loop(rng):
    with T.precision(np.float64):
        enc = AttentionMapEncoder(SMALL, rng).astype(np.float64)
        scan, proprio = _inputs(rng, SMALL)
        feats = extract_local_features(scan, enc).data
        emb = embed_proprioception(proprio, enc).data
        out = enc(scan, proprio)
    a = enc.attn
    q = emb @ a.query.weight.data + a.query.bias.data
    k = feats @ a.key.weight.data + a.key.bias.data
    v = feats @ a.value.weight.data + a.value.bias.data
    mixed, weights = naive_attention(q, k, v, SMALL.heads)
    np.testing.assert_allclose(out.encoding.data, mixed @ a.out.weight.data + a.out.bias.data, atol=1e-12)
    np.testing.assert_allclose(out.attention, weights, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_key_value_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    with T.precision(np.float64):
        enc = AttentionMapEncoder(SMALL, rng).astype(np.float64)
        feats = rng.standard_normal((SMALL.num_points, SMALL.dim))
        query = rng.standard_normal((1, SMALL.dim))
        out, attn = mha_forward(query, feats, enc)
        perm = rng.permutation(SMALL.num_points)
        out_p, attn_p = mha_forward(query, feats[perm], enc)
    np.testing.assert_allclose(out_p.data, out.data, atol=1e-12)
    np.testing.assert_allclose(attn_p, attn[..., perm], atol=1e-12)


@given(st.integers(0, 10_000))
def test_attention_rows_are_distributions(seed):
    rng = np.random.default_rng(seed)
    enc = AttentionMapEncoder(SMALL, rng)
    scan, proprio = _inputs(rng, SMALL, n=2)
    w = enc(scan * 3, proprio * 3).attention
    assert (w >= 0).all()
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)


def test_batched_equals_single(rng):
    with T.precision(np.float64):
        enc = AttentionMapEncoder(SMALL, rng).astype(np.float64)
        scan, proprio = _inputs(rng, SMALL, n=3)
        batch = enc(scan, proprio)
        for i in range(3):
            single = enc(scan[i], proprio[i])
            np.testing.assert_allclose(single.encoding.data[0], batch.encoding.data[i], atol=1e-12)
            np.testing.assert_allclose(single.attention, batch.attention[i], atol=1e-12)


def test_head_averaged_weights(rng):
    enc = AttentionMapEncoder(SMALL, rng)
    out = enc(*_inputs(rng, SMALL, n=2))
    avg = out.head_averaged()
    assert avg.shape == (2, SMALL.num_points)
    np.testing.assert_allclose(avg.sum(axis=-1), 1.0, atol=1e-6)


@pytest.mark.parametrize("kind", ENCODER_KINDS)
def test_every_encoder_has_the_same_output_width(rng, kind):
    cfg = EncoderConfig(map_length=11, map_width=11, dim=8, heads=2, proprio_dim=7, cnn_hidden=3, kernel=3)
    enc = build_encoder(kind, cfg, rng)
    out = enc(*_inputs(rng, cfg, n=4))
    assert out.encoding.shape == (4, 8)
    assert out.proprio_embedding.shape == (4, 8)
    assert (out.attention is not None) == (kind == "primary")


def test_cnn_downsample_documented_cases():
    assert cnn_downsample_shape(26, 16) == [(22, 12), (16, 6)]
    assert cnn_downsample_shape(11, 11) == [(7, 7), (1, 1)]
    with pytest.raises(DimensionError):
        cnn_downsample_shape(10, 10)
    with pytest.raises(DimensionError):
        build_encoder("cnn-downsample", EncoderConfig(map_length=10, map_width=10, dim=8, heads=2), np.random.default_rng(0))


def test_vit_patch_grid_pads_odd_extents():
    assert vit_patch_grid(26, 16) == (13, 8)
    assert vit_patch_grid(17, 11) == (9, 6)


@pytest.mark.parametrize(
    "kwargs",
    [dict(dim=10, heads=4), dict(query_len=2), dict(kernel=4), dict(dim=3, heads=1), dict(map_length=0)],
)
def test_invalid_encoder_config(kwargs):
    with pytest.raises(ConfigurationError):
        EncoderConfig(**kwargs)


def test_wrong_scan_shape_is_reported(rng):
    enc = AttentionMapEncoder(SMALL, rng)
    with pytest.raises(ConfigurationError, match="does not match"):
        enc(np.zeros((2, 5, 5, 3)), np.zeros((2, 7)))
    with pytest.raises(ConfigurationError, match="proprioception"):
        enc(np.zeros((2, 6, 5, 3)), np.zeros((2, 6)))


def test_unknown_encoder_kind(rng):
    with pytest.raises(ConfigurationError):
        build_encoder("mlp", SMALL, rng)
