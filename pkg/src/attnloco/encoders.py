"""Map encoders: the point-wise attention encoder and three ablation variants.

Every encoder is called as ``encoder(scan, proprio)`` with

* ``scan``: ``(N, L, W, 3)`` robot-frame points (or a single ``(L, W, 3)`` scan)
* ``proprio``: ``(N, d_obs)`` (or ``(d_obs,)`` / ``(1, d_obs)``)

and returns an :class:`EncoderOutput` whose ``encoding`` has width ``dim``.
Only :class:`AttentionMapEncoder` reports point-wise attention weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .nn import Conv2d, LayerNorm, Linear, Module, parameter
from .tensor import Tensor

ENCODER_KINDS = ("primary", "transformer", "cnn-downsample", "vit")


@dataclass(frozen=True)
class EncoderConfig:
    map_length: int = 26
    map_width: int = 16
    dim: int = 64
    heads: int = 16
    query_len: int = 1
    proprio_dim: int = 48
    cnn_hidden: int = 16
    kernel: int = 5

    def __post_init__(self):
        if self.map_length < 1 or self.map_width < 1:
            raise ConfigurationError(f"map must have at least one point, got {self.map_length}x{self.map_width}")
        if self.heads < 1 or self.dim % self.heads:
            raise ConfigurationError(f"dim={self.dim} is not divisible by heads={self.heads}")
        if self.query_len != 1:
            raise ConfigurationError("only a single proprioception query (query_len=1) is supported")
        if self.dim <= 3:
            raise ConfigurationError(f"dim must exceed the 3 coordinate channels, got {self.dim}")
        if self.kernel % 2 == 0:
            raise ConfigurationError(f"kernel size must be odd, got {self.kernel}")
        if self.proprio_dim < 1 or self.cnn_hidden < 1:
            raise ConfigurationError("proprio_dim and cnn_hidden must be positive")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def num_points(self) -> int:
        return self.map_length * self.map_width


@dataclass
class EncoderOutput:
    """``encoding``: (N, dim) or (1, dim) for a single input.

    ``attention``: (N, heads, 1, L*W) per-head weights, or (heads, 1, L*W)
    for a single input; ``None`` for encoders without point-wise attention.
    ``proprio_embedding`` has the same leading shape as ``encoding``.
    """

    encoding: Tensor
    attention: np.ndarray | None
    proprio_embedding: Tensor

    def head_averaged(self) -> np.ndarray:
        if self.attention is None:
            raise ValueError("encoder does not expose point-wise attention")
        return self.attention.mean(axis=-3)[..., 0, :]


def _batch_inputs(scan, proprio, config: EncoderConfig):
    scan = np.asarray(scan.data if isinstance(scan, Tensor) else scan)
    single = scan.ndim == 3
    if single:
        scan = scan[None]
    if scan.ndim != 4 or scan.shape[1:] != (config.map_length, config.map_width, 3):
        raise ConfigurationError(
            f"map scan shape {scan.shape[-3:] if scan.ndim >= 3 else scan.shape} does not match "
            f"configured {config.map_length}x{config.map_width}x3"
        )
    proprio = T.as_tensor(proprio)
    if proprio.ndim == 1:
        proprio = proprio.reshape(1, -1)
    if proprio.shape[-1] != config.proprio_dim:
        raise ConfigurationError(f"proprioception has {proprio.shape[-1]} entries, configured {config.proprio_dim}")
    if proprio.shape[0] != scan.shape[0]:
        raise ConfigurationError(f"batch mismatch: {scan.shape[0]} scans vs {proprio.shape[0]} proprio rows")
    return scan, proprio, single


def _finish(encoding: Tensor, attention, embedding: Tensor, single: bool) -> EncoderOutput:
    if single and attention is not None:
        attention = attention[0]
    return EncoderOutput(encoding, attention, embedding)


class AttentionProjections(Module):
    """Full d x d query/key/value/output projections."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.query = Linear(dim, dim, rng, gain=1.0)
        self.key = Linear(dim, dim, rng, gain=1.0)
        self.value = Linear(dim, dim, rng, gain=1.0)
        self.out = Linear(dim, dim, rng, gain=1.0)


def multi_head_attention(queries: Tensor, keys_values: Tensor, proj: AttentionProjections, heads: int):
    """Scaled dot-product attention over ``heads`` heads.

    queries: (N, nq, d); keys_values: (N, nk, d).
    Returns the projected output (N, nq, d) and weights (N, heads, nq, nk).
    """
    n, nq, d = queries.shape
    nk = keys_values.shape[1]
    dh = d // heads
    q = T.transpose(proj.query(queries).reshape(n, nq, heads, dh), (0, 2, 1, 3))
    k = T.transpose(proj.key(keys_values).reshape(n, nk, heads, dh), (0, 2, 3, 1))
    v = T.transpose(proj.value(keys_values).reshape(n, nk, heads, dh), (0, 2, 1, 3))
    weights = T.softmax(T.matmul(q, k) * (1.0 / np.sqrt(dh)), axis=-1)
    mixed = T.transpose(T.matmul(weights, v), (0, 2, 1, 3)).reshape(n, nq, d)
    return proj.out(mixed), weights.data


class LocalFeatureCNN(Module):
    """Two same-padding convolutions over the height channel."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        pad = config.kernel // 2
        self.conv1 = Conv2d(1, config.cnn_hidden, config.kernel, rng, padding=pad)
        self.conv2 = Conv2d(config.cnn_hidden, config.dim - 3, config.kernel, rng, padding=pad)


class AttentionMapEncoder(Module):
    """CNN point features + coordinates, queried by the proprioception embedding."""

    kind = "primary"

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        self.cnn = LocalFeatureCNN(config, rng)
        self.proprio = Linear(config.proprio_dim, config.dim, rng, gain=1.0)
        self.attn = AttentionProjections(config.dim, rng)

    def __call__(self, scan, proprio) -> EncoderOutput:
        return encode(scan, proprio, self)


def extract_local_features(scan, weights: AttentionMapEncoder) -> Tensor:
    """(N, L, W, 3) scan -> (N, L*W, d) point-wise features (CNN channels then x, y, z)."""
    cfg = weights.config
    scan = np.asarray(scan)
    single = scan.ndim == 3
    batch = scan[None] if single else scan
    if batch.ndim != 4 or batch.shape[1:] != (cfg.map_length, cfg.map_width, 3):
        raise ConfigurationError(f"map scan shape {scan.shape} does not match configured {cfg.map_length}x{cfg.map_width}x3")
    n = batch.shape[0]
    z = Tensor(batch[..., 2][:, None])
    h = T.elu(weights.cnn.conv1(z))
    h = T.elu(weights.cnn.conv2(h))
    h = T.transpose(h, (0, 2, 3, 1)).reshape(n, cfg.num_points, cfg.dim - 3)
    coords = Tensor(batch.reshape(n, cfg.num_points, 3))
    feats = T.concat([h, coords], axis=-1)
    return feats[0] if single else feats


def embed_proprioception(proprio, weights: AttentionMapEncoder) -> Tensor:
    proprio = T.as_tensor(proprio)
    cfg = weights.config
    if proprio.shape[-1] != cfg.proprio_dim:
        raise ConfigurationError(f"proprioception has {proprio.shape[-1]} entries, configured {cfg.proprio_dim}")
    if proprio.ndim == 1:
        proprio = proprio.reshape(1, -1)
    return weights.proprio(proprio)


def mha_forward(query: Tensor, keys_values: Tensor, weights: AttentionMapEncoder) -> tuple[Tensor, np.ndarray]:
    """Attention of the (N, 1, d) query over (N, L*W, d) point features.

    Unbatched ``(1, d)`` / ``(L*W, d)`` inputs give a ``(1, d)`` encoding and
    ``(h, 1, L*W)`` weights.
    """
    query, keys_values = T.as_tensor(query), T.as_tensor(keys_values)
    single = keys_values.ndim == 2
    if single:
        query = query.reshape(1, *query.shape)
        keys_values = keys_values.reshape(1, *keys_values.shape)
    if query.shape[-1] != weights.config.dim or keys_values.shape[-1] != weights.config.dim:
        raise DimensionError(f"attention inputs {query.shape} / {keys_values.shape} do not have width {weights.config.dim}")
    out, attn = multi_head_attention(query, keys_values, weights.attn, weights.config.heads)
    if single:
        return out[0], attn[0]
    return out, attn


def encode(scan, proprio, weights: AttentionMapEncoder) -> EncoderOutput:
    cfg = weights.config
    scan, proprio, single = _batch_inputs(scan, proprio, cfg)
    feats = extract_local_features(scan, weights)
    emb = embed_proprioception(proprio, weights)
    n = emb.shape[0]
    out, attn = mha_forward(emb.reshape(n, 1, cfg.dim), feats, weights)
    return _finish(out.reshape(n, cfg.dim), attn, emb, single)


class TransformerBlock(Module):
    """Post-norm transformer encoder block: self-attention and feed-forward, each residual."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, hidden: int | None = None):
        self.heads = heads
        self.attn = AttentionProjections(dim, rng)
        self.norm1 = LayerNorm(dim)
        self.ff1 = Linear(dim, hidden or dim, rng)
        self.ff2 = Linear(hidden or dim, dim, rng, gain=1.0)
        self.norm2 = LayerNorm(dim)

    def __call__(self, x: Tensor) -> tuple[Tensor, np.ndarray]:
        sa, weights = multi_head_attention(x, x, self.attn, self.heads)
        x = self.norm1(x + sa)
        x = self.norm2(x + self.ff2(T.elu(self.ff1(x))))
        return x, weights


class TransformerAblationEncoder(Module):
    """Map tokens from the local-feature CNN plus a proprioception token through one transformer block."""

    kind = "transformer"

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        self.cnn = LocalFeatureCNN(config, rng)
        self.proprio = Linear(config.proprio_dim, config.dim, rng, gain=1.0)
        self.block = TransformerBlock(config.dim, config.heads, rng)

    def __call__(self, scan, proprio) -> EncoderOutput:
        cfg = self.config
        scan, proprio, single = _batch_inputs(scan, proprio, cfg)
        n = scan.shape[0]
        feats = extract_local_features(scan, self)
        emb = self.proprio(proprio)
        tokens = T.concat([emb.reshape(n, 1, cfg.dim), feats], axis=1)
        out, _ = self.block(tokens)
        return _finish(out[:, 0, :], None, emb, single)


def cnn_downsample_shape(length: int, width: int, kernels=(5, 7)) -> list[tuple[int, int]]:
    """Spatial extents after each valid (padding 0, stride 1) convolution."""
    shapes = []
    for k in kernels:
        length = T.conv_output_size(length, k, 0, 1)
        width = T.conv_output_size(width, k, 0, 1)
        shapes.append((length, width))
    return shapes


class CNNDownsampleEncoder(Module):
    """Two valid convolutions (k=5, k=7) shrink the map; flattened features + proprio -> d."""

    kind = "cnn-downsample"

    def __init__(self, config: EncoderConfig, rng: np.random.Generator, channels=(16, 16)):
        self.config = config
        (l1, w1), (l2, w2) = cnn_downsample_shape(config.map_length, config.map_width)
        self.conv1 = Conv2d(1, channels[0], 5, rng)
        self.conv2 = Conv2d(channels[0], channels[1], 7, rng)
        self.proprio = Linear(config.proprio_dim, config.dim, rng, gain=1.0)
        self.flat_dim = channels[1] * l2 * w2
        self.head = Linear(self.flat_dim + config.dim, config.dim, rng, gain=1.0)

    def __call__(self, scan, proprio) -> EncoderOutput:
        cfg = self.config
        scan, proprio, single = _batch_inputs(scan, proprio, cfg)
        n = scan.shape[0]
        h = T.elu(self.conv1(Tensor(scan[..., 2][:, None])))
        h = T.elu(self.conv2(h)).reshape(n, self.flat_dim)
        emb = self.proprio(proprio)
        return _finish(self.head(T.concat([h, emb], axis=-1)), None, emb, single)


def vit_patch_grid(length: int, width: int, patch: int = 2) -> tuple[int, int]:
    """Patch rows/columns after edge-replicating odd extents up to a multiple of ``patch``."""
    return -(-length // patch), -(-width // patch)


class ViTAblationEncoder(Module):
    """Non-overlapping 2x2 patches, learned positional embedding, one transformer block, mean pool."""

    kind = "vit"
    patch = 2

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        rows, cols = vit_patch_grid(config.map_length, config.map_width, self.patch)
        self.num_tokens = rows * cols
        self.embed = Linear(self.patch * self.patch * 3, config.dim, rng, gain=1.0)
        self.position = parameter(0.02 * rng.standard_normal((self.num_tokens, config.dim)))
        self.block = TransformerBlock(config.dim, config.heads, rng)
        self.proprio = Linear(config.proprio_dim, config.dim, rng, gain=1.0)
        self.head = Linear(2 * config.dim, config.dim, rng, gain=1.0)

    def patches(self, scan: np.ndarray) -> np.ndarray:
        p = self.patch
        n, length, width, _ = scan.shape
        pad_l, pad_w = (-length) % p, (-width) % p
        if pad_l or pad_w:
            scan = np.pad(scan, ((0, 0), (0, pad_l), (0, pad_w), (0, 0)), mode="edge")
        rows, cols = scan.shape[1] // p, scan.shape[2] // p
        x = scan.reshape(n, rows, p, cols, p, 3).transpose(0, 1, 3, 2, 4, 5)
        return x.reshape(n, rows * cols, p * p * 3)

    def __call__(self, scan, proprio) -> EncoderOutput:
        cfg = self.config
        scan, proprio, single = _batch_inputs(scan, proprio, cfg)
        tokens = self.embed(Tensor(self.patches(scan))) + self.position
        out, _ = self.block(tokens)
        pooled = out.mean(axis=1)
        emb = self.proprio(proprio)
        return _finish(self.head(T.concat([pooled, emb], axis=-1)), None, emb, single)


def build_encoder(kind: str, config: EncoderConfig, rng: np.random.Generator) -> Module:
    classes = {
        "primary": AttentionMapEncoder,
        "transformer": TransformerAblationEncoder,
        "cnn-downsample": CNNDownsampleEncoder,
        "vit": ViTAblationEncoder,
    }
    if kind not in classes:
        raise ConfigurationError(f"unknown encoder {kind!r}; expected one of {ENCODER_KINDS}")
    return classes[kind](config, rng)
