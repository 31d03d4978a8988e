"""The clip classifier: a shared per-frame CNN feeding an LSTM.

Every frame of a window passes through the same convolutional feature
extractor (one parameter set regardless of sequence length), the per-frame
embeddings run through an LSTM in time order, and the final hidden state
drives a single sigmoid unit. Probabilities are clipped to
[1e-7, 1 - 1e-7] so downstream log-losses stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, SizeError
from . import ops
from .lstm import lstm_backward, lstm_forward

PROB_EPS = 1e-7


@dataclass(frozen=True)
class ConvBlock:
    filters: int
    kernel: int = 3
    pool: int = 2

    def __post_init__(self):
        if self.filters < 1:
            raise ConfigError("model.conv_blocks.filters", f"must be >= 1, got {self.filters}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ConfigError("model.conv_blocks.kernel", f"must be odd and >= 1, got {self.kernel}")
        if self.pool != 2:
            raise ConfigError("model.conv_blocks.pool", f"only pool=2 supported, got {self.pool}")


@dataclass(frozen=True)
class ModelConfig:
    T: int = 7
    height: int = 64
    width: int = 64
    channels: int = 1
    conv_blocks: tuple[ConvBlock, ...] = (ConvBlock(16), ConvBlock(32))
    frame_embedding: int = 64
    lstm_hidden: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.T < 2:
            raise ConfigError("model.T", f"sequence length must be >= 2, got {self.T}")
        for name in ("height", "width", "channels", "frame_embedding", "lstm_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name}", f"must be >= 1, got {getattr(self, name)}")
        blocks = tuple(
            b if isinstance(b, ConvBlock) else ConvBlock(**b) for b in self.conv_blocks
        )
        object.__setattr__(self, "conv_blocks", blocks)
        shrink = 2 ** len(blocks)
        if self.height % shrink or self.width % shrink:
            raise ConfigError(
                "model.conv_blocks",
                f"spatial dims {self.height}x{self.width} not divisible by pooling factor {shrink}",
            )

    @property
    def flat_features(self) -> int:
        shrink = 2 ** len(self.conv_blocks)
        ch = self.conv_blocks[-1].filters if self.conv_blocks else self.channels
        return (self.height // shrink) * (self.width // shrink) * ch

    def to_dict(self):
        return {
            "T": self.T,
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "conv_blocks": [
                {"filters": b.filters, "kernel": b.kernel, "pool": b.pool} for b in self.conv_blocks
            ],
            "frame_embedding": self.frame_embedding,
            "lstm_hidden": self.lstm_hidden,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        if "conv_blocks" in d:
            d["conv_blocks"] = tuple(ConvBlock(**b) for b in d["conv_blocks"])
        return ModelConfig(**d)


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(config: ModelConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    """Glorot-uniform parameters from the config seed; forget bias is 1."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    params: dict[str, np.ndarray] = {}
    cin = config.channels
    for n, blk in enumerate(config.conv_blocks):
        k = blk.kernel
        params[f"conv{n}_w"] = _glorot(
            rng, (k, k, cin, blk.filters), k * k * cin, k * k * blk.filters, dtype
        )
        params[f"conv{n}_b"] = np.zeros(blk.filters, dtype=dtype)
        cin = blk.filters
    flat = config.flat_features
    emb = config.frame_embedding
    params["embed_w"] = _glorot(rng, (flat, emb), flat, emb, dtype)
    params["embed_b"] = np.zeros(emb, dtype=dtype)
    m = config.lstm_hidden
    params["lstm_wx"] = _glorot(rng, (emb, 4 * m), emb, 4 * m, dtype)
    params["lstm_wh"] = _glorot(rng, (m, 4 * m), m, 4 * m, dtype)
    bias = np.zeros(4 * m, dtype=dtype)
    bias[m : 2 * m] = 1.0
    params["lstm_b"] = bias
    params["out_w"] = _glorot(rng, (m, 1), m, 1, dtype)
    params["out_b"] = np.zeros(1, dtype=dtype)
    return params


def parameter_count(params: dict[str, np.ndarray]) -> int:
    return int(sum(p.size for p in params.values()))


def forward_batch(params, config: ModelConfig, x):
    """Classify a batch of windows.

    ``x`` is (B, T, H, W, C); returns (p of shape (B,), cache for backward).
    """
    batch = x.shape[0]
    expected = (config.T, config.height, config.width, config.channels)
    if x.shape[1:] != expected:
        raise SizeError(f"input shape {x.shape[1:]} does not match config {expected}")
    frames = x.reshape((batch * config.T,) + expected[1:])

    conv_caches = []
    cur = frames
    for n in range(len(config.conv_blocks)):
        z = ops.conv2d_forward(cur, params[f"conv{n}_w"], params[f"conv{n}_b"])
        a = ops.relu(z)
        pooled, idx = ops.maxpool2_forward(a)
        conv_caches.append((cur, z, a.shape, idx))
        cur = pooled

    flat = cur.reshape(batch * config.T, -1)
    emb, emb_z = ops.dense_forward(flat, params["embed_w"], params["embed_b"], "relu")
    seq = emb.reshape(batch, config.T, config.frame_embedding)
    h_last, lstm_caches = lstm_forward(seq, params["lstm_wx"], params["lstm_wh"], params["lstm_b"])
    logit, out_z = ops.dense_forward(h_last, params["out_w"], params["out_b"], "none")
    p = ops.sigmoid(logit[:, 0])
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    cache = (x.shape, frames.shape, conv_caches, cur.shape, flat, emb_z, h_last, lstm_caches, out_z, p)
    return p, cache


def backward_batch(params, config: ModelConfig, cache, dp):
    """Gradients of forward_batch with respect to every parameter.

    ``dp`` is dLoss/dp per batch element; returns a dict keyed like params.
    """
    (x_shape, frames_shape, conv_caches, pooled_shape, flat, emb_z, h_last, lstm_caches, out_z, p) = cache
    batch = x_shape[0]
    grads: dict[str, np.ndarray] = {}

    dlogit = (dp * p * (1.0 - p))[:, None]
    dh_last, grads["out_w"], grads["out_b"] = ops.dense_backward(
        h_last, params["out_w"], out_z, dlogit, "none"
    )
    dseq, grads["lstm_wx"], grads["lstm_wh"], grads["lstm_b"] = lstm_backward(
        dh_last, lstm_caches, params["lstm_wx"], params["lstm_wh"]
    )
    demb = dseq.reshape(batch * config.T, config.frame_embedding)
    dflat, grads["embed_w"], grads["embed_b"] = ops.dense_backward(
        flat, params["embed_w"], emb_z, demb, "relu"
    )
    dcur = dflat.reshape(pooled_shape)
    for n in range(len(config.conv_blocks) - 1, -1, -1):
        cur_in, z, a_shape, idx = conv_caches[n]
        da = ops.maxpool2_backward(a_shape, idx, dcur)
        dz = ops.relu_backward(z, da)
        dcur, grads[f"conv{n}_w"], grads[f"conv{n}_b"] = ops.conv2d_backward(
            cur_in, params[f"conv{n}_w"], dz, need_dx=(n > 0)
        )
    return grads


def forward(params, config: ModelConfig, clip_frames) -> float:
    """Probability for one window of shape (T, H, W) or (T, H, W, C)."""
    x = np.asarray(clip_frames)
    if x.ndim == 3:
        x = x[:, :, :, None]
    p, _ = forward_batch(params, config, x[None].astype(params["out_w"].dtype, copy=False))
    return float(p[0])
