"""Patch U-Net: configuration, weight init, forward pass, backpropagation.

Architecture, for ``depth`` encoder blocks on a ``patch_size`` input:

* encoder block l (channels ``base * 2**l``): two 3x3 convolutions, each
  followed by ReLU, then inverted dropout; 2x2 max-pooling between blocks,
  so block l sees resolution ``patch_size / 2**l``.
* decoder level l: 2x nearest-neighbor upsample, 3x3 convolution + ReLU
  down to the encoder-l width, concatenation with the encoder-l output
  (skip connection), then two 3x3 convolutions with ReLU.
* head: 1x1 convolution to per-class logits at full patch resolution.

Weights start as fan-in-scaled uniform noise U(-1/sqrt(fan_in), +1/sqrt(fan_in))
from the seeded generator; biases start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, ProtocolError, ValidationError
from . import ops


@dataclass
class UNetConfig:
    n_classes: int
    patch_size: int = 16
    in_channels: int = 8
    depth: int = 5
    base_channels: int = 8
    dropout_rate: float = 0.2
    learning_rate: float = 0.01
    epochs: int = 1000
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValidationError("n_classes must be >= 1")
        if self.depth < 1:
            raise ValidationError("depth must be >= 1")
        down = 2 ** (self.depth - 1)
        if self.patch_size % down != 0:
            raise ValidationError(
                f"patch_size {self.patch_size} must be divisible by 2^(depth-1)={down}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.base_channels < 1 or self.in_channels < 1:
            raise ValidationError("channel counts must be >= 1")

    def channels(self) -> list[int]:
        return [self.base_channels * (2 ** l) for l in range(self.depth)]

    def to_meta(self) -> dict:
        return {
            "n_classes": self.n_classes, "patch_size": self.patch_size,
            "in_channels": self.in_channels, "depth": self.depth,
            "base_channels": self.base_channels, "dropout_rate": self.dropout_rate,
            "learning_rate": self.learning_rate, "epochs": self.epochs,
            "batch_size": self.batch_size, "seed": self.seed,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "UNetConfig":
        return cls(**meta)


def param_order(config: UNetConfig) -> list[str]:
    """Canonical parameter naming/ordering used by init, SGD and checkpoints."""
    names = []
    for l in range(config.depth):
        names += [f"enc{l}_c1_W", f"enc{l}_c1_b", f"enc{l}_c2_W", f"enc{l}_c2_b"]
    for l in range(config.depth - 2, -1, -1):
        names += [f"up{l}_W", f"up{l}_b"]
        names += [f"dec{l}_c1_W", f"dec{l}_c1_b", f"dec{l}_c2_W", f"dec{l}_c2_b"]
    names += ["head_W", "head_b"]
    return names


@dataclass(eq=False)
class UNetModel:
    config: UNetConfig
    params: dict[str, np.ndarray]
    loss_history: list[float] = field(default_factory=list)

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def predict_logits(self, batch: np.ndarray) -> np.ndarray:
        return unet_forward(self, batch, training=False)


def _uniform_kernel(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def unet_init(config: UNetConfig) -> UNetModel:
    """Fresh model with seeded fan-in-scaled uniform weights and zero biases."""
    rng = np.random.default_rng(config.seed)
    ch = config.channels()
    params: dict[str, np.ndarray] = {}

    def conv3(name, cin, cout):
        params[name + "_W"] = _uniform_kernel(rng, (3, 3, cin, cout), 9 * cin)
        params[name + "_b"] = np.zeros(cout, dtype=np.float32)

    for l in range(config.depth):
        cin = config.in_channels if l == 0 else ch[l - 1]
        conv3(f"enc{l}_c1", cin, ch[l])
        conv3(f"enc{l}_c2", ch[l], ch[l])
    for l in range(config.depth - 2, -1, -1):
        conv3(f"up{l}", ch[l + 1], ch[l])
        conv3(f"dec{l}_c1", 2 * ch[l], ch[l])
        conv3(f"dec{l}_c2", ch[l], ch[l])
    params["head_W"] = _uniform_kernel(rng, (ch[0], config.n_classes), ch[0])
    params["head_b"] = np.zeros(config.n_classes, dtype=np.float32)
    return UNetModel(config, params)


@dataclass
class _BlockCache:
    xp1: np.ndarray
    mask1: np.ndarray
    xp2: np.ndarray
    mask2: np.ndarray
    drop: object


@dataclass
class _DecoderCache:
    up_shape: tuple
    xp_up: np.ndarray
    mask_up: np.ndarray
    split: int
    xp1: np.ndarray
    mask1: np.ndarray
    xp2: np.ndarray
    mask2: np.ndarray


@dataclass
class _Tape:
    enc: list[_BlockCache]
    pools: list[object]
    dec: list[_DecoderCache]   # indexed by decoder level l (0..depth-2)
    head_in: np.ndarray
    batch_shape: tuple


def _encoder_block(params, name, x, rate, training, rng):
    h, xp1 = ops.conv3x3_forward(x, params[f"{name}_c1_W"], params[f"{name}_c1_b"])
    h, mask1 = ops.relu_forward(h)
    h, xp2 = ops.conv3x3_forward(h, params[f"{name}_c2_W"], params[f"{name}_c2_b"])
    h, mask2 = ops.relu_forward(h)
    h, drop = ops.dropout_forward(h, rate, rng, training)
    return h, _BlockCache(xp1, mask1, xp2, mask2, drop)


def unet_forward(model: UNetModel, batch: np.ndarray, training: bool = False,
                 seed: int = 0, return_cache: bool = False):
    """Run the network; returns logits (n, patch, patch, n_classes).

    Inference (``training=False``) is deterministic; with training enabled the
    dropout masks come from a generator seeded with ``seed``.  Request
    ``return_cache`` to keep the activations needed by :func:`unet_backward`.
    """
    cfg = model.config
    x = np.asarray(batch)
    if x.ndim != 4 or x.shape[1:] != (cfg.patch_size, cfg.patch_size, cfg.in_channels):
        raise DimensionError(
            f"batch shape {x.shape} does not match "
            f"(n, {cfg.patch_size}, {cfg.patch_size}, {cfg.in_channels})"
        )
    rng = np.random.default_rng(seed)
    p = model.params
    enc_caches: list[_BlockCache] = []
    pool_caches: list[object] = []
    skips: list[np.ndarray] = []
    h = x
    for l in range(cfg.depth):
        h, cache = _encoder_block(p, f"enc{l}", h, cfg.dropout_rate, training, rng)
        enc_caches.append(cache)
        if l < cfg.depth - 1:
            skips.append(h)
            h, pc = ops.maxpool2_forward(h)
            pool_caches.append(pc)
    dec_caches: list[_DecoderCache | None] = [None] * max(cfg.depth - 1, 0)
    for l in range(cfg.depth - 2, -1, -1):
        h, up_shape = ops.upsample2_forward(h)
        h, xp_up = ops.conv3x3_forward(h, p[f"up{l}_W"], p[f"up{l}_b"])
        h, mask_up = ops.relu_forward(h)
        h, split = ops.concat_forward(h, skips[l])
        h, xp1 = ops.conv3x3_forward(h, p[f"dec{l}_c1_W"], p[f"dec{l}_c1_b"])
        h, mask1 = ops.relu_forward(h)
        h, xp2 = ops.conv3x3_forward(h, p[f"dec{l}_c2_W"], p[f"dec{l}_c2_b"])
        h, mask2 = ops.relu_forward(h)
        dec_caches[l] = _DecoderCache(up_shape, xp_up, mask_up, split, xp1, mask1, xp2, mask2)
    logits, head_in = ops.conv1x1_forward(h, p["head_W"], p["head_b"])
    if return_cache:
        return logits, _Tape(enc_caches, pool_caches, dec_caches, head_in, x.shape)
    return logits


def unet_backward(model: UNetModel, cache, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for every kernel and bias.

    ``cache`` must come from ``unet_forward(..., return_cache=True)`` on the
    same batch.
    """
    if not isinstance(cache, _Tape):
        raise ProtocolError("backward needs the cache returned by the forward pass")
    cfg = model.config
    p = model.params
    grads: dict[str, np.ndarray] = {}

    g, grads["head_W"], grads["head_b"] = ops.conv1x1_backward(
        cache.head_in, p["head_W"], grad_logits
    )

    # decoder levels were executed depth-2 .. 0; reverse that
    skip_grads: list[np.ndarray | None] = [None] * max(cfg.depth - 1, 0)
    for l in range(cfg.depth - 1):
        dc = cache.dec[l]
        g = ops.relu_backward(dc.mask2, g)
        g, grads[f"dec{l}_c2_W"], grads[f"dec{l}_c2_b"] = ops.conv3x3_backward(
            dc.xp2, p[f"dec{l}_c2_W"], g
        )
        g = ops.relu_backward(dc.mask1, g)
        g, grads[f"dec{l}_c1_W"], grads[f"dec{l}_c1_b"] = ops.conv3x3_backward(
            dc.xp1, p[f"dec{l}_c1_W"], g
        )
        g, g_skip = ops.concat_backward(dc.split, g)
        skip_grads[l] = g_skip
        g = ops.relu_backward(dc.mask_up, g)
        g, grads[f"up{l}_W"], grads[f"up{l}_b"] = ops.conv3x3_backward(
            dc.xp_up, p[f"up{l}_W"], g
        )
        g = ops.upsample2_backward(dc.up_shape, g)

    # encoder, bottleneck first
    for l in range(cfg.depth - 1, -1, -1):
        if l < cfg.depth - 1:
            g = ops.maxpool2_backward(cache.pools[l], g)
            g = g + skip_grads[l]
        bc = cache.enc[l]
        g = ops.dropout_backward(bc.drop, g)
        g = ops.relu_backward(bc.mask2, g)
        g, grads[f"enc{l}_c2_W"], grads[f"enc{l}_c2_b"] = ops.conv3x3_backward(
            bc.xp2, p[f"enc{l}_c2_W"], g
        )
        g = ops.relu_backward(bc.mask1, g)
        g, grads[f"enc{l}_c1_W"], grads[f"enc{l}_c1_b"] = ops.conv3x3_backward(
            bc.xp1, p[f"enc{l}_c1_W"], g
        )
    return grads
