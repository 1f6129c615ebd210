"""Tensor kernels with hand-written backward passes.

All functions take NHWC arrays and preserve the input dtype, so the network
runs in float32 while gradient-check oracles can feed float64.  Every
``*_forward`` returns ``(output, cache)``; the matching ``*_backward`` takes
that cache plus the upstream gradient and returns input/parameter gradients.
Accumulation order is fixed, which keeps repeated runs bit-identical.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NoSupervisionError


# -- 3x3 convolution, stride 1, zero padding 1 ------------------------------

def conv3x3_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    """x (n,h,w,cin), W (3,3,cin,cout), b (cout,) -> out (n,h,w,cout)."""
    n, h, w, cin = x.shape
    if W.shape[:3] != (3, 3, cin):
        raise DimensionError(f"kernel {W.shape} does not fit input {x.shape}")
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.broadcast_to(b, (n, h, w, W.shape[3])).astype(x.dtype).copy()
    for dy in range(3):
        for dx in range(3):
            out += np.tensordot(xp[:, dy:dy + h, dx:dx + w, :], W[dy, dx], axes=([3], [0]))
    return out, xp


def conv3x3_backward(xp: np.ndarray, W: np.ndarray, grad_out: np.ndarray):
    """Returns (grad_x, grad_W, grad_b)."""
    n, hp, wp, cin = xp.shape
    h, w = hp - 2, wp - 2
    gxp = np.zeros_like(xp)
    gW = np.zeros_like(W)
    for dy in range(3):
        for dx in range(3):
            patch = xp[:, dy:dy + h, dx:dx + w, :]
            gW[dy, dx] = np.tensordot(patch, grad_out, axes=([0, 1, 2], [0, 1, 2]))
            gxp[:, dy:dy + h, dx:dx + w, :] += np.tensordot(
                grad_out, W[dy, dx], axes=([3], [1])
            )
    gb = grad_out.sum(axis=(0, 1, 2))
    return gxp[:, 1:1 + h, 1:1 + w, :], gW, gb


# -- 1x1 convolution ---------------------------------------------------------

def conv1x1_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    """x (n,h,w,cin), W (cin,cout), b (cout,)."""
    return x @ W + b, x


def conv1x1_backward(x: np.ndarray, W: np.ndarray, grad_out: np.ndarray):
    gx = grad_out @ W.T
    gW = np.tensordot(x, grad_out, axes=([0, 1, 2], [0, 1, 2]))
    gb = grad_out.sum(axis=(0, 1, 2))
    return gx, gW, gb


# -- ReLU --------------------------------------------------------------------

def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(mask: np.ndarray, grad_out: np.ndarray):
    return grad_out * mask


# -- 2x2 max pooling, stride 2 ----------------------------------------------

def maxpool2_forward(x: np.ndarray):
    """Halves h and w; cache routes gradients to the first maximum of each window."""
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"pooling needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    flat = win.reshape(n, h // 2, w // 2, c, 4)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def maxpool2_backward(cache, grad_out: np.ndarray):
    arg, shape = cache
    n, h, w, c = shape
    gflat = np.zeros((n, h // 2, w // 2, c, 4), dtype=grad_out.dtype)
    np.put_along_axis(gflat, arg[..., None], grad_out[..., None], axis=-1)
    gwin = gflat.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return gwin.reshape(n, h, w, c)


# -- 2x nearest-neighbor upsampling ------------------------------------------

def upsample2_forward(x: np.ndarray):
    return x.repeat(2, axis=1).repeat(2, axis=2), x.shape


def upsample2_backward(shape, grad_out: np.ndarray):
    n, h, w, c = shape
    return grad_out.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4))


# -- channel concatenation ----------------------------------------------------

def concat_forward(a: np.ndarray, b: np.ndarray):
    if a.shape[:3] != b.shape[:3]:
        raise DimensionError(f"cannot concat {a.shape} with {b.shape}")
    return np.concatenate([a, b], axis=-1), a.shape[-1]


def concat_backward(split: int, grad_out: np.ndarray):
    return grad_out[..., :split], grad_out[..., split:]


# -- inverted dropout ----------------------------------------------------------

def dropout_forward(x: np.ndarray, rate: float, rng, training: bool):
    """Inverted dropout: training output is scaled so inference needs no rescale."""
    if not training or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - rate))
    return x * keep * scale, (keep, scale)


def dropout_backward(cache, grad_out: np.ndarray):
    if cache is None:
        return grad_out
    keep, scale = cache
    return grad_out * keep * scale


# -- softmax and masked cross-entropy -----------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def masked_cross_entropy(logits: np.ndarray, targets: np.ndarray,
                         valid_mask: np.ndarray):
    """Mean negative log-likelihood over pixels that are valid AND labeled.

    ``targets`` holds class ids (1..n_classes, 0 = unlabeled) mapped to
    channel ``id - 1``.  Returns (loss, grad_logits); the gradient is
    ``(softmax - onehot) / n_included`` at included pixels, zero elsewhere.
    """
    if logits.shape[:-1] != targets.shape or targets.shape != valid_mask.shape:
        raise DimensionError(
            f"shapes disagree: logits {logits.shape}, targets {targets.shape}, "
            f"mask {valid_mask.shape}"
        )
    included = valid_mask & (targets > 0)
    count = int(included.sum())
    if count == 0:
        raise NoSupervisionError("no valid labeled pixels in batch")
    k = logits.shape[-1]
    z = logits - logits.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=-1))
    idx = np.nonzero(included)
    chan = targets[idx].astype(np.int64) - 1
    if chan.max() >= k:
        raise DimensionError(
            f"target id {int(chan.max()) + 1} exceeds {k} logit channels"
        )
    nll = logsum[idx] - z[(*idx, chan)]
    loss = float(nll.sum() / count)
    grad = np.zeros_like(logits)
    p = softmax(logits[idx])
    p[np.arange(len(chan)), chan] -= 1.0
    grad[idx] = p / count
    return loss, grad
