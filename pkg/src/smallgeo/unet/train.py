"""U-Net training loop, full-scene inference, and checkpointing."""

from __future__ import annotations

import csv
import math

import numpy as np

from .. import container
from ..errors import (
    DimensionError,
    NoSupervisionError,
    TrainingDivergedError,
)
from ..raster import LabelRaster, RasterStack
from .model import UNetConfig, UNetModel, param_order, unet_backward, unet_forward, unet_init
from .ops import masked_cross_entropy
from .patches import PatchSet, extract_patches, stitch_patches

MOMENTUM = 0.9


def train_unet(patches: PatchSet, config: UNetConfig,
               log_every: int = 0) -> UNetModel:
    """Mini-batch SGD with momentum over the supervised patches.

    Patches without a single valid labeled pixel carry no gradient and are
    dropped up front.  Shuffling, dropout masks and weight init all derive
    from ``config.seed``, so the run is reproducible bit for bit.  Loss per
    epoch is the pixel-weighted mean over all batches.
    """
    supervised = (patches.valid & (patches.targets > 0)).any(axis=(1, 2))
    if not supervised.any():
        raise NoSupervisionError("no patch contains a valid labeled pixel")
    inputs = patches.inputs[supervised]
    targets = patches.targets[supervised]
    valid = patches.valid[supervised]
    n = len(inputs)

    model = unet_init(config)
    names = param_order(config)
    velocity = {k: np.zeros_like(model.params[k]) for k in names}
    shuffle_rng = np.random.default_rng([config.seed, 1])
    batch = max(1, config.batch_size)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        total_pixels = 0
        for bi, start in enumerate(range(0, n, batch)):
            sel = order[start:start + batch]
            xb, tb, vb = inputs[sel], targets[sel], valid[sel]
            step_seed = [config.seed, 2, epoch, bi]
            logits, tape = unet_forward(
                model, xb, training=True, seed=step_seed, return_cache=True
            )
            loss, grad_logits = masked_cross_entropy(logits, tb, vb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            grads = unet_backward(model, tape, grad_logits)
            for k in names:
                v = velocity[k]
                v *= MOMENTUM
                v -= config.learning_rate * grads[k]
                model.params[k] += v
            included = int((vb & (tb > 0)).sum())
            total_loss += loss * included
            total_pixels += included
        mean_loss = total_loss / total_pixels
        if not math.isfinite(mean_loss):
            raise TrainingDivergedError(epoch)
        model.loss_history.append(mean_loss)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{config.epochs}  loss {mean_loss:.4f}")
    return model


def predict_scene(model: UNetModel, raster: RasterStack,
                  batch_size: int = 256) -> LabelRaster:
    """Tile, classify, and stitch a whole scene; nodata pixels get label 0."""
    cfg = model.config
    if raster.n_bands != cfg.in_channels:
        raise DimensionError(
            f"raster has {raster.n_bands} bands, model expects {cfg.in_channels}"
        )
    pset = extract_patches(raster, None, patch_size=cfg.patch_size)
    pred = np.empty_like(pset.targets)
    for start in range(0, pset.n, batch_size):
        logits = unet_forward(model, pset.inputs[start:start + batch_size])
        pred[start:start + batch_size] = (logits.argmax(axis=-1) + 1).astype(np.uint8)
    out = stitch_patches(pred, pset.origins, raster.width, raster.height)
    out.labels[raster.nodata_mask()] = 0
    return out


def save_unet(model: UNetModel, path) -> None:
    arrays = {k: model.params[k] for k in param_order(model.config)}
    arrays["loss_history"] = np.asarray(model.loss_history, dtype=np.float64)
    container.write_container(path, "unet", {"config": model.config.to_meta()}, arrays)


def load_unet(path) -> UNetModel:
    kind, meta, arrays = container.read_container(path)
    if kind != "unet":
        raise DimensionError(f"{path}: not a unet checkpoint (kind={kind!r})")
    config = UNetConfig.from_meta(meta["config"])
    history = arrays.pop("loss_history", np.empty(0)).tolist()
    return UNetModel(config, arrays, loss_history=history)


def write_loss_history(model: UNetModel, path) -> None:
    """CSV with one (epoch, mean_loss) row per epoch."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(model.loss_history, start=1):
            writer.writerow([i, repr(float(loss))])
