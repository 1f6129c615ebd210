"""Model persistence and full-scene classification shared by both pixel learners."""

from __future__ import annotations

import numpy as np

from . import container
from .errors import DimensionError, UnsupportedFormatError
from .forest import ForestModel, Tree
from .labels import Scaler
from .raster import LabelRaster, RasterStack
from .svm import SvmModel


def predict_raster(model, raster: RasterStack) -> LabelRaster:
    """Classify every non-nodata pixel independently; nodata pixels get 0."""
    if isinstance(model, SvmModel) and raster.n_bands != model.d:
        raise DimensionError(
            f"raster has {raster.n_bands} bands, model expects {model.d}"
        )
    if isinstance(model, ForestModel) and model._max_feature >= raster.n_bands:
        raise DimensionError(
            f"raster has {raster.n_bands} bands but the model splits on index "
            f"{model._max_feature}"
        )
    h, w = raster.height, raster.width
    usable = ~raster.nodata_mask()
    out = np.zeros((h, w), dtype=np.uint8)
    if usable.any():
        feats = raster.values.reshape(raster.n_bands, h * w).T[usable.ravel()]
        out.ravel()[usable.ravel()] = model.predict_batch(feats).astype(np.uint8)
    return LabelRaster(out)


def save_model(model, path) -> None:
    """Serialize a trained ForestModel or SvmModel; reloads bit-identically."""
    if isinstance(model, ForestModel):
        offsets = np.zeros(len(model.trees) + 1, dtype=np.int64)
        for i, t in enumerate(model.trees):
            offsets[i + 1] = offsets[i] + t.n_nodes
        arrays = {
            "feature": np.concatenate([t.feature for t in model.trees]),
            "threshold": np.concatenate([t.threshold for t in model.trees]),
            "left": np.concatenate([t.left for t in model.trees]),
            "right": np.concatenate([t.right for t in model.trees]),
            "leaf_class": np.concatenate([t.leaf_class for t in model.trees]),
            "offsets": offsets,
            "classes": model.classes,
        }
        meta = {
            "n_trees": model.n_trees,
            "mtry": model.mtry,
            "min_leaf": model.min_leaf,
            "max_depth": model.max_depth,
            "seed": model.seed,
        }
        container.write_container(path, "forest", meta, arrays)
    elif isinstance(model, SvmModel):
        arrays = {
            "weights": model.weights,
            "biases": model.biases,
            "pairs": model.pairs,
            "classes": model.classes,
            "scaler_mean": model.scaler.mean,
            "scaler_scale": model.scaler.scale,
            "converged": (
                model.converged.astype(np.uint8)
                if model.converged is not None
                else np.ones(len(model.pairs), dtype=np.uint8)
            ),
            "n_pass": (
                model.n_pass
                if model.n_pass is not None
                else np.zeros(len(model.pairs), dtype=np.int32)
            ),
        }
        meta = {
            "C": model.C,
            "eps": model.eps,
            "max_iter": model.max_iter,
            "seed": model.seed,
        }
        container.write_container(path, "svm", meta, arrays)
    else:
        raise UnsupportedFormatError(f"cannot serialize {type(model).__name__}")


def load_model(path):
    kind, meta, arrays = container.read_container(path)
    if kind == "forest":
        offsets = arrays["offsets"]
        trees = []
        for i in range(len(offsets) - 1):
            s = slice(int(offsets[i]), int(offsets[i + 1]))
            trees.append(Tree(
                arrays["feature"][s], arrays["threshold"][s],
                arrays["left"][s], arrays["right"][s], arrays["leaf_class"][s],
            ))
        return ForestModel(
            trees, arrays["classes"], mtry=meta["mtry"], seed=meta["seed"],
            n_trees=meta["n_trees"], min_leaf=meta["min_leaf"],
            max_depth=meta["max_depth"],
        )
    if kind == "svm":
        return SvmModel(
            arrays["weights"], arrays["biases"], arrays["pairs"], arrays["classes"],
            meta["C"], meta["eps"],
            Scaler(arrays["scaler_mean"], arrays["scaler_scale"]),
            converged=arrays["converged"].astype(bool),
            n_pass=arrays["n_pass"],
            max_iter=meta["max_iter"], seed=meta["seed"],
        )
    raise UnsupportedFormatError(f"{path}: unknown model kind {kind!r}")
