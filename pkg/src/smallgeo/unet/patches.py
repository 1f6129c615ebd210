"""Non-overlapping patch tiling with reflection padding, and its inverse."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, EmptyInputError, ValidationError
from ..raster import LabelRaster, RasterStack


@dataclass(eq=False)
class PatchSet:
    """Tiled patches: inputs (n, P, P, B), targets/valid (n, P, P), origins (n, 2).

    ``valid`` is False on reflection padding and on nodata pixels; ``origins``
    are (x0, y0) pixel offsets into the padded source grid, recorded so the
    tiles can be stitched back.
    """

    inputs: np.ndarray
    targets: np.ndarray
    valid: np.ndarray
    origins: np.ndarray
    width: int
    height: int
    patch_size: int

    def __post_init__(self):
        if self.inputs.ndim != 4:
            raise DimensionError("inputs must be (n, P, P, B)")
        n, p, q, _ = self.inputs.shape
        if p != self.patch_size or q != self.patch_size:
            raise DimensionError(f"patches are {p}x{q}, expected {self.patch_size}")
        if self.targets.shape != (n, p, q) or self.valid.shape != (n, p, q):
            raise DimensionError("targets/valid must be (n, P, P)")
        if len(self.origins) != n:
            raise DimensionError("one origin per patch required")

    @property
    def n(self) -> int:
        return len(self.inputs)


def _pad_hw(arr: np.ndarray, py: int, px: int, mode: str):
    pad = [(0, py), (0, px)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, pad, mode=mode)


def extract_patches(raster: RasterStack, labels: LabelRaster | None = None,
                    patch_size: int = 16) -> PatchSet:
    """Tile the raster into non-overlapping patches, padding right/bottom edges.

    Padding uses symmetric reflection; padded and nodata pixels are marked
    invalid so they never contribute supervision.
    """
    if raster.width < 1 or raster.height < 1:
        raise EmptyInputError("cannot tile an empty raster")
    if labels is not None and (labels.height, labels.width) != (raster.height, raster.width):
        raise DimensionError(
            f"labels {labels.width}x{labels.height} do not match raster "
            f"{raster.width}x{raster.height}"
        )
    P = patch_size
    w, h = raster.width, raster.height
    wp = ((w + P - 1) // P) * P
    hp = ((h + P - 1) // P) * P
    img = np.moveaxis(raster.values, 0, -1)  # (h, w, B)
    img = _pad_hw(img, hp - h, wp - w, "symmetric")
    usable = ~raster.nodata_mask()
    valid_full = _pad_hw(usable, hp - h, wp - w, "constant")
    if labels is not None:
        targets_full = _pad_hw(labels.labels, hp - h, wp - w, "constant")
    else:
        targets_full = np.zeros((hp, wp), dtype=np.uint8)
    inputs, targets, valid, origins = [], [], [], []
    for y0 in range(0, hp, P):
        for x0 in range(0, wp, P):
            inputs.append(img[y0:y0 + P, x0:x0 + P, :])
            targets.append(targets_full[y0:y0 + P, x0:x0 + P])
            valid.append(valid_full[y0:y0 + P, x0:x0 + P])
            origins.append((x0, y0))
    return PatchSet(
        np.ascontiguousarray(np.stack(inputs), dtype=np.float32),
        np.stack(targets),
        np.stack(valid),
        np.asarray(origins, dtype=np.int32),
        width=w, height=h, patch_size=P,
    )


def stitch_patches(patch_labels: np.ndarray, origins: np.ndarray,
                   width: int, height: int) -> LabelRaster:
    """Reassemble per-patch label tiles into a (height, width) LabelRaster.

    The padded margin beyond ``width``/``height`` is discarded.
    """
    if patch_labels.ndim != 3:
        raise DimensionError("patch labels must be (n, P, P)")
    if len(patch_labels) != len(origins):
        raise DimensionError("one origin per patch required")
    P = patch_labels.shape[1]
    wp = max(int(x0) for x0, _ in origins) + P
    hp = max(int(y0) for _, y0 in origins) + P
    if wp < width or hp < height:
        raise ValidationError("origins do not cover the requested extent")
    canvas = np.zeros((hp, wp), dtype=np.uint8)
    for tile, (x0, y0) in zip(patch_labels, origins):
        canvas[y0:y0 + P, x0:x0 + P] = tile
    return LabelRaster(canvas[:height, :width])
