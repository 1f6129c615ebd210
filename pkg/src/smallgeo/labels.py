"""Expert-labeled polygons: rasterization, pixel sampling, band statistics, splits.

Polygon membership is evaluated at pixel centers with the even-odd rule and a
half-open boundary convention: an edge is treated as half-open in y (strictly
above its lower endpoint, up to and including nothing at its upper endpoint)
and the crossing test is strict in x.  For an axis-aligned rectangle this
admits points on the minimum-x and minimum-y edges and excludes the
maximum-x / maximum-y edges, so abutting rectangles never double-claim a
pixel center.  Points inside holes are outside.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    EmptyClassError,
    UnsplittableClassError,
    ValidationError,
)
from .raster import LabelRaster, RasterStack

log = logging.getLogger(__name__)


@dataclass
class LabeledPolygon:
    """A class-labeled polygon in raster CRS; rings are implicitly closed."""

    class_id: int
    exterior: list[tuple[float, float]]
    holes: list[list[tuple[float, float]]] = field(default_factory=list)

    def __post_init__(self):
        if self.class_id == 0:
            raise ValidationError("polygon class_id must be nonzero")
        self.exterior = _clean_ring(self.exterior)
        self.holes = [_clean_ring(h) for h in self.holes]

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.exterior]
        ys = [p[1] for p in self.exterior]
        return min(xs), min(ys), max(xs), max(ys)


def _clean_ring(ring) -> list[tuple[float, float]]:
    pts = [(float(x), float(y)) for x, y in ring]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    if len({p for p in pts}) < 3:
        raise ValidationError(f"ring needs at least 3 distinct vertices, got {pts}")
    return pts


def _ring_parity(px, py, ring) -> np.ndarray:
    """Vectorized crossing parity of a +x ray from (px, py) against one ring."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    inside = np.zeros(px.shape, dtype=bool)
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        if not crosses.any():
            continue
        xi = np.divide(
            (py - y1) * (x2 - x1), (y2 - y1),
            out=np.zeros_like(py), where=crosses,
        ) + x1
        inside ^= crosses & (px < xi)
    return inside


def point_in_polygon(pt: tuple[float, float], poly: LabeledPolygon) -> bool:
    """Even-odd membership test; see module docstring for the boundary rule."""
    px, py = float(pt[0]), float(pt[1])
    inside = bool(_ring_parity(px, py, poly.exterior))
    for hole in poly.holes:
        inside ^= bool(_ring_parity(px, py, hole))
    return inside


def _polygon_mask(poly: LabeledPolygon, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    mask = _ring_parity(px, py, poly.exterior)
    for hole in poly.holes:
        mask ^= _ring_parity(px, py, hole)
    return mask


def rasterize_polygons(polys, width: int, height: int,
                       geotransform=(0.0, 1.0, 0.0, 0.0, 0.0, -1.0),
                       return_indices: bool = False):
    """Burn polygons into a LabelRaster by pixel-center membership.

    Later polygons overwrite earlier ones; an overlap logs a warning.  With
    ``return_indices`` the per-pixel index of the winning polygon is returned
    too (-1 where no polygon matched).
    """
    ox, pw, _, oy, _, nh = (float(g) for g in geotransform)
    ph = -nh
    grid = np.zeros((height, width), dtype=np.uint8)
    indices = np.full((height, width), -1, dtype=np.int32)
    for k, poly in enumerate(polys):
        minx, miny, maxx, maxy = poly.bounds()
        # candidate pixel ranges from the bbox; the exact test prunes the rest
        c0 = max(0, int(math.floor((minx - ox) / pw - 0.5)))
        c1 = min(width - 1, int(math.ceil((maxx - ox) / pw - 0.5)))
        r0 = max(0, int(math.floor((oy - maxy) / ph - 0.5)))
        r1 = min(height - 1, int(math.ceil((oy - miny) / ph - 0.5)))
        if c0 > c1 or r0 > r1:
            continue
        cols = np.arange(c0, c1 + 1)
        rows = np.arange(r0, r1 + 1)
        cx = ox + (cols + 0.5) * pw
        cy = oy - (rows + 0.5) * ph
        gx, gy = np.meshgrid(cx, cy)
        mask = _polygon_mask(poly, gx, gy)
        if not mask.any():
            continue
        window = grid[r0:r1 + 1, c0:c1 + 1]
        overlapped = int(((window != 0) & mask).sum())
        if overlapped:
            log.warning(
                "polygon %d (class %d) overwrites %d already-labeled pixel(s)",
                k, poly.class_id, overlapped,
            )
        window[mask] = poly.class_id
        indices[r0:r1 + 1, c0:c1 + 1][mask] = k
    labels = LabelRaster(grid)
    if return_indices:
        return labels, indices
    return labels


# ---------------------------------------------------------------------------
# pixel sampling


@dataclass(eq=False)
class SampleSet:
    """Training pixels: features (n, d) float32, labels (n,), provenance (n, 3).

    Provenance columns are (polygon index, pixel x, pixel y); the polygon
    index is -1 when sampling was done from a bare label raster.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    provenance: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float32)
        lab = np.asarray(self.labels)
        prov = np.asarray(self.provenance, dtype=np.int64)
        if f.ndim != 2:
            raise ValidationError("features must be 2-D (n, d)")
        if np.isnan(f).any():
            raise ValidationError("NaN in sample features")
        if (lab == 0).any():
            raise ValidationError("sample labels must be nonzero")
        if not (len(lab) == len(f) == len(prov)):
            raise DimensionError(
                f"inconsistent sample counts: {len(f)} features, "
                f"{len(lab)} labels, {len(prov)} provenance rows"
            )
        if len(self.feature_names) != f.shape[1]:
            raise DimensionError("feature_names length must equal feature dimension")
        self.features = f
        self.labels = lab.astype(np.int64)
        self.provenance = prov

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def class_ids(self) -> list[int]:
        return [int(c) for c in np.unique(self.labels)]


def sample_pixels(raster: RasterStack, labels: LabelRaster, n_per_class: int,
                  seed: int, poly_indices: np.ndarray | None = None) -> SampleSet:
    """Draw up to ``n_per_class`` distinct labeled, nodata-free pixels per class.

    Classes are visited in ascending id order and pixels are drawn without
    replacement from the seeded generator, so results are reproducible.
    """
    if (labels.height, labels.width) != (raster.height, raster.width):
        raise DimensionError(
            f"labels {labels.width}x{labels.height} do not match "
            f"raster {raster.width}x{raster.height}"
        )
    rng = np.random.default_rng(seed)
    usable = ~raster.nodata_mask()
    feats, labs, prov = [], [], []
    for cid in labels.present_ids():
        member = labels.labels == cid
        rows, cols = np.nonzero(member & usable)
        if len(rows) == 0:
            raise EmptyClassError(f"class {cid} has no nodata-free labeled pixels")
        take = min(n_per_class, len(rows))
        pick = np.sort(rng.choice(len(rows), size=take, replace=False))
        ys, xs = rows[pick], cols[pick]
        feats.append(raster.values[:, ys, xs].T)
        labs.append(np.full(take, cid, dtype=np.int64))
        if poly_indices is not None:
            pidx = poly_indices[ys, xs]
        else:
            pidx = np.full(take, -1, dtype=np.int64)
        prov.append(np.column_stack([pidx, xs, ys]))
    names = raster.band_names or [f"band_{i}" for i in range(raster.n_bands)]
    return SampleSet(
        np.concatenate(feats), np.concatenate(labs), list(names), np.concatenate(prov)
    )


# ---------------------------------------------------------------------------
# descriptive statistics


@dataclass
class ClassBandStats:
    """Per-class, per-band mean and population standard deviation."""

    class_ids: np.ndarray
    means: np.ndarray      # (k, d)
    stds: np.ndarray       # (k, d), population
    counts: np.ndarray     # (k,)
    feature_names: list[str]

    def __post_init__(self):
        if (self.stds < 0).any():
            raise ValidationError("negative standard deviation")
        if (self.counts < 1).any():
            raise ValidationError("every reported class needs at least one sample")


def class_band_stats(samples: SampleSet) -> ClassBandStats:
    """Mean and population std of every band, grouped by class."""
    if samples.n == 0:
        raise ValidationError("empty sample set")
    cids = np.unique(samples.labels)
    means = np.empty((len(cids), samples.d))
    stds = np.empty((len(cids), samples.d))
    counts = np.empty(len(cids), dtype=np.int64)
    for i, cid in enumerate(cids):
        block = samples.features[samples.labels == cid].astype(np.float64)
        means[i] = block.mean(axis=0)
        stds[i] = block.std(axis=0)  # ddof=0: descriptive, not an estimator
        counts[i] = len(block)
    return ClassBandStats(cids, means, stds, counts, samples.feature_names)


def write_stats_csv(stats: ClassBandStats, path, names: dict[int, str] | None = None) -> None:
    """CSV rows: class_id, class_name, band, mean, std, count."""
    names = names or {}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "class_name", "band", "mean", "std", "count"])
        for i, cid in enumerate(stats.class_ids):
            cname = names.get(int(cid), f"class_{cid}")
            for b, band in enumerate(stats.feature_names):
                writer.writerow([
                    int(cid), cname, band,
                    repr(float(stats.means[i, b])), repr(float(stats.stds[i, b])),
                    int(stats.counts[i]),
                ])


# ---------------------------------------------------------------------------
# train/test split


def split_polygons(polys, test_fraction: float, seed: int):
    """Stratified polygon-level split; per class ceil(fraction * count) go to test."""
    if not 0.0 <= test_fraction <= 1.0:
        raise ValidationError(f"test_fraction must be in [0, 1], got {test_fraction}")
    by_class: dict[int, list[int]] = {}
    for i, p in enumerate(polys):
        by_class.setdefault(p.class_id, []).append(i)
    for cid, idx in sorted(by_class.items()):
        if len(idx) < 2:
            raise UnsplittableClassError(
                f"class {cid} has {len(idx)} polygon(s); need at least 2 to split"
            )
    rng = np.random.default_rng(seed)
    test_idx: set[int] = set()
    for cid, idx in sorted(by_class.items()):
        n_test = math.ceil(test_fraction * len(idx))
        perm = rng.permutation(len(idx))
        test_idx.update(idx[j] for j in perm[:n_test])
    train = [p for i, p in enumerate(polys) if i not in test_idx]
    test = [p for i, p in enumerate(polys) if i in test_idx]
    return train, test


# ---------------------------------------------------------------------------
# feature standardization


@dataclass
class Scaler:
    """Per-band standardization to zero mean / unit variance.

    Bands with zero variance on the fitting data pass through unchanged.
    """

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        return (x - self.mean) / self.scale


def fit_scaler(samples: SampleSet) -> Scaler:
    x = samples.features.astype(np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std == 0
    mean[constant] = 0.0
    std[constant] = 1.0
    return Scaler(mean, std)


def apply_scaler(scaler: Scaler, features: np.ndarray) -> np.ndarray:
    return scaler.apply(features)


# ---------------------------------------------------------------------------
# canonical polygon GeoJSON


def read_polygons_geojson(path):
    """Read the canonical FeatureCollection of Polygon features.

    Every feature must carry integer ``class_id`` and text ``class_name``
    properties.  Returns (polygons, {class_id: class_name}).
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise ValidationError(f"{path}: expected a FeatureCollection")
    polys: list[LabeledPolygon] = []
    names: dict[int, str] = {}
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise ValidationError(
                f"{path}: feature {i} is {geom.get('type')!r}, only Polygon is canonical"
            )
        props = feat.get("properties") or {}
        if "class_id" not in props or "class_name" not in props:
            raise ValidationError(f"{path}: feature {i} lacks class_id/class_name")
        cid = int(props["class_id"])
        rings = geom.get("coordinates") or []
        if not rings:
            raise ValidationError(f"{path}: feature {i} has no rings")
        polys.append(LabeledPolygon(cid, rings[0], list(rings[1:])))
        names[cid] = str(props["class_name"])
    return polys, names


def write_polygons_geojson(polys, path, names: dict[int, str] | None = None) -> None:
    """Write polygons as the canonical FeatureCollection (rings closed)."""
    names = names or {}

    def closed(ring):
        pts = [[float(x), float(y)] for x, y in ring]
        pts.append(pts[0][:])
        return pts

    features = []
    for p in polys:
        features.append({
            "type": "Feature",
            "properties": {
                "class_id": int(p.class_id),
                "class_name": names.get(p.class_id, f"class_{p.class_id}"),
            },
            "geometry": {
                "type": "Polygon",
                "coordinates": [closed(p.exterior)] + [closed(h) for h in p.holes],
            },
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh)
        fh.write("\n")
