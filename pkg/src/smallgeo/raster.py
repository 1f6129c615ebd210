"""Flat binary band-stack rasters: read, write, window, and export class maps.

The interchange format is deliberately plain so that any GIS tool can produce
or consume it: a UTF-8 text header (one ``key = value`` per line) next to a
raw little-endian, band-sequential binary payload.  Header stem gets ``.hdr``,
payload gets ``.bsq``.

Recognized header keys::

    ncols        columns (pixels)
    nrows        rows (pixels)
    nbands       band count
    dtype        float32 | uint8
    interleave   bsq
    geotransform 6 comma-separated reals (origin_x, px_w, 0, origin_y, 0, -px_h)
    nodata       sentinel value (optional; NaN when absent)
    band_names   comma-separated names (optional)
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import (
    CorruptFileError,
    OutOfBoundsError,
    SchemaMismatchError,
    UnsupportedFormatError,
    ValidationError,
)

# geotransform: geo_x = gt[0] + (col + 0.5) * gt[1] at a pixel center,
#               geo_y = gt[3] + (row + 0.5) * gt[5], with gt[5] = -pixel_height
DEFAULT_GEOTRANSFORM = (0.0, 1.0, 0.0, 0.0, 0.0, -1.0)

_DTYPES = {"float32": np.dtype("<f4"), "uint8": np.dtype("u1")}


def _check_geotransform(gt) -> tuple[float, ...]:
    gt = tuple(float(g) for g in gt)
    if len(gt) != 6:
        raise ValidationError(f"geotransform needs 6 numbers, got {len(gt)}")
    if not gt[1] > 0:
        raise ValidationError(f"pixel_width must be > 0, got {gt[1]}")
    if not -gt[5] > 0:
        raise ValidationError(f"pixel_height must be > 0, got {-gt[5]}")
    if gt[2] != 0 or gt[4] != 0:
        raise ValidationError("rotated geotransforms are not supported")
    return gt


@dataclass(eq=False)
class RasterStack:
    """Multiband reflectance image; ``values`` has shape (n_bands, height, width).

    The C-order flat view of ``values`` is exactly the band-sequential payload
    written to disk.
    """

    values: np.ndarray
    geotransform: tuple[float, ...] = DEFAULT_GEOTRANSFORM
    nodata: float = math.nan
    band_names: list[str] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ValidationError(f"values must be 3-D (bands, rows, cols), got {v.ndim}-D")
        if v.shape[1] < 1 or v.shape[2] < 1 or v.shape[0] < 1:
            raise ValidationError(f"empty raster shape {v.shape}")
        self.values = v
        self.geotransform = _check_geotransform(self.geotransform)
        self.nodata = float(self.nodata)
        if not math.isnan(self.nodata) and np.isnan(v).any():
            raise ValidationError("NaN values present but nodata sentinel is not NaN")
        if self.band_names is not None:
            names = [str(n) for n in self.band_names]
            if len(names) != v.shape[0]:
                raise ValidationError(
                    f"{len(names)} band names for {v.shape[0]} bands"
                )
            self.band_names = names

    @property
    def n_bands(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def nodata_mask(self) -> np.ndarray:
        """(height, width) bool, True where any band carries the nodata sentinel."""
        if math.isnan(self.nodata):
            return np.isnan(self.values).any(axis=0)
        return (self.values == self.nodata).any(axis=0)

    def pixel_centers(self, cols: np.ndarray, rows: np.ndarray):
        """Geo coordinates of pixel centers for arrays of column/row indices."""
        gt = self.geotransform
        return gt[0] + (np.asarray(cols) + 0.5) * gt[1], gt[3] + (np.asarray(rows) + 0.5) * gt[5]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RasterStack):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
            and self.geotransform == other.geotransform
            and (self.nodata == other.nodata
                 or (math.isnan(self.nodata) and math.isnan(other.nodata)))
            and self.band_names == other.band_names
        )


@dataclass(eq=False)
class LabelRaster:
    """Per-pixel class ids, uint8, 0 = unlabeled; ``labels`` is (height, width)."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ValidationError(f"labels must be 2-D, got {lab.ndim}-D")
        if lab.shape[0] < 1 or lab.shape[1] < 1:
            raise ValidationError(f"empty label raster shape {lab.shape}")
        if lab.dtype != np.uint8:
            if lab.size and (lab.min() < 0 or lab.max() > 255):
                raise ValidationError("class ids must fit in uint8")
            lab = lab.astype(np.uint8)
        self.labels = lab

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def present_ids(self) -> list[int]:
        """Sorted nonzero class ids present in the raster."""
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i != 0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelRaster):
            return NotImplemented
        return self.labels.shape == other.labels.shape and bool(
            (self.labels == other.labels).all()
        )


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    color: tuple[int, int, int]


@dataclass
class ClassSchema:
    """The categorical legend: (class_id, name, RGB color) per land-cover class."""

    entries: list[ClassEntry] = field(default_factory=list)

    def __post_init__(self):
        entries = []
        for e in self.entries:
            if not isinstance(e, ClassEntry):
                cid, name, color = e
                e = ClassEntry(int(cid), str(name), tuple(int(c) for c in color))
            entries.append(e)
        ids = [e.class_id for e in entries]
        names = [e.name for e in entries]
        for e in entries:
            if not 1 <= e.class_id <= 255:
                raise ValidationError(f"class id {e.class_id} outside 1..255")
            if len(e.color) != 3 or any(not 0 <= c <= 255 for c in e.color):
                raise ValidationError(f"bad RGB color {e.color} for class {e.class_id}")
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate class ids in schema")
        if len(set(names)) != len(names):
            raise ValidationError("duplicate class names in schema")
        self.entries = entries

    @property
    def class_ids(self) -> list[int]:
        return [e.class_id for e in self.entries]

    def name_of(self, class_id: int) -> str:
        for e in self.entries:
            if e.class_id == class_id:
                return e.name
        raise KeyError(class_id)

    def color_table(self) -> np.ndarray:
        """(256, 3) uint8 lookup; id 0 and unknown ids map to black."""
        lut = np.zeros((256, 3), dtype=np.uint8)
        for e in self.entries:
            lut[e.class_id] = e.color
        return lut

    def to_json(self) -> dict:
        return {
            "classes": [
                {"id": e.class_id, "name": e.name, "color": list(e.color)}
                for e in self.entries
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClassSchema":
        return cls(
            [ClassEntry(int(c["id"]), str(c["name"]), tuple(c["color"])) for c in obj["classes"]]
        )


def read_schema(path) -> ClassSchema:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        return ClassSchema.from_json(json.load(fh))


def write_schema(schema: ClassSchema, path) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_json(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# band-stack I/O


def _stem(path) -> str:
    path = os.fspath(path)
    root, ext = os.path.splitext(path)
    if ext in (".hdr", ".bsq"):
        return root
    return path


def _format_float(x: float) -> str:
    return repr(float(x))


def _header_lines(ncols, nrows, nbands, dtype, geotransform, nodata, band_names):
    lines = [
        f"ncols = {ncols}",
        f"nrows = {nrows}",
        f"nbands = {nbands}",
        f"dtype = {dtype}",
        "interleave = bsq",
        "geotransform = " + ", ".join(_format_float(g) for g in geotransform),
    ]
    if not math.isnan(nodata):
        lines.append(f"nodata = {_format_float(nodata)}")
    if band_names:
        lines.append("band_names = " + ", ".join(band_names))
    return "\n".join(lines) + "\n"


def _parse_header(path) -> dict:
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CorruptFileError(f"{path}: malformed header line {line!r}")
            key, _, value = line.partition("=")
            fields[key.strip().lower()] = value.strip()
    required = ("ncols", "nrows", "nbands", "dtype", "interleave", "geotransform")
    missing = [k for k in required if k not in fields]
    if missing:
        raise CorruptFileError(f"{path}: header missing keys {missing}")
    return fields


def _write_payload(stem: str, header: str, flat: np.ndarray) -> None:
    with open(stem + ".hdr", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header)
    with open(stem + ".bsq", "wb") as fh:
        fh.write(flat.tobytes())


def write_bandstack(raster: RasterStack, path) -> str:
    """Write header + payload; returns the common stem path."""
    stem = _stem(path)
    header = _header_lines(
        raster.width, raster.height, raster.n_bands, "float32",
        raster.geotransform, raster.nodata, raster.band_names,
    )
    _write_payload(stem, header, np.ascontiguousarray(raster.values, dtype="<f4"))
    return stem


def _read_common(path):
    stem = _stem(path)
    hdr_path, bsq_path = stem + ".hdr", stem + ".bsq"
    if not os.path.exists(hdr_path):
        raise CorruptFileError(f"missing header file {hdr_path}")
    if not os.path.exists(bsq_path):
        raise CorruptFileError(f"missing payload file {bsq_path}")
    fields = _parse_header(hdr_path)
    if fields["interleave"].lower() != "bsq":
        raise UnsupportedFormatError(f"unsupported interleave {fields['interleave']!r}")
    if fields["dtype"] not in _DTYPES:
        raise UnsupportedFormatError(f"unsupported dtype {fields['dtype']!r}")
    dtype = _DTYPES[fields["dtype"]]
    ncols, nrows, nbands = (int(fields[k]) for k in ("ncols", "nrows", "nbands"))
    expected = ncols * nrows * nbands * dtype.itemsize
    actual = os.path.getsize(bsq_path)
    if actual != expected:
        raise CorruptFileError(
            f"{bsq_path}: expected {expected} bytes "
            f"({ncols}x{nrows}x{nbands} {fields['dtype']}), found {actual}"
        )
    data = np.fromfile(bsq_path, dtype=dtype).reshape(nbands, nrows, ncols)
    gt = tuple(float(t) for t in fields["geotransform"].split(","))
    nodata = float(fields["nodata"]) if "nodata" in fields else math.nan
    names = None
    if "band_names" in fields:
        names = [n.strip() for n in fields["band_names"].split(",")]
    return fields, data, gt, nodata, names


def read_bandstack(path) -> RasterStack:
    """Read a float32 band-stack written by :func:`write_bandstack`."""
    fields, data, gt, nodata, names = _read_common(path)
    if fields["dtype"] != "float32":
        raise UnsupportedFormatError(
            f"expected a float32 band-stack, header says {fields['dtype']!r}"
        )
    return RasterStack(data, gt, nodata, names)


def read_class_map(path) -> LabelRaster:
    """Read a single-band uint8 class map written by :func:`write_class_map`."""
    fields, data, _, _, _ = _read_common(path)
    if fields["dtype"] != "uint8":
        raise UnsupportedFormatError(
            f"expected a uint8 class map, header says {fields['dtype']!r}"
        )
    if data.shape[0] != 1:
        raise UnsupportedFormatError(f"class map must be single-band, got {data.shape[0]}")
    return LabelRaster(data[0])


def write_class_map(labels: LabelRaster, schema: ClassSchema, path,
                    geotransform=DEFAULT_GEOTRANSFORM) -> str:
    """Write a class map as uint8 band-stack plus a colorized PNG.

    Every nonzero label must appear in the schema; id 0 renders black.
    Returns the common stem path (files: ``.hdr``, ``.bsq``, ``.png``).
    """
    present = set(labels.present_ids())
    known = set(schema.class_ids)
    unknown = sorted(present - known)
    if unknown:
        raise SchemaMismatchError(f"label ids missing from schema: {unknown}")
    stem = _stem(os.fspath(path)[:-4] if os.fspath(path).endswith(".png") else path)
    header = _header_lines(
        labels.width, labels.height, 1, "uint8", _check_geotransform(geotransform),
        0.0, None,
    )
    _write_payload(stem, header, np.ascontiguousarray(labels.labels))
    rgb = schema.color_table()[labels.labels]
    Image.fromarray(rgb, mode="RGB").save(stem + ".png")
    return stem


def crop(raster: RasterStack, x0: int, y0: int, w: int, h: int) -> RasterStack:
    """Window [x0, x0+w) x [y0, y0+h); origin shifts by (x0*px_w, -y0*px_h)."""
    if w < 1 or h < 1:
        raise OutOfBoundsError(f"window must be at least 1x1, got {w}x{h}")
    if x0 < 0 or y0 < 0 or x0 + w > raster.width or y0 + h > raster.height:
        raise OutOfBoundsError(
            f"window ({x0},{y0},{w},{h}) exceeds raster {raster.width}x{raster.height}"
        )
    gt = raster.geotransform
    shifted = (gt[0] + x0 * gt[1], gt[1], gt[2], gt[3] + y0 * gt[5], gt[4], gt[5])
    return RasterStack(
        raster.values[:, y0:y0 + h, x0:x0 + w].copy(),
        shifted,
        raster.nodata,
        raster.band_names,
    )
