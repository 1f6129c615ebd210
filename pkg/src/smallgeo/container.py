"""Versioned binary container: JSON header + raw little-endian array payload.

Layout: 9-byte magic, uint32 header length, UTF-8 JSON header, then each
array's bytes at the offsets the header declares.  Nothing in the file
depends on wall-clock time, so identical contents serialize to identical
bytes -- the property the reproducibility contract leans on.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CorruptFileError, UnsupportedFormatError

MAGIC = b"SMALLGEO\x00"
FORMAT = "smallgeo-container/1"


def _le_dtype(arr: np.ndarray) -> np.dtype:
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    return dt


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        arr = arr.astype(_le_dtype(arr), copy=False)
        blob = arr.tobytes()
        entries.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"format": FORMAT, "kind": kind, "meta": meta, "arrays": entries},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path):
    """Returns (kind, meta, {name: array})."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise UnsupportedFormatError(f"{path}: not a smallgeo container")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format") != FORMAT:
            raise UnsupportedFormatError(
                f"{path}: unknown container format {header.get('format')!r}"
            )
        payload = fh.read()
    arrays = {}
    for ent in header["arrays"]:
        start, nbytes = ent["offset"], ent["nbytes"]
        if start + nbytes > len(payload):
            raise CorruptFileError(
                f"{path}: array {ent['name']!r} wants bytes "
                f"[{start}, {start + nbytes}) but payload has {len(payload)}"
            )
        arr = np.frombuffer(
            payload[start:start + nbytes], dtype=np.dtype(ent["dtype"])
        ).reshape(ent["shape"]).copy()
        arrays[ent["name"]] = arr
    return header["kind"], header["meta"], arrays
