"""Flat binary tensor container: a JSON header followed by raw array bytes.

File layout: little-endian uint32 header length, UTF-8 JSON header with at
least {"dtype", "shape", "layout"} (plus an optional "meta" object), then
the array data little-endian and C-contiguous. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

_DEFAULT_LAYOUTS = {1: "C", 2: "HW", 3: "CHW", 4: "MCHW"}


def write_tensor(
    path: str | Path, array: np.ndarray, layout: str | None = None, meta: dict | None = None
) -> None:
    array = np.asarray(array)
    if array.dtype.kind not in "fiu":
        raise FormatError(f"unsupported dtype {array.dtype}")
    if layout is None:
        layout = _DEFAULT_LAYOUTS.get(array.ndim, "AXES")
    header = {"dtype": array.dtype.name, "shape": list(array.shape), "layout": layout}
    if meta:
        header["meta"] = meta
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(array).astype(array.dtype.newbyteorder("<"), copy=False)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload.tobytes())


def read_tensor_header(path: str | Path) -> dict:
    path = Path(path)
    with open(path, "rb") as fh:
        prefix = fh.read(4)
        if len(prefix) < 4:
            raise FormatError(f"{path.name}: truncated header length")
        (hlen,) = struct.unpack("<I", prefix)
        blob = fh.read(hlen)
    if len(blob) < hlen:
        raise FormatError(f"{path.name}: truncated header, expected {hlen} bytes")
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path.name}: header is not valid JSON") from exc
    for key in ("dtype", "shape", "layout"):
        if key not in header:
            raise FormatError(f"{path.name}: header is missing {key!r}")
    return header


def read_tensor(path: str | Path, return_header: bool = False):
    path = Path(path)
    header = read_tensor_header(path)
    try:
        dtype = np.dtype(header["dtype"]).newbyteorder("<")
    except TypeError as exc:
        raise FormatError(f"{path.name}: unknown dtype {header['dtype']!r}") from exc
    shape = tuple(int(s) for s in header["shape"])
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<I", raw[:4])
    payload = raw[4 + hlen:]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"{path.name}: payload size mismatch, expected {expected} bytes, got {len(payload)}"
        )
    array = np.frombuffer(payload, dtype=dtype).reshape(shape)
    array = array.astype(np.dtype(header["dtype"]), copy=False)  # native byte order view
    if return_header:
        return array, header
    return array
