"""Flat tensor checkpoint files.

Format: one UTF-8 JSON header line, then the raw tensor data. The header
holds ``byte_order`` (always little-endian), a ``tensors`` list of
``{"name", "shape", "dtype"}`` records in file order, and an optional
``meta`` object.  Data is the concatenation of each tensor's row-major
(C-order) bytes as ``<f8`` in the order listed.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ParseError

_DTYPE = "<f8"


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict = None):
    """Write named float64 tensors plus optional JSON metadata."""
    names = list(tensors)
    header = {
        "byte_order": "little",
        "tensors": [{"name": n, "shape": list(tensors[n].shape),
                     "dtype": _DTYPE} for n in names],
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        for n in names:
            fh.write(np.ascontiguousarray(tensors[n], dtype=_DTYPE).tobytes())


def load_tensors(path):
    """Read a checkpoint; returns (tensors dict, meta dict)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ParseError(f"{path}: bad checkpoint header: {e}") from None
        if header.get("byte_order") != "little":
            raise ParseError(f"{path}: unsupported byte order")
        blob = fh.read()
    tensors = {}
    offset = 0
    for rec in header["tensors"]:
        shape = tuple(rec["shape"])
        n_bytes = int(np.prod(shape, dtype=np.int64)) * 8
        chunk = blob[offset:offset + n_bytes]
        if len(chunk) != n_bytes:
            raise ParseError(f"{path}: truncated data for {rec['name']!r}")
        tensors[rec["name"]] = np.frombuffer(chunk, dtype=_DTYPE).reshape(shape).copy()
        offset += n_bytes
    if offset != len(blob):
        raise ParseError(f"{path}: {len(blob) - offset} trailing bytes")
    return tensors, header.get("meta", {})
