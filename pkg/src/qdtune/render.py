"""Portable graymap/pixmap writers and raw float tensors for map outputs.

Tensors follow the dataset convention: little-endian float32, row-major, with a
small JSON header next to the ``.bin`` file giving shape and CRC32.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np


def to_gray(values, lo=None, hi=None) -> np.ndarray:
    """Linearly map ``values`` onto 0..255 (constant arrays map to 0)."""
    v = np.asarray(values, dtype=float)
    lo = np.nanmin(v) if lo is None else lo
    hi = np.nanmax(v) if hi is None else hi
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.round(255 * np.clip((v - lo) / (hi - lo), 0, 1)).astype(np.uint8)


def write_pgm(path, image) -> Path:
    """Binary (P5) 8-bit graymap."""
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("PGM needs a 2D uint8 array")
    path = Path(path)
    path.write_bytes(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode() + np.ascontiguousarray(img).tobytes())
    return path


def write_ppm(path, image) -> Path:
    """Binary (P6) 8-bit pixmap from an ``(H, W, 3)`` uint8 array."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("PPM needs an (H, W, 3) uint8 array")
    path = Path(path)
    path.write_bytes(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode() + np.ascontiguousarray(img).tobytes())
    return path


def read_pnm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, body = data.split(b"\n", 3)
    w, h = map(int, dims.split())
    if int(maxval) != 255 or magic not in (b"P5", b"P6"):
        raise ValueError(f"{path} is not an 8-bit binary PGM/PPM")
    shape = (h, w) if magic == b"P5" else (h, w, 3)
    return np.frombuffer(body, dtype=np.uint8).reshape(shape)


def write_tensor(path, array) -> Path:
    """Write ``<path>.bin`` (float32 LE, row-major) and ``<path>.json``."""
    path = Path(path)
    arr = np.ascontiguousarray(array, dtype="<f4")
    blob = arr.tobytes()
    path.with_suffix(".bin").write_bytes(blob)
    header = {"shape": list(arr.shape), "dtype": "float32", "byte_order": "little", "layout": "row-major",
              "crc32": zlib.crc32(blob)}
    path.with_suffix(".json").write_text(json.dumps(header, sort_keys=True) + "\n")
    return path.with_suffix(".bin")


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    blob = path.with_suffix(".bin").read_bytes()
    if zlib.crc32(blob) != header["crc32"]:
        raise ValueError(f"{path.with_suffix('.bin')} fails its CRC32 check")
    return np.frombuffer(blob, dtype="<f4").reshape(header["shape"]).copy()
