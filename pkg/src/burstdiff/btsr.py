"""BTSR tensor container and PNG export.

File layout (little-endian): magic ``BTSR``, u32 version (=1), u32 ndim,
ndim x u32 dims, then float32 data in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"BTSR"
VERSION = 1


def write_btsr(path, tensor: np.ndarray) -> None:
    tensor = np.ascontiguousarray(tensor, dtype=np.float32)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, tensor.ndim))
        fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        fh.write(tensor.astype("<f4").tobytes())


def read_btsr(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a BTSR file (magic {magic!r})")
        version, ndim = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported BTSR version {version}")
        dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        n = int(np.prod(dims))
        raw = fh.read(4 * n)
        if len(raw) != 4 * n:
            raise ValueError(f"{path}: truncated BTSR payload")
        data = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    return data.reshape(dims)


def write_png(path, img: np.ndarray) -> None:
    """Write a [3,H,W] (or [H,W]) tensor as 8-bit PNG, clamped to [0,1]."""
    if img.ndim == 3:
        if img.shape[0] != 3:
            raise ValueError(f"PNG export needs 3 channels, got shape {img.shape}")
        arr = np.transpose(img, (1, 2, 0))
        mode = "RGB"
    elif img.ndim == 2:
        arr = img
        mode = "L"
    else:
        raise ValueError(f"cannot export shape {img.shape} as PNG")
    q = np.clip(arr, 0.0, 1.0)
    q = np.rint(q * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(q, mode=mode).save(path)
