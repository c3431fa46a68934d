"""IDX (MNIST) file parsing.

Header is big-endian: two zero bytes, a type byte (0x08 = unsigned byte),
a rank byte, then one u32 per dimension. Image files therefore start with
0x00000803 (2051) and label files with 0x00000801 (2049).
"""

from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
_MAX_ITEMS = 1 << 31


class IDXError(ValueError):
    pass


def _parse_raw(blob: bytes) -> np.ndarray:
    if len(blob) < 4:
        raise IDXError("truncated IDX header")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic not in (IMAGE_MAGIC, LABEL_MAGIC):
        raise IDXError(f"unexpected IDX magic 0x{magic:08x}")
    rank = magic & 0xFF
    head = 4 + 4 * rank
    if len(blob) < head:
        raise IDXError("truncated IDX header")
    dims = struct.unpack(f">{rank}I", blob[4:head])
    total = 1
    for d in dims:
        total *= d
        if total > _MAX_ITEMS:
            raise IDXError(f"IDX dimensions {dims} overflow the supported size")
    if len(blob) - head < total:
        raise IDXError(f"truncated IDX payload: need {total} bytes, have {len(blob) - head}")
    if len(blob) - head > total:
        raise IDXError(f"{len(blob) - head - total} trailing bytes after IDX payload")
    return np.frombuffer(blob, dtype=np.uint8, count=total, offset=head).reshape(dims)


def parse_idx(blob: bytes) -> np.ndarray:
    """Images come back as float64 in [0, 1] with shape (count, rows, cols);
    labels as int64 with shape (count,)."""
    arr = _parse_raw(blob)
    if arr.ndim == 3:
        return arr.astype(np.float64) / 255.0
    if arr.ndim == 1:
        return arr.astype(np.int64)
    raise IDXError(f"unsupported IDX rank {arr.ndim}")


def write_idx(arr: np.ndarray) -> bytes:
    """Serialize uint8-compatible images (N, H, W) or labels (N,)."""
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        arr = np.rint(arr * 255.0)
    arr = arr.astype(np.uint8)
    if arr.ndim not in (1, 3):
        raise IDXError("only rank-1 labels and rank-3 images are supported")
    magic = 0x00000800 | arr.ndim
    return struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes()


def read_idx_file(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return parse_idx(fh.read())


def find_mnist(root: str | os.PathLike) -> tuple[Path, Path] | None:
    """Locate the official training images/labels under ``root``, if present."""
    root = Path(root)
    for stem in ("train-images-idx3-ubyte", "train-images.idx3-ubyte"):
        for ext in ("", ".gz"):
            img = root / (stem + ext)
            lab = root / (stem.replace("images", "labels").replace("idx3", "idx1") + ext)
            if img.exists() and lab.exists():
                return img, lab
    return None
