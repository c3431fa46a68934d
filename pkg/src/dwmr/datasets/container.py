"""Dataset file: u32 header length, JSON header, raw little-endian sections.

The header lists every section as ``{"name", "dtype", "shape"}`` in payload
order; all sections are currently ``u8``.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .generate import TransitionSet

FORMAT = "dwmr-dataset"
VERSION = 1
_FIELDS = ("obs", "actions", "next_obs", "truth", "truth_next")


class DatasetFormatError(ValueError):
    pass


def write_dataset(path: str | os.PathLike, splits: dict[str, TransitionSet], **info) -> dict:
    sections, payloads = [], []
    for split, ts in splits.items():
        for f in _FIELDS:
            arr = np.ascontiguousarray(getattr(ts, f), dtype=np.uint8)
            sections.append({"name": f"{split}.{f}", "dtype": "u8", "shape": list(arr.shape)})
            payloads.append(arr.tobytes())
    header = {
        "format": FORMAT,
        "version": VERSION,
        **info,
        "splits": {name: {"count": len(ts), **ts.meta} for name, ts in splits.items()},
        "sections": sections,
    }
    raw = (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for p in payloads:
            fh.write(p)
    return header


def read_header(path: str | os.PathLike) -> dict:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(n).decode("utf-8"))


def read_dataset(path: str | os.PathLike) -> tuple[dict, dict[str, TransitionSet]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise DatasetFormatError("file too short for a header")
    (n,) = struct.unpack("<I", blob[:4])
    try:
        header = json.loads(blob[4:4 + n].decode("utf-8"))
    except ValueError as exc:
        raise DatasetFormatError(f"unreadable header: {exc}") from exc
    if header.get("format") != FORMAT:
        raise DatasetFormatError(f"not a {FORMAT} file")
    pos = 4 + n
    arrays: dict[str, np.ndarray] = {}
    for sec in header["sections"]:
        size = int(np.prod(sec["shape"], dtype=np.int64))
        if pos + size > len(blob):
            raise DatasetFormatError(f"payload truncated in section {sec['name']}")
        arrays[sec["name"]] = np.frombuffer(blob, np.uint8, size, pos).reshape(sec["shape"]).copy()
        pos += size
    if pos != len(blob):
        raise DatasetFormatError(f"{len(blob) - pos} bytes beyond the declared sections")
    splits = {}
    for name, info in header["splits"].items():
        fields = {f: arrays[f"{name}.{f}"] for f in _FIELDS}
        if len(fields["actions"]) != info["count"]:
            raise DatasetFormatError(f"header count {info['count']} != {len(fields['actions'])} records in {name}")
        meta = {k: v for k, v in info.items() if k != "count"}
        splits[name] = TransitionSet(**fields, meta=meta)
    return header, splits
