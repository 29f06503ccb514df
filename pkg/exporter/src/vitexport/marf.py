"""MARF feature-file serialization.

Byte layout: magic "MARF", then little-endian u32 version=1, u32 d, u32 k,
u32 tag byte-length, UTF-8 tag bytes, k u32 frame indices, and k*d float32
values in frame-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MARF"
VERSION = 1


def write_marf(
    path: str | Path,
    values: np.ndarray,
    frame_indices: list[int],
    backbone_tag: str,
) -> None:
    """``values`` is (k, d) float32, one row per selected frame."""
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError(f"expected a (k, d) matrix, got shape {values.shape}")
    k, d = values.shape
    if len(frame_indices) != k:
        raise ValueError(f"{len(frame_indices)} frame indices for k={k}")
    if not np.isfinite(values).all():
        raise ValueError("non-finite feature values")
    tag = backbone_tag.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", VERSION, d, k, len(tag)))
        fh.write(tag)
        fh.write(struct.pack(f"<{k}I", *frame_indices))
        fh.write(values.tobytes())


def read_marf(path: str | Path) -> dict:
    """Minimal reader used for idempotency and self-checks."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"bad magic in {path}")
    version, d, k, tag_len = struct.unpack("<IIII", raw[4:20])
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    offset = 20
    tag = raw[offset : offset + tag_len].decode("utf-8")
    offset += tag_len
    indices = struct.unpack(f"<{k}I", raw[offset : offset + 4 * k])
    offset += 4 * k
    values = np.frombuffer(raw[offset : offset + 4 * k * d], dtype="<f4").reshape(k, d)
    return {"d": d, "k": k, "tag": tag, "frame_indices": indices, "values": values}
