"""Frame preprocessing matching the recognition pipeline's transform contract.

Shorter side resized to ``short_side`` exactly, longer side aspect-preserving
and floored to the nearest multiple of ``patch_size``, bilinear interpolation
with half-up rounding to 8-bit, then per-channel normalization.
"""

from __future__ import annotations

import numpy as np


def round_half_up_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    img3 = (img[:, :, None] if img.ndim == 2 else img).astype(np.float64)
    in_h, in_w = img3.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    y0c = np.clip(y0, 0, in_h - 1)
    y1c = np.clip(y0 + 1, 0, in_h - 1)
    x0c = np.clip(x0, 0, in_w - 1)
    x1c = np.clip(x0 + 1, 0, in_w - 1)
    row0, row1 = img3[y0c], img3[y1c]
    top = row0[:, x0c] * (1 - wx) + row0[:, x1c] * wx
    bottom = row1[:, x0c] * (1 - wx) + row1[:, x1c] * wx
    out = round_half_up_u8(top * (1 - wy) + bottom * wy)
    return out[:, :, 0] if img.ndim == 2 else out


def resize_for_patch(frame: np.ndarray, short_side: int, patch_size: int) -> np.ndarray:
    if short_side % patch_size:
        raise ValueError(f"short side {short_side} not divisible by patch {patch_size}")
    h, w = frame.shape[:2]
    if h <= w:
        new_h = short_side
        new_w = int(w * short_side / h / patch_size) * patch_size
    else:
        new_w = short_side
        new_h = int(h * short_side / w / patch_size) * patch_size
    if (new_h, new_w) == (h, w):
        return frame
    return bilinear_resize(frame, new_h, new_w)


def ensure_rgb(frame: np.ndarray) -> np.ndarray:
    if frame.ndim == 2:
        return np.repeat(frame[:, :, None], 3, axis=2)
    if frame.shape[2] == 1:
        return np.repeat(frame, 3, axis=2)
    return frame


def normalize_chw(frame_u8: np.ndarray, mean, std) -> np.ndarray:
    """uint8 HWC RGB -> normalized float32 CHW."""
    scaled = frame_u8.astype(np.float32) / 255.0
    scaled = (scaled - np.asarray(mean, np.float32)) / np.asarray(std, np.float32)
    return np.transpose(scaled, (2, 0, 1))


def prepare_frame(frame: np.ndarray, short_side: int, patch_size: int, mean, std) -> np.ndarray:
    return normalize_chw(
        resize_for_patch(ensure_rgb(frame), short_side, patch_size), mean, std
    )
