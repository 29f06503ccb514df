"""Video decoding and the deterministic image transforms used downstream.

Frames are numpy uint8 arrays of shape (height, width, channels) with channels
1 or 3 (RGB order).  A greyscale frame ("GreyFrame") is a 2-D uint8 array.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DecodeError, EmptyVideoError, InvalidInputError

# ITU-R BT.601 luma weights; fixed for reproducibility.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_FRAME_FILE_RE = re.compile(r".*?(\d+)\.(png|jpg|jpeg)$", re.IGNORECASE)


@dataclass
class DecodeConfig:
    """Optional decoding controls.

    stride: keep every stride-th frame (1 = all frames).
    limit: stop after this many kept frames.
    fps: frames-per-second override, required for image directories without
         a ``meta.json`` sidecar.
    """

    stride: int = 1
    limit: int | None = None
    fps: float | None = None

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.limit is not None and self.limit < 1:
            raise ConfigError(f"limit must be >= 1, got {self.limit}")
        if self.fps is not None and self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")


@dataclass
class FrameSequence:
    """A decoded video: ordered frames plus timing metadata."""

    video_id: str
    frames: list[np.ndarray] = field(repr=False)
    fps: float

    def __post_init__(self):
        if self.fps <= 0:
            raise InvalidInputError(f"fps must be positive, got {self.fps}")
        if not self.frames:
            raise EmptyVideoError(f"video {self.video_id!r} has zero frames")
        shape = self.frames[0].shape
        for i, f in enumerate(self.frames):
            if f.shape != shape:
                raise InvalidInputError(
                    f"frame {i} of {self.video_id!r} has shape {f.shape}, expected {shape}"
                )
            if f.dtype != np.uint8:
                raise InvalidInputError(
                    f"frame {i} of {self.video_id!r} has dtype {f.dtype}, expected uint8"
                )

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.n_frames / self.fps

    def slice(self, start: int, end: int, video_id: str | None = None) -> "FrameSequence":
        """Sub-sequence over the half-open frame range [start, end)."""
        if not 0 <= start < end <= self.n_frames:
            raise InvalidInputError(
                f"frame range [{start}, {end}) invalid for {self.n_frames} frames"
            )
        return FrameSequence(
            video_id=video_id or f"{self.video_id}[{start}:{end}]",
            frames=self.frames[start:end],
            fps=self.fps,
        )


def _as_hwc(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img[:, :, None]
    return img


def _decode_image_dir(path: Path, config: DecodeConfig) -> FrameSequence:
    import cv2

    entries = []
    for p in path.iterdir():
        m = _FRAME_FILE_RE.match(p.name)
        if m:
            entries.append((int(m.group(1)), p))
    entries.sort()
    if not entries:
        raise EmptyVideoError(f"no numbered PNG/JPEG frames in {path}")

    fps = config.fps
    if fps is None:
        meta = path / "meta.json"
        if not meta.exists():
            raise DecodeError(f"{path} has no meta.json sidecar and no fps was configured")
        try:
            fps = float(json.loads(meta.read_text())["fps"])
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise DecodeError(f"invalid meta.json in {path}: {exc}") from exc

    frames = []
    for i, (_, p) in enumerate(entries):
        if i % config.stride:
            continue
        img = cv2.imread(str(p), cv2.IMREAD_UNCHANGED)
        if img is None:
            raise DecodeError(f"unreadable frame file {p}")
        if img.ndim == 3 and img.shape[2] == 3:
            img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
        elif img.ndim == 3 and img.shape[2] == 4:
            img = cv2.cvtColor(img, cv2.COLOR_BGRA2RGB)
        frames.append(_as_hwc(np.ascontiguousarray(img, dtype=np.uint8)))
        if config.limit is not None and len(frames) >= config.limit:
            break
    return FrameSequence(video_id=path.name, frames=frames, fps=fps)


def _decode_container(path: Path, config: DecodeConfig) -> FrameSequence:
    import cv2

    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise DecodeError(f"cannot open video file {path}")
    try:
        fps = config.fps or cap.get(cv2.CAP_PROP_FPS)
        frames = []
        index = 0
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if index % config.stride == 0:
                frames.append(
                    _as_hwc(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB).astype(np.uint8))
                )
                if config.limit is not None and len(frames) >= config.limit:
                    break
            index += 1
    finally:
        cap.release()
    if not frames:
        raise EmptyVideoError(f"decoded zero frames from {path}")
    if not fps or fps <= 0:
        raise DecodeError(f"{path} reports no usable fps; pass one via DecodeConfig")
    return FrameSequence(video_id=path.stem, frames=frames, fps=float(fps))


def decode_video(path: str | Path, decode_config: DecodeConfig | None = None) -> FrameSequence:
    """Decode a video container, or a directory of numbered image frames.

    Directories must contain zero-padded numbered PNG/JPEG files plus a
    ``meta.json`` sidecar with ``{"fps": number}`` (or an fps in the config).
    Decoding is deterministic: the same input yields bit-identical frames.
    """
    path = Path(path)
    config = decode_config or DecodeConfig()
    if not path.exists():
        raise DecodeError(f"no such file or directory: {path}")
    if path.is_dir():
        return _decode_image_dir(path, config)
    return _decode_container(path, config)


def round_half_up_u8(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero, clipped to uint8 range."""
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def to_greyscale(frame: np.ndarray) -> np.ndarray:
    """Collapse an RGB frame to 8-bit intensities with BT.601 luma weights.

    1-channel input is passed through unchanged (as a 2-D view).
    """
    if frame.ndim == 2:
        return frame
    if frame.ndim == 3 and frame.shape[2] == 1:
        return frame[:, :, 0]
    if frame.ndim == 3 and frame.shape[2] == 3:
        r, g, b = LUMA_WEIGHTS
        luma = (
            r * frame[:, :, 0].astype(np.float64)
            + g * frame[:, :, 1].astype(np.float64)
            + b * frame[:, :, 2].astype(np.float64)
        )
        return round_half_up_u8(luma)
    raise InvalidInputError(f"expected 1 or 3 channels, got shape {frame.shape}")


def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Deterministic bilinear resize with edge replication and half-up rounding."""
    squeeze = img.ndim == 2
    img3 = _as_hwc(img).astype(np.float64)
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

    row0 = img3[y0c]
    row1 = img3[y1c]
    top = row0[:, x0c] * (1 - wx) + row0[:, x1c] * wx
    bottom = row1[:, x0c] * (1 - wx) + row1[:, x1c] * wx
    out = round_half_up_u8(top * (1 - wy) + bottom * wy)
    return out[:, :, 0] if squeeze else out


def resize_for_patch(frame: np.ndarray, short_side: int, patch_size: int) -> np.ndarray:
    """Resize so the short side is exact and the long side is a patch multiple.

    The shorter output side equals ``short_side``; the longer side is scaled
    to preserve aspect ratio, then floored to the nearest multiple of
    ``patch_size`` (a slight distortion is accepted).  Bilinear interpolation.
    """
    if patch_size < 1 or short_side < 1:
        raise ConfigError("short_side and patch_size must be positive")
    if short_side % patch_size:
        raise ConfigError(
            f"short_side {short_side} is not divisible by patch_size {patch_size}"
        )
    if frame.size == 0:
        raise InvalidInputError("cannot resize an empty frame")

    h, w = frame.shape[:2]
    if h <= w:
        new_h = short_side
        new_w = int(w * short_side / h / patch_size) * patch_size
    else:
        new_w = short_side
        new_h = int(h * short_side / w / patch_size) * patch_size
    if (new_h, new_w) == (h, w):
        return frame
    return _bilinear_resize(frame, new_h, new_w)
