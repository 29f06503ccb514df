"""Synthetic videos for desk-scale end-to-end experiments.

Each video shows a bright blob drifting over a dark background.  Inside the
event window the blob accelerates sharply; its rendering integrates the
motion over the frame exposure, so fast frames show a smeared streak instead
of a compact spot.  That gives consecutive-frame dissimilarity a strong peak
inside the event and gives per-frame intensity statistics a learnable
appearance cue.  Labels follow middle-positive clip semantics: the event sits
inside the middle clip of each video.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .evaluate import TimeInterval
from .media import FrameSequence

RENDER_SUBSTEPS = 8


@dataclass(frozen=True)
class SyntheticSpec:
    n_videos: int = 60
    frame_size: tuple[int, int] = (64, 64)  # (height, width)
    fps: float = 12.0
    clip_length: float = 2.0
    clips_per_video: int = 5
    event_window: tuple[float, float] | None = None  # defaults to the middle clip
    event_jitter: bool = False  # re-place the event (seeded) inside the middle clip per video
    base_speed: float = 0.8  # blob px per frame outside the event
    event_speed: float = 7.0  # blob px per frame inside the event
    blob_sigma: float = 3.0
    blob_amplitude: float = 160.0
    background: float = 40.0
    noise_std: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n_videos < 1:
            raise ConfigError("n_videos must be positive")
        if self.clips_per_video % 2 == 0:
            raise ConfigError("clips_per_video must be odd (middle clip carries the event)")
        start, end = self.event()
        if not 0 <= start < end <= self.duration():
            raise ConfigError(f"event window [{start}, {end}] outside the video")

    def duration(self) -> float:
        return self.clips_per_video * self.clip_length

    def frames_per_video(self) -> int:
        return int(round(self.duration() * self.fps))

    def event(self) -> tuple[float, float]:
        if self.event_window is not None:
            return self.event_window
        middle = self.clips_per_video // 2
        return (middle * self.clip_length, (middle + 1) * self.clip_length)

    def middle_clip(self) -> TimeInterval:
        middle = self.clips_per_video // 2
        return TimeInterval(middle * self.clip_length, (middle + 1) * self.clip_length)


def _render_frame(spec: SyntheticSpec, pos: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    """One frame: blob brightness integrated along the motion path."""
    h, w = spec.frame_size
    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    canvas = np.full((h, w), spec.background)
    amp = spec.blob_amplitude / RENDER_SUBSTEPS
    for s in range(RENDER_SUBSTEPS):
        cy, cx = pos + velocity * (s / RENDER_SUBSTEPS)
        d2 = (ys - cy) ** 2 + (xs - cx) ** 2
        canvas += amp * np.exp(-d2 / (2 * spec.blob_sigma**2))
    return canvas


def _bounce(pos: np.ndarray, velocity: np.ndarray, bounds) -> None:
    """Advance position by velocity, reflecting at the margins (in place)."""
    for axis in (0, 1):
        lo, hi = bounds[axis]
        pos[axis] += velocity[axis]
        if pos[axis] < lo:
            pos[axis] = 2 * lo - pos[axis]
            velocity[axis] = -velocity[axis]
        elif pos[axis] > hi:
            pos[axis] = 2 * hi - pos[axis]
            velocity[axis] = -velocity[axis]


def _video_bounds(spec: SyntheticSpec):
    h, w = spec.frame_size
    margin = 3 * spec.blob_sigma
    return ((margin, h - 1 - margin), (margin, w - 1 - margin))


def _video_params(spec: SyntheticSpec, index: int):
    """Seeded per-video draws: start position, direction, event placement."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, index]))
    bounds = _video_bounds(spec)
    pos = np.array([rng.uniform(*bounds[0]), rng.uniform(*bounds[1])], dtype=np.float64)
    angle = rng.uniform(0, 2 * np.pi)
    direction = np.array([np.sin(angle), np.cos(angle)])
    event_start, event_end = spec.event()
    if spec.event_jitter:
        mid = spec.middle_clip()
        length = event_end - event_start
        event_start = rng.uniform(mid.start, mid.end - length)
        event_end = event_start + length
    return rng, pos, direction, (event_start, event_end)


def video_event_window(spec: SyntheticSpec, index: int) -> tuple[float, float]:
    """The (possibly jittered) event window of the index-th video, seconds."""
    return _video_params(spec, index)[3]


def generate_video(spec: SyntheticSpec, index: int) -> FrameSequence:
    """Deterministic frames for the index-th video of the spec."""
    rng, pos, direction, (event_start, event_end) = _video_params(spec, index)
    bounds = _video_bounds(spec)
    n_frames = spec.frames_per_video()
    frames = []
    for t in range(n_frames):
        seconds = t / spec.fps
        speed = spec.event_speed if event_start <= seconds < event_end else spec.base_speed
        velocity = direction * speed
        canvas = _render_frame(spec, pos, velocity)
        canvas += rng.normal(0.0, spec.noise_std, size=canvas.shape)
        frames.append(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)[:, :, None])
        _bounce(pos, velocity, bounds)
        direction = velocity / np.linalg.norm(velocity)
    return FrameSequence(video_id=f"video_{index:03d}", frames=frames, fps=spec.fps)


@dataclass
class SyntheticDataset:
    root: Path
    video_ids: list[str]
    truth: dict[str, list[TimeInterval]]
    spec: SyntheticSpec = field(repr=False, default=None)

    @property
    def truth_path(self) -> Path:
        return self.root / "truth.jsonl"


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> SyntheticDataset:
    """Write every video as a directory of numbered PNG frames plus a
    ``meta.json`` sidecar, and the ground-truth intervals as JSON Lines."""
    import cv2

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    video_ids = []
    truth: dict[str, list[TimeInterval]] = {}
    mid = spec.middle_clip()
    with open(out_dir / "truth.jsonl", "w", encoding="utf-8") as fh:
        for index in range(spec.n_videos):
            seq = generate_video(spec, index)
            video_dir = out_dir / seq.video_id
            video_dir.mkdir(exist_ok=True)
            for t, frame in enumerate(seq.frames):
                cv2.imwrite(str(video_dir / f"frame_{t:05d}.png"), frame[:, :, 0])
            (video_dir / "meta.json").write_text(json.dumps({"fps": spec.fps}))
            video_ids.append(seq.video_id)
            truth[seq.video_id] = [mid]
            fh.write(
                json.dumps(
                    {"source_video": seq.video_id, "intervals": [[mid.start, mid.end]]}
                )
                + "\n"
            )
    return SyntheticDataset(root=out_dir, video_ids=video_ids, truth=truth, spec=spec)


def read_truth(path: str | Path) -> dict[str, list[TimeInterval]]:
    """Ground-truth JSON Lines: {"source_video": ..., "intervals": [[s, e]...]}."""
    truth = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            truth[obj["source_video"]] = [
                TimeInterval(float(s), float(e)) for s, e in obj["intervals"]
            ]
    return truth
