"""Motion scoring of frame pairs and selection of the most motion-salient frames.

The motion score of frame t is the sum over pixels of the absolute greyscale
intensity difference to frame t-1, computed in exact integer arithmetic.
Frame 0 has no predecessor and can never be chosen by the motion method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, TooFewFramesError
from .media import FrameSequence, to_greyscale

MOTION_BASED = "motion_based"
EVENLY_SPACED = "evenly_spaced"


@dataclass
class DissimilarityStream:
    """Scores alpha_1..alpha_{N-1}; scores[t-1] compares frame t to frame t-1."""

    scores: np.ndarray  # int64, length n_frames - 1
    n_frames: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.int64)
        if len(self.scores) != self.n_frames - 1:
            raise InvalidInputError(
                f"expected {self.n_frames - 1} scores, got {len(self.scores)}"
            )
        if (self.scores < 0).any():
            raise InvalidInputError("dissimilarity scores must be non-negative")


@dataclass
class FrameSelection:
    """The k frame indices chosen for embedding, ascending, padded to length k."""

    indices: list[int]
    k: int
    method: str
    scores: list[int] | None = None

    def __post_init__(self):
        if len(self.indices) != self.k:
            raise InvalidInputError(
                f"selection holds {len(self.indices)} indices, expected k={self.k}"
            )
        core = _strip_padding(self.indices)
        if any(b <= a for a, b in zip(core, core[1:])):
            raise InvalidInputError("indices must be strictly ascending before padding")


def _strip_padding(indices: list[int]) -> list[int]:
    core = list(indices)
    while len(core) >= 2 and core[-1] == core[-2]:
        core.pop()
    return core


def _pad(indices: list[int], k: int) -> list[int]:
    return indices + [indices[-1]] * (k - len(indices))


def dissimilarity(a: np.ndarray, b: np.ndarray) -> int:
    """Sum of absolute 8-bit intensity differences between two grey frames."""
    if a.shape != b.shape:
        raise InvalidInputError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return int(np.abs(a.astype(np.int64) - b.astype(np.int64)).sum())


def score_stream(seq: FrameSequence, downscale: int | None = None) -> DissimilarityStream:
    """Score every consecutive frame pair of a sequence.

    ``downscale`` optionally subsamples the greyscale frames by an integer
    factor before scoring (speed knob; default off, scoring at native
    resolution).
    """
    if seq.n_frames < 2:
        raise TooFewFramesError(
            f"{seq.video_id!r} has {seq.n_frames} frame(s); need at least 2 to score motion"
        )
    if downscale is not None and downscale < 1:
        raise InvalidInputError(f"downscale must be >= 1, got {downscale}")

    def grey(frame):
        g = to_greyscale(frame)
        if downscale and downscale > 1:
            g = g[::downscale, ::downscale]
        return g

    scores = np.empty(seq.n_frames - 1, dtype=np.int64)
    prev = grey(seq.frames[0])
    for t in range(1, seq.n_frames):
        cur = grey(seq.frames[t])
        scores[t - 1] = dissimilarity(prev, cur)
        prev = cur
    return DissimilarityStream(scores=scores, n_frames=seq.n_frames)


def select_motion_based(stream: DissimilarityStream, k: int) -> FrameSelection:
    """Pick the k frames most dissimilar to their predecessor.

    Ties break toward the smaller frame index.  If fewer than k candidate
    frames exist, all are selected and the last index is repeated to length k.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    # argsort of negated scores, stable: ties keep ascending index order
    order = np.argsort(-stream.scores, kind="stable")[:k]
    frames = np.sort(order + 1)
    indices = _pad([int(i) for i in frames], k)
    scores = [int(stream.scores[i - 1]) for i in indices]
    return FrameSelection(indices=indices, k=k, method=MOTION_BASED, scores=scores)


def select_evenly_spaced(n_frames: int, k: int) -> FrameSelection:
    """Pick k evenly spaced frames starting from the first one.

    index_i = round(i * (n_frames - 1) / (k - 1)), rounding half up; duplicate
    indices collapse and the last index pads the result back to length k.
    """
    if n_frames < 1 or k < 1:
        raise InvalidInputError(f"n_frames and k must be >= 1, got {n_frames}, {k}")
    if k == 1:
        raw = [0]
    else:
        step = (n_frames - 1) / (k - 1)
        raw = [int(np.floor(i * step + 0.5)) for i in range(k)]
    deduped = sorted(set(raw))
    return FrameSelection(indices=_pad(deduped, k), k=k, method=EVENLY_SPACED)


def select_all_padded(n_frames: int, k: int, method: str = MOTION_BASED) -> FrameSelection:
    """Fallback for clips too short to score: every frame, padded to length k."""
    if n_frames < 1 or k < 1:
        raise InvalidInputError(f"n_frames and k must be >= 1, got {n_frames}, {k}")
    indices = _pad(list(range(min(n_frames, k))), k) if n_frames < k else list(range(k))
    return FrameSelection(indices=indices, k=k, method=method)


def select_frames(
    seq: FrameSequence, method: str, k: int, downscale: int | None = None
) -> FrameSelection:
    """Method dispatch used by the pipeline; falls back to select-all + pad
    when a clip is too short for motion scoring."""
    if method == EVENLY_SPACED:
        return select_evenly_spaced(seq.n_frames, k)
    if method == MOTION_BASED:
        try:
            return select_motion_based(score_stream(seq, downscale=downscale), k)
        except TooFewFramesError:
            return select_all_padded(seq.n_frames, k)
    raise InvalidInputError(f"unknown frame selection method {method!r}")
