"""Temporal action detection on untrimmed video.

The untrimmed video is tiled into fixed-length windows, each window is
classified with the trained head, and maximal runs of adjacent positive
windows merge into predicted intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import classify, embed, evaluate, frameselect
from .classify import ClassifierHead
from .errors import InvalidInputError
from .evaluate import BootstrapReport, TimeInterval
from .media import FrameSequence


@dataclass(frozen=True)
class ClipWindow:
    clip_id: str
    source_video: str
    start: float
    end: float
    frame_start: int
    frame_end: int  # half-open

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise InvalidInputError(f"bad window times [{self.start}, {self.end})")
        if not 0 <= self.frame_start < self.frame_end:
            raise InvalidInputError(
                f"bad frame range [{self.frame_start}, {self.frame_end})"
            )


@dataclass
class DetectionResult:
    source_video: str
    predicted: list[TimeInterval]
    truths: list[TimeInterval] = field(default_factory=list)
    window_probs: list[float] = field(default_factory=list)

    def annotate(self, threshold: float) -> list[dict]:
        """Per predicted interval: greedy-matched t-IoU and correctness."""
        matches = evaluate.match_intervals(self.predicted, self.truths)
        return [
            {
                "start": p.start,
                "end": p.end,
                "t_iou": iou,
                "correct": ti is not None and iou >= threshold,
            }
            for p, (iou, ti) in zip(self.predicted, matches)
        ]

    def to_json(self, threshold: float) -> dict:
        return {
            "source_video": self.source_video,
            "predicted": self.annotate(threshold),
            "truths": [[t.start, t.end] for t in self.truths],
            "window_probs": self.window_probs,
        }


def segment(seq: FrameSequence, clip_length: float) -> list[ClipWindow]:
    """Tile [0, duration) with non-overlapping windows of ``clip_length``
    seconds; the last window may be shorter.  Frame boundaries are the
    half-open ranges [round(t*L*fps), round((t+1)*L*fps))."""
    if clip_length <= 0:
        raise InvalidInputError(f"clip_length must be positive, got {clip_length}")
    n_windows = int(np.ceil(seq.duration / clip_length - 1e-9))
    windows = []
    for t in range(n_windows):
        last = t == n_windows - 1
        frame_start = int(np.floor(t * clip_length * seq.fps + 0.5))
        frame_end = (
            seq.n_frames
            if last
            else min(int(np.floor((t + 1) * clip_length * seq.fps + 0.5)), seq.n_frames)
        )
        windows.append(
            ClipWindow(
                clip_id=f"{seq.video_id}_clip{t}",
                source_video=seq.video_id,
                start=t * clip_length,
                end=seq.duration if last else (t + 1) * clip_length,
                frame_start=frame_start,
                frame_end=frame_end,
            )
        )
    return windows


def merge_positive_windows(
    windows: list[ClipWindow], positive: list[bool]
) -> list[TimeInterval]:
    """Merge maximal runs of adjacent positive windows into intervals."""
    if len(windows) != len(positive):
        raise InvalidInputError("windows and positive flags must align")
    intervals = []
    run_start = None
    prev_end = 0.0
    for w, pos in zip(windows, positive):
        if pos and run_start is None:
            run_start = w.start
        elif not pos and run_start is not None:
            intervals.append(TimeInterval(run_start, prev_end))
            run_start = None
        prev_end = w.end
    if run_start is not None:
        intervals.append(TimeInterval(run_start, windows[-1].end))
    return intervals


def localize(
    seq: FrameSequence,
    windows: list[ClipWindow],
    head: ClassifierHead,
    embedder: embed.Embedder,
    method: str = frameselect.MOTION_BASED,
    k: int = 10,
    downscale: int | None = None,
    scaler=None,
) -> DetectionResult:
    """Classify every window with the recognition pipeline and merge the
    positive ones into predicted intervals.

    ``scaler`` must be the feature scaler the head was trained with, if any.
    """
    probs = []
    for w in windows:
        clip = seq.slice(w.frame_start, w.frame_end, video_id=w.clip_id)
        sel = frameselect.select_frames(clip, method, k, downscale=downscale)
        feature = embed.build_video_feature(embedder, clip, sel)
        vec = feature.vector.astype(np.float64)
        if scaler is not None:
            vec = scaler.transform(vec)
        probs.append(float(classify.forward(head, vec)[0]))
    positive = [p >= head.threshold for p in probs]
    return DetectionResult(
        source_video=seq.video_id,
        predicted=merge_positive_windows(windows, positive),
        window_probs=probs,
    )


def evaluate_detection(
    results: list[DetectionResult],
    tiou_threshold: float,
    resamples: int = 100,
    seed: int = 0,
) -> BootstrapReport:
    """Bootstrap the mean per-video precision over videos (resample size ==
    video count)."""
    if not results:
        raise InvalidInputError("need at least one detection result")
    data = [(r.predicted, r.truths) for r in results]

    def metric(sample):
        return evaluate.detection_ap(sample, tiou_threshold)["ap_mean"]

    return evaluate.bootstrap(metric, data, resamples=resamples, seed=seed)
