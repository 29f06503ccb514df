"""Rare-action recognition and temporal detection in video.

Pipeline: motion-guided frame selection -> frozen per-frame embeddings ->
shallow trainable classification head -> recognition and detection metrics
with bootstrapped confidence intervals.
"""

from . import (
    classify,
    datasets,
    detect,
    embed,
    errors,
    evaluate,
    frameselect,
    manifest,
    media,
    modelselect,
    pipeline,
    synth,
)

__all__ = [
    "classify",
    "datasets",
    "detect",
    "embed",
    "errors",
    "evaluate",
    "frameselect",
    "manifest",
    "media",
    "modelselect",
    "pipeline",
    "synth",
]

__version__ = "0.1.0"
