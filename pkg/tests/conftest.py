import numpy as np
import pytest

from rareaction.media import FrameSequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_sequence(frames, fps=10.0, video_id="vid"):
    return FrameSequence(video_id=video_id, frames=list(frames), fps=fps)


def grey_frames(rng, n, h=8, w=8):
    """Random single-channel uint8 frames."""
    return [rng.integers(0, 256, size=(h, w, 1), dtype=np.uint8) for _ in range(n)]


def rgb_frames(rng, n, h=8, w=8):
    return [rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8) for _ in range(n)]
