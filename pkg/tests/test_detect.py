import numpy as np
import pytest

from rareaction import classify, embed
from rareaction.detect import (
    ClipWindow,
    DetectionResult,
    evaluate_detection,
    localize,
    merge_positive_windows,
    segment,
)
from rareaction.errors import InvalidInputError
from rareaction.evaluate import TimeInterval

from conftest import make_sequence, grey_frames


def windows_of(n, length=2.0):
    return [
        ClipWindow(
            clip_id=f"v_clip{t}",
            source_video="v",
            start=t * length,
            end=(t + 1) * length,
            frame_start=int(t * length * 10),
            frame_end=int((t + 1) * length * 10),
        )
        for t in range(n)
    ]


class TestSegment:
    def test_ten_seconds_at_120fps(self):
        frames = [np.zeros((2, 2, 1), np.uint8)] * 1200
        seq = make_sequence(frames, fps=120.0)
        windows = segment(seq, 2.0)
        assert len(windows) == 5
        assert all(w.frame_end - w.frame_start == 240 for w in windows)
        assert [w.start for w in windows] == [0.0, 2.0, 4.0, 6.0, 8.0]

    def test_remainder_window_is_shorter(self):
        frames = [np.zeros((2, 2, 1), np.uint8)] * 95  # 9.5 s at 10 fps
        seq = make_sequence(frames, fps=10.0)
        windows = segment(seq, 2.0)
        assert len(windows) == 5
        assert windows[-1].end - windows[-1].start == pytest.approx(1.5)
        assert windows[-1].frame_end - windows[-1].frame_start == 15

    def test_single_window(self):
        seq = make_sequence([np.zeros((2, 2, 1), np.uint8)] * 20, fps=10.0)
        assert len(segment(seq, 2.0)) == 1

    def test_windows_tile_exactly(self, rng):
        for fps, n_frames, length in ((12.0, 120, 2.0), (30.0, 47, 1.5), (10.0, 95, 2.0)):
            seq = make_sequence([np.zeros((2, 2, 1), np.uint8)] * n_frames, fps=fps)
            windows = segment(seq, length)
            assert windows[0].frame_start == 0
            assert windows[-1].frame_end == n_frames
            assert windows[0].start == 0.0
            assert windows[-1].end == pytest.approx(seq.duration)
            for a, b in zip(windows, windows[1:]):
                assert a.frame_end == b.frame_start
                assert a.end == pytest.approx(b.start)

    def test_nonpositive_clip_length(self, rng):
        seq = make_sequence(grey_frames(rng, 5))
        with pytest.raises(InvalidInputError):
            segment(seq, 0.0)


class TestMergePositiveWindows:
    def test_adjacent_positives_merge(self):
        intervals = merge_positive_windows(windows_of(5), [False, False, True, True, False])
        assert intervals == [TimeInterval(4.0, 8.0)]

    def test_no_positives(self):
        assert merge_positive_windows(windows_of(5), [False] * 5) == []

    def test_all_positive_spans_video(self):
        intervals = merge_positive_windows(windows_of(5), [True] * 5)
        assert intervals == [TimeInterval(0.0, 10.0)]

    def test_disjoint_runs_stay_separate(self):
        intervals = merge_positive_windows(
            windows_of(6), [True, False, True, True, False, True]
        )
        assert intervals == [
            TimeInterval(0.0, 2.0),
            TimeInterval(4.0, 8.0),
            TimeInterval(10.0, 12.0),
        ]

    def test_merged_intervals_are_maximal(self, rng):
        for _ in range(50):
            flags = (rng.random(8) < 0.5).tolist()
            intervals = merge_positive_windows(windows_of(8), flags)
            for a, b in zip(intervals, intervals[1:]):
                assert b.start > a.end  # a gap of at least one window

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            merge_positive_windows(windows_of(3), [True])


class BrightnessEmbedder(embed.Embedder):
    """Test backend: embeds a frame as its mean intensity."""

    backend = "mock"

    def __init__(self):
        self.dim = 1
        self.identity = "brightness"

    def embed_frame(self, frame):
        return np.array([float(frame.mean())])


def brightness_head(threshold_intensity=100.0, k=4):
    """Hand-built head that fires when mean selected-frame brightness exceeds
    the given intensity."""
    config = classify.HeadConfig(input_dim=k, hidden_layers=0, seed=0)
    head = classify.init_head(config)
    head.weights[0][:] = 0.0
    head.weights[0][:, 0] = 1.0 / k  # bottleneck unit 0 = mean brightness
    head.biases[0][:] = 0.0
    head.weights[1][:] = 0.0
    head.weights[1][0, 0] = 1.0
    head.biases[1][0] = -threshold_intensity
    head.threshold = 0.5
    return head


class TestLocalize:
    def make_video(self, bright_windows, n_windows=5, frames_per_window=10):
        frames = []
        for w in range(n_windows):
            value = 200 if w in bright_windows else 20
            frames += [np.full((4, 4, 1), value, np.uint8)] * frames_per_window
        return make_sequence(frames, fps=frames_per_window / 2.0)

    def test_positive_middle_window(self):
        seq = self.make_video({2})
        windows = segment(seq, 2.0)
        result = localize(seq, windows, brightness_head(), BrightnessEmbedder(), k=4)
        assert result.predicted == [TimeInterval(4.0, 6.0)]
        assert len(result.window_probs) == 5

    def test_no_positive_windows(self):
        seq = self.make_video(set())
        windows = segment(seq, 2.0)
        result = localize(seq, windows, brightness_head(), BrightnessEmbedder(), k=4)
        assert result.predicted == []

    def test_all_positive_gives_whole_video(self):
        seq = self.make_video({0, 1, 2, 3, 4})
        windows = segment(seq, 2.0)
        result = localize(seq, windows, brightness_head(), BrightnessEmbedder(), k=4)
        assert result.predicted == [TimeInterval(0.0, 10.0)]

    def test_scaler_is_applied(self):
        from rareaction.modelselect import FeatureScaler

        seq = self.make_video({2})
        windows = segment(seq, 2.0)
        # scaler shifts brightness down so nothing fires
        scaler = FeatureScaler(mean=np.full(4, 300.0), std=np.ones(4))
        result = localize(
            seq, windows, brightness_head(), BrightnessEmbedder(), k=4, scaler=scaler
        )
        assert result.predicted == []


class TestDetectionResult:
    def test_annotation_flags_correctness(self):
        result = DetectionResult(
            source_video="v",
            predicted=[TimeInterval(4, 6), TimeInterval(0, 2)],
            truths=[TimeInterval(4, 6)],
        )
        rows = result.annotate(0.5)
        assert rows[0]["correct"] is True
        assert rows[0]["t_iou"] == 1.0
        assert rows[1]["correct"] is False

    def test_json_round_trippable(self):
        result = DetectionResult(
            source_video="v", predicted=[TimeInterval(4, 6)], truths=[TimeInterval(4, 6)]
        )
        doc = result.to_json(0.25)
        assert doc["source_video"] == "v"
        assert doc["truths"] == [[4, 6]]


class TestEvaluateDetection:
    def test_perfect_results(self):
        results = [
            DetectionResult(
                source_video=f"v{i}",
                predicted=[TimeInterval(4, 6)],
                truths=[TimeInterval(4, 6)],
            )
            for i in range(9)
        ]
        report = evaluate_detection(results, 0.25, resamples=100, seed=0)
        assert report.mean == 1.0
        assert report.std == 0.0
        assert report.resamples == 100
        assert report.sample_size == 9

    def test_empty_results_rejected(self):
        with pytest.raises(InvalidInputError):
            evaluate_detection([], 0.5)
