import json

import numpy as np
import pytest

from rareaction import media
from rareaction.errors import (
    ConfigError,
    DecodeError,
    EmptyVideoError,
    InvalidInputError,
)

from conftest import make_sequence, grey_frames


def write_frame_dir(path, frames, fps=2.0, ext="png"):
    import cv2

    path.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        cv2.imwrite(str(path / f"frame_{i:04d}.{ext}"), frame)
    (path / "meta.json").write_text(json.dumps({"fps": fps}))
    return path


class TestDecodeVideo:
    def test_image_directory_with_sidecar_fps(self, tmp_path, rng):
        frames = [f[:, :, 0] for f in grey_frames(rng, 5)]
        d = write_frame_dir(tmp_path / "vid", frames, fps=1.0)
        seq = media.decode_video(d)
        assert seq.n_frames == 5
        assert seq.fps == 1.0
        assert seq.video_id == "vid"

    def test_config_fps_overrides_sidecar(self, tmp_path, rng):
        frames = [f[:, :, 0] for f in grey_frames(rng, 3)]
        d = write_frame_dir(tmp_path / "vid", frames, fps=1.0)
        seq = media.decode_video(d, media.DecodeConfig(fps=30.0))
        assert seq.fps == 30.0

    def test_frames_round_trip_bit_exact(self, tmp_path, rng):
        frames = [f[:, :, 0] for f in grey_frames(rng, 4)]
        d = write_frame_dir(tmp_path / "vid", frames)
        seq = media.decode_video(d)
        for original, decoded in zip(frames, seq.frames):
            assert np.array_equal(original, decoded[:, :, 0])

    def test_redecode_is_deterministic(self, tmp_path, rng):
        d = write_frame_dir(tmp_path / "vid", [f[:, :, 0] for f in grey_frames(rng, 6)])
        a = media.decode_video(d)
        b = media.decode_video(d)
        assert a.n_frames == b.n_frames
        assert np.array_equal(a.frames[0], b.frames[0])
        assert np.array_equal(a.frames[-1], b.frames[-1])

    def test_stride_and_limit(self, tmp_path, rng):
        d = write_frame_dir(tmp_path / "vid", [f[:, :, 0] for f in grey_frames(rng, 10)])
        assert media.decode_video(d, media.DecodeConfig(stride=2)).n_frames == 5
        assert media.decode_video(d, media.DecodeConfig(limit=3)).n_frames == 3

    def test_rgb_png_decodes_as_rgb(self, tmp_path):
        import cv2

        d = tmp_path / "vid"
        d.mkdir()
        frame = np.zeros((4, 4, 3), np.uint8)
        frame[..., 0] = 200  # red in RGB
        cv2.imwrite(str(d / "frame_0000.png"), cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
        (d / "meta.json").write_text('{"fps": 1}')
        seq = media.decode_video(d)
        assert (seq.frames[0][..., 0] == 200).all()
        assert (seq.frames[0][..., 2] == 0).all()

    def test_missing_path_raises(self, tmp_path):
        with pytest.raises(DecodeError):
            media.decode_video(tmp_path / "nope")

    def test_corrupt_container_raises(self, tmp_path):
        bad = tmp_path / "corrupt.mp4"
        bad.write_bytes(b"not a video at all")
        with pytest.raises(DecodeError):
            media.decode_video(bad)

    def test_empty_directory_raises(self, tmp_path):
        d = tmp_path / "vid"
        d.mkdir()
        (d / "meta.json").write_text('{"fps": 1}')
        with pytest.raises(EmptyVideoError):
            media.decode_video(d)

    def test_directory_without_fps_raises(self, tmp_path, rng):
        import cv2

        d = tmp_path / "vid"
        d.mkdir()
        cv2.imwrite(str(d / "frame_0000.png"), grey_frames(rng, 1)[0][:, :, 0])
        with pytest.raises(DecodeError):
            media.decode_video(d)


class TestFrameSequence:
    def test_mismatched_frame_shapes_rejected(self, rng):
        frames = [np.zeros((4, 4, 1), np.uint8), np.zeros((5, 4, 1), np.uint8)]
        with pytest.raises(InvalidInputError):
            make_sequence(frames)

    def test_zero_frames_rejected(self):
        with pytest.raises(EmptyVideoError):
            make_sequence([])

    def test_nonpositive_fps_rejected(self, rng):
        with pytest.raises(InvalidInputError):
            make_sequence(grey_frames(rng, 2), fps=0)

    def test_slice(self, rng):
        seq = make_sequence(grey_frames(rng, 10))
        part = seq.slice(2, 5)
        assert part.n_frames == 3
        assert np.array_equal(part.frames[0], seq.frames[2])
        with pytest.raises(InvalidInputError):
            seq.slice(5, 5)


class TestToGreyscale:
    def test_all_white_rgb(self):
        frame = np.full((3, 3, 3), 255, np.uint8)
        assert (media.to_greyscale(frame) == 255).all()

    def test_pure_red_maps_to_76(self):
        frame = np.zeros((2, 2, 3), np.uint8)
        frame[..., 0] = 255
        assert (media.to_greyscale(frame) == 76).all()  # round(0.299 * 255)

    def test_single_channel_passthrough(self, rng):
        frame = grey_frames(rng, 1)[0]
        out = media.to_greyscale(frame)
        assert np.array_equal(out, frame[:, :, 0])

    def test_idempotent_on_grey(self, rng):
        frame = grey_frames(rng, 1)[0]
        once = media.to_greyscale(frame)
        assert np.array_equal(media.to_greyscale(once), once)

    def test_unsupported_channel_count(self):
        with pytest.raises(InvalidInputError):
            media.to_greyscale(np.zeros((2, 2, 2), np.uint8))


class TestResizeForPatch:
    def test_hd_frame_formula(self, rng):
        frame = rng.integers(0, 256, size=(1080, 1920, 3), dtype=np.uint8)
        out = media.resize_for_patch(frame, 448, 14)
        # aspect gives 796.4, floored to the nearest multiple of 14
        assert out.shape == (448, 784, 3)

    def test_square_input_is_fixed_point(self, rng):
        frame = rng.integers(0, 256, size=(448, 448, 3), dtype=np.uint8)
        out = media.resize_for_patch(frame, 448, 14)
        assert np.array_equal(out, frame)

    def test_patch_multiple_already_is_unchanged(self, rng):
        frame = rng.integers(0, 256, size=(448, 462, 3), dtype=np.uint8)
        out = media.resize_for_patch(frame, 448, 14)
        assert np.array_equal(out, frame)

    def test_portrait_orientation(self, rng):
        frame = rng.integers(0, 256, size=(1920, 1080, 3), dtype=np.uint8)
        assert media.resize_for_patch(frame, 448, 14).shape == (784, 448, 3)

    @pytest.mark.parametrize("shape", [(100, 173), (731, 450), (448, 1001), (57, 901)])
    def test_output_dimensions_property(self, rng, shape):
        frame = rng.integers(0, 256, size=(*shape, 3), dtype=np.uint8)
        out = media.resize_for_patch(frame, 448, 14)
        short, long_ = sorted(out.shape[:2])
        assert short == 448
        assert short % 14 == 0 and long_ % 14 == 0
        assert long_ >= short

    def test_indivisible_short_side_rejected(self, rng):
        frame = rng.integers(0, 256, size=(50, 60, 3), dtype=np.uint8)
        with pytest.raises(ConfigError):
            media.resize_for_patch(frame, 450, 14)

    def test_empty_frame_rejected(self):
        with pytest.raises(InvalidInputError):
            media.resize_for_patch(np.zeros((0, 4, 3), np.uint8), 448, 14)

    def test_greyscale_2d_input_supported(self, rng):
        frame = rng.integers(0, 256, size=(224, 300), dtype=np.uint8)
        out = media.resize_for_patch(frame, 448, 14)
        assert out.ndim == 2
        assert sorted(out.shape) == sorted((448, 588))
