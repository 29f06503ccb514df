import numpy as np
import pytest

from vitexport import transforms

# the recognition pipeline is the contract oracle for these transforms
rareaction_media = pytest.importorskip("rareaction.media")


class TestResizeContract:
    @pytest.mark.parametrize(
        "shape", [(1080, 1920), (448, 448), (448, 462), (300, 200), (57, 901)]
    )
    def test_matches_pipeline_resize_bit_exactly(self, shape):
        rng = np.random.default_rng(hash(shape) % 2**32)
        frame = rng.integers(0, 256, size=(*shape, 3), dtype=np.uint8)
        ours = transforms.resize_for_patch(frame, 448, 14)
        theirs = rareaction_media.resize_for_patch(frame, 448, 14)
        assert ours.shape == theirs.shape
        assert np.array_equal(ours, theirs)

    def test_hd_shape(self):
        frame = np.zeros((1080, 1920, 3), np.uint8)
        assert transforms.resize_for_patch(frame, 448, 14).shape == (448, 784, 3)


class TestNormalize:
    def test_chw_layout_and_values(self):
        frame = np.full((4, 6, 3), 255, np.uint8)
        mean, std = (0.5, 0.5, 0.5), (0.25, 0.25, 0.25)
        out = transforms.normalize_chw(frame, mean, std)
        assert out.shape == (3, 4, 6)
        assert out.dtype == np.float32
        assert np.allclose(out, (1.0 - 0.5) / 0.25)

    def test_grey_frames_broadcast_to_rgb(self):
        frame = np.full((4, 4), 128, np.uint8)
        rgb = transforms.ensure_rgb(frame)
        assert rgb.shape == (4, 4, 3)
        assert (rgb[..., 0] == rgb[..., 2]).all()

    def test_prepare_frame_shape(self):
        rng = np.random.default_rng(3)
        frame = rng.integers(0, 256, size=(100, 173, 3), dtype=np.uint8)
        out = transforms.prepare_frame(frame, 448, 14, (0.5,) * 3, (0.5,) * 3)
        assert out.shape[0] == 3
        assert out.shape[1] % 14 == 0 and out.shape[2] % 14 == 0
