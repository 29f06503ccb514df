"""Pluggable frame embedders and the MARF on-disk feature format.

A VideoFeature is the frame-major concatenation of k per-frame embedding
vectors: positions [j*d, (j+1)*d) hold the embedding of the j-th selected
frame.  Values are float32 so that file round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmbedderError, FormatError, InvalidInputError, NumericError
from .frameselect import FrameSelection
from .manifest import ManifestRecord
from .media import FrameSequence, resize_for_patch, to_greyscale

MARF_MAGIC = b"MARF"
MARF_VERSION = 1


@dataclass(eq=False)
class VideoFeature:
    """Fixed-layout per-video feature vector with provenance."""

    video_id: str
    vector: np.ndarray  # float32, length k*d, frame-major
    k: int
    d: int
    frame_indices: tuple[int, ...]
    backbone: str

    def __post_init__(self):
        self.vector = np.ascontiguousarray(self.vector, dtype=np.float32)
        self.frame_indices = tuple(int(i) for i in self.frame_indices)
        if self.k < 1 or self.d < 1:
            raise InvalidInputError(f"k and d must be positive, got k={self.k}, d={self.d}")
        if self.vector.shape != (self.k * self.d,):
            raise InvalidInputError(
                f"vector length {self.vector.shape} != k*d = {self.k * self.d}"
            )
        if len(self.frame_indices) != self.k:
            raise InvalidInputError(
                f"{len(self.frame_indices)} frame indices for k={self.k}"
            )
        if not np.isfinite(self.vector).all():
            raise NumericError(f"non-finite values in feature for {self.video_id!r}")

    def frame_block(self, j: int) -> np.ndarray:
        """The d-vector of the j-th selected frame (a view)."""
        return self.vector[j * self.d : (j + 1) * self.d]


class Embedder:
    """Per-frame embedding backend interface.

    Immutable after construction; ``dim`` and ``identity`` are constant for
    the embedder's lifetime.
    """

    backend = "abstract"
    dim: int
    identity: str

    def preprocess(self, frame: np.ndarray) -> np.ndarray:
        """Backend-specific frame preparation (resize/normalize)."""
        return frame

    def embed_frame(self, frame: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class MockEmbedder(Embedder):
    """Deterministic statistics embedder for tests and synthetic experiments.

    Per frame: [mean intensity, intensity std, mean |horizontal gradient|,
    mean |vertical gradient|], computed on the greyscale image.
    """

    backend = "mock"

    def __init__(self, identity: str = "mock-v1"):
        self.dim = 4
        self.identity = identity

    def embed_frame(self, frame: np.ndarray) -> np.ndarray:
        grey = to_greyscale(frame).astype(np.float64)
        dx = np.abs(np.diff(grey, axis=1))
        dy = np.abs(np.diff(grey, axis=0))
        return np.array(
            [
                grey.mean(),
                grey.std(),
                dx.mean() if dx.size else 0.0,
                dy.mean() if dy.size else 0.0,
            ]
        )


class OnnxEmbedder(Embedder):
    """Runs an exported image-backbone graph and returns its classifier token.

    A bundle directory holds ``model.onnx`` plus ``metadata.json`` with the
    backbone identity, embedding dim, per-channel normalization mean/std, and
    the resize geometry (short side, patch size).  Requires onnxruntime.
    """

    backend = "onnx_model"

    def __init__(self, bundle_dir: str | Path):
        bundle_dir = Path(bundle_dir)
        meta_path = bundle_dir / "metadata.json"
        model_path = bundle_dir / "model.onnx"
        if not meta_path.exists() or not model_path.exists():
            raise EmbedderError(
                f"onnx bundle {bundle_dir} must contain model.onnx and metadata.json"
            )
        meta = json.loads(meta_path.read_text())
        try:
            self.identity = meta["identity"]
            self.dim = int(meta["dim"])
            self._mean = np.asarray(meta["mean"], dtype=np.float32).reshape(1, 1, 3)
            self._std = np.asarray(meta["std"], dtype=np.float32).reshape(1, 1, 3)
            self._short_side = int(meta.get("short_side", 448))
            self._patch_size = int(meta.get("patch_size", 14))
        except (KeyError, ValueError, TypeError) as exc:
            raise EmbedderError(f"invalid onnx bundle metadata: {exc}") from exc
        if self.dim < 1:
            raise EmbedderError(f"onnx bundle declares dim={self.dim}")
        try:
            import onnxruntime
        except ImportError as exc:
            raise EmbedderError(
                "the onnx_model backend needs the optional onnxruntime dependency "
                "(pip install rareaction[onnx])"
            ) from exc
        try:
            self._session = onnxruntime.InferenceSession(
                str(model_path), providers=["CPUExecutionProvider"]
            )
        except Exception as exc:
            raise EmbedderError(f"failed to load {model_path}: {exc}") from exc
        self._input_name = meta.get("input_name") or self._session.get_inputs()[0].name
        self._output_name = meta.get("output_name") or self._session.get_outputs()[0].name

    def preprocess(self, frame: np.ndarray) -> np.ndarray:
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise InvalidInputError(f"onnx backend expects RGB frames, got {frame.shape}")
        resized = resize_for_patch(frame, self._short_side, self._patch_size)
        scaled = resized.astype(np.float32) / 255.0
        return (scaled - self._mean) / self._std

    def embed_frame(self, frame: np.ndarray) -> np.ndarray:
        batch = np.transpose(frame, (2, 0, 1))[None].astype(np.float32)
        try:
            (out,) = self._session.run([self._output_name], {self._input_name: batch})
        except Exception as exc:
            raise EmbedderError(f"onnx inference failed ({self.identity}): {exc}") from exc
        vec = np.asarray(out).reshape(-1)
        if vec.shape != (self.dim,):
            raise EmbedderError(
                f"graph returned {vec.shape[0]} values, metadata says dim={self.dim}"
            )
        return vec


def embed_frame(embedder: Embedder, frame: np.ndarray) -> np.ndarray:
    """Embed one preprocessed frame, enforcing the finite d-vector contract."""
    vec = np.asarray(embedder.embed_frame(frame), dtype=np.float64).reshape(-1)
    if vec.shape != (embedder.dim,):
        raise EmbedderError(
            f"backend {embedder.identity!r} returned {vec.shape[0]} values, expected {embedder.dim}"
        )
    if not np.isfinite(vec).all():
        raise NumericError(f"backend {embedder.identity!r} produced non-finite values")
    return vec


def build_video_feature(
    embedder: Embedder, seq: FrameSequence, sel: FrameSelection
) -> VideoFeature:
    """Embed the selected frames in order and concatenate frame-major.

    Padded (repeated) indices are embedded once and copied.
    """
    for idx in sel.indices:
        if not 0 <= idx < seq.n_frames:
            raise InvalidInputError(
                f"selected frame {idx} out of range for {seq.n_frames} frames"
            )
    cache: dict[int, np.ndarray] = {}
    blocks = []
    for idx in sel.indices:
        if idx not in cache:
            try:
                prepared = embedder.preprocess(seq.frames[idx])
                cache[idx] = embed_frame(embedder, prepared)
            except (EmbedderError, NumericError) as exc:
                raise type(exc)(f"frame {idx} of {seq.video_id!r}: {exc}") from exc
        blocks.append(cache[idx])
    vector = np.concatenate(blocks).astype(np.float32)
    return VideoFeature(
        video_id=seq.video_id,
        vector=vector,
        k=len(sel.indices),
        d=embedder.dim,
        frame_indices=tuple(sel.indices),
        backbone=embedder.identity,
    )


def write_feature(path: str | Path, feature: VideoFeature) -> None:
    """Serialize to MARF: magic, version, d, k, tag, frame indices, f32 values."""
    tag = feature.backbone.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MARF_MAGIC)
        fh.write(struct.pack("<IIII", MARF_VERSION, feature.d, feature.k, len(tag)))
        fh.write(tag)
        fh.write(struct.pack(f"<{feature.k}I", *feature.frame_indices))
        fh.write(feature.vector.astype("<f4").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}", offset=fh.tell() - len(data))
    return data


def read_feature(path: str | Path, video_id: str | None = None) -> VideoFeature:
    """Parse a MARF file; the video id defaults to the file stem."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MARF_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MARF_MAGIC!r}", offset=0)
        version, d, k, tag_len = struct.unpack("<IIII", _read_exact(fh, 16, "header"))
        if version != MARF_VERSION:
            raise FormatError(f"unsupported version {version}", offset=4)
        if d == 0:
            raise FormatError("header declares d=0", offset=8)
        if k == 0:
            raise FormatError("header declares k=0", offset=12)
        tag = _read_exact(fh, tag_len, "backbone tag")
        try:
            backbone = tag.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"backbone tag is not UTF-8: {exc}", offset=20) from exc
        indices = struct.unpack(f"<{k}I", _read_exact(fh, 4 * k, "frame indices"))
        values_offset = fh.tell()
        raw = _read_exact(fh, 4 * k * d, "feature values")
        trailing = fh.read(1)
        if trailing:
            raise FormatError("trailing bytes after feature values", offset=fh.tell() - 1)
    vector = np.frombuffer(raw, dtype="<f4").copy()
    if not np.isfinite(vector).all():
        raise FormatError("non-finite feature values", offset=values_offset)
    return VideoFeature(
        video_id=video_id if video_id is not None else path.stem,
        vector=vector,
        k=k,
        d=d,
        frame_indices=indices,
        backbone=backbone,
    )


class FeatureStore:
    """Video-level backend: serves precomputed MARF features from a manifest.

    Keyed by video_id; ``dim`` and ``identity`` are read from the first
    record and every served feature must agree.
    """

    backend = "feature_store"

    def __init__(self, records: list[ManifestRecord], root: str | Path = "."):
        self._root = Path(root)
        self._paths: dict[str, Path] = {}
        for r in records:
            if r.feature_path is None:
                raise EmbedderError(f"record {r.video_id!r} has no feature_path")
            self._paths[r.video_id] = self._resolve(r.feature_path)
        if not self._paths:
            raise EmbedderError("feature store built from an empty manifest")
        first = read_feature(next(iter(self._paths.values())))
        self.dim = first.d
        self.k = first.k
        self.identity = first.backbone

    def _resolve(self, feature_path: str) -> Path:
        p = Path(feature_path)
        return p if p.is_absolute() else self._root / p

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._paths

    def get(self, video_id: str) -> VideoFeature:
        if video_id not in self._paths:
            raise EmbedderError(f"feature store has no entry for {video_id!r}")
        feat = read_feature(self._paths[video_id], video_id=video_id)
        if feat.d != self.dim or feat.backbone != self.identity:
            raise EmbedderError(
                f"{video_id!r}: stored feature (d={feat.d}, tag={feat.backbone!r}) "
                f"does not match store (d={self.dim}, tag={self.identity!r})"
            )
        return feat
