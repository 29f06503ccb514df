"""Backbone registry: published DINOv2 checkpoints plus an offline test model.

Each entry records where the checkpoint comes from, the classifier-token
width it must produce, and the preprocessing constants published with it.
The expected width is verified against a live probe at load time; a mismatch
aborts the export.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

# Preprocessing published with the DINOv2 checkpoints (ImageNet eval transform).
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

DINOV2_HUB_REPO = "facebookresearch/dinov2"


class BackboneError(RuntimeError):
    pass


@dataclass(frozen=True)
class BackboneInfo:
    tag: str
    expected_dim: int
    patch_size: int
    short_side: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    hub_name: str | None = None  # torch.hub entrypoint; None for local builders


REGISTRY: dict[str, BackboneInfo] = {
    info.tag: info
    for info in (
        BackboneInfo("vit-s14", 384, 14, 448, IMAGENET_MEAN, IMAGENET_STD, "dinov2_vits14"),
        BackboneInfo("vit-s14-reg", 384, 14, 448, IMAGENET_MEAN, IMAGENET_STD, "dinov2_vits14_reg"),
        BackboneInfo("vit-g14", 1536, 14, 448, IMAGENET_MEAN, IMAGENET_STD, "dinov2_vitg14"),
        BackboneInfo("vit-g14-reg", 1536, 14, 448, IMAGENET_MEAN, IMAGENET_STD, "dinov2_vitg14_reg"),
        BackboneInfo("test-tiny", 32, 14, 448, IMAGENET_MEAN, IMAGENET_STD, None),
    )
}


class TinyVit(torch.nn.Module):
    """Small deterministic ViT used for offline testing of the export path.

    Patchify with a 14x14 conv, prepend a class token, run two encoder
    layers, and return the normalized class token.  No positional embedding,
    so any multiple-of-14 input size works and ONNX tracing stays
    shape-agnostic.
    """

    def __init__(self, width: int = 32, patch_size: int = 14, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.patch_embed = torch.nn.Conv2d(3, width, patch_size, stride=patch_size)
        self.cls_token = torch.nn.Parameter(torch.randn(1, 1, width) * 0.02)
        layer = torch.nn.TransformerEncoderLayer(
            d_model=width, nhead=4, dim_feedforward=2 * width, batch_first=True,
            dropout=0.0,
        )
        self.encoder = torch.nn.TransformerEncoder(layer, num_layers=2)
        self.norm = torch.nn.LayerNorm(width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        tokens = self.patch_embed(x).flatten(2).transpose(1, 2)  # (B, N, width)
        cls = self.cls_token.expand(tokens.shape[0], -1, -1)
        tokens = torch.cat([cls, tokens], dim=1)
        tokens = self.encoder(tokens)
        return self.norm(tokens[:, 0])


def load_backbone(tag: str, device: str = "cpu") -> tuple[torch.nn.Module, BackboneInfo, int]:
    """Load a registered backbone in eval mode and verify its token width.

    Returns (model, info, probed_dim).
    """
    if tag not in REGISTRY:
        raise BackboneError(f"unknown backbone tag {tag!r}; known: {sorted(REGISTRY)}")
    info = REGISTRY[tag]
    if info.hub_name is not None:
        try:
            model = torch.hub.load(DINOV2_HUB_REPO, info.hub_name)
        except Exception as exc:
            raise BackboneError(
                f"failed to fetch checkpoint {info.hub_name!r} from torch.hub: {exc}"
            ) from exc
    else:
        model = TinyVit(width=info.expected_dim, patch_size=info.patch_size)
    model.eval()
    model.to(device)
    with torch.no_grad():
        probe = torch.zeros(1, 3, info.short_side, info.short_side, device=device)
        out = model(probe)
    if out.ndim != 2 or out.shape[0] != 1:
        raise BackboneError(f"{tag}: expected (1, dim) classifier token, got {tuple(out.shape)}")
    probed_dim = int(out.shape[1])
    if probed_dim != info.expected_dim:
        raise BackboneError(
            f"{tag}: checkpoint produces dim {probed_dim}, registry expects {info.expected_dim}"
        )
    return model, info, probed_dim


def embed_frames(
    model: torch.nn.Module,
    frames: np.ndarray,
    batch_size: int = 16,
    device: str = "cpu",
) -> np.ndarray:
    """Classifier tokens for normalized CHW float32 frames, shape (n, dim)."""
    outputs = []
    with torch.no_grad():
        for start in range(0, len(frames), batch_size):
            batch = torch.from_numpy(frames[start : start + batch_size]).to(device)
            outputs.append(model(batch).cpu().numpy())
    return np.concatenate(outputs, axis=0)
