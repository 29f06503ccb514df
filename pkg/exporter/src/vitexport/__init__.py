"""Bridge from pretrained vision-transformer checkpoints to the recognition
pipeline's feature formats: MARF files or an ONNX inference bundle."""

from . import backbones, export, marf, transforms

__all__ = ["backbones", "export", "marf", "transforms"]
__version__ = "0.1.0"
