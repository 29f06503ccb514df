"""Export job execution: frames -> classifier tokens -> MARF files, or the
backbone itself -> an ONNX bundle consumable by the recognition pipeline's
onnx backend.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backbones import BackboneInfo, embed_frames, load_backbone
from .marf import write_marf
from .transforms import prepare_frame

_FRAME_FILE_RE = re.compile(r".*?(\d+)\.(png|jpg|jpeg)$", re.IGNORECASE)


class ExportError(RuntimeError):
    pass


@dataclass
class ExportJob:
    backbone_tag: str
    manifest_path: Path
    indices_dir: Path
    out_dir: Path
    data_dir: Path | None = None  # defaults to the manifest's directory
    batch_size: int = 16
    device: str = "cpu"
    onnx: bool = False

    def __post_init__(self):
        self.manifest_path = Path(self.manifest_path)
        self.indices_dir = Path(self.indices_dir)
        self.out_dir = Path(self.out_dir)
        if self.data_dir is None:
            self.data_dir = self.manifest_path.parent
        self.data_dir = Path(self.data_dir)


def read_manifest_records(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        raise ExportError(f"manifest {path} is empty")
    return records


def read_selection(indices_dir: Path, video_id: str) -> dict:
    path = indices_dir / f"{video_id}.json"
    if not path.exists():
        raise ExportError(f"no frame-index file for {video_id!r} under {indices_dir}")
    doc = json.loads(path.read_text())
    if doc.get("video_id") != video_id or "indices" not in doc:
        raise ExportError(f"{path} does not look like a frame selection for {video_id!r}")
    return doc


def load_frames(video_dir: Path, indices: list[int]) -> list[np.ndarray]:
    """Read exactly the needed frames of a numbered-image video directory."""
    import cv2

    entries = {}
    for p in video_dir.iterdir():
        m = _FRAME_FILE_RE.match(p.name)
        if m:
            entries[int(m.group(1))] = p
    if not entries:
        raise ExportError(f"{video_dir} holds no numbered PNG/JPEG frames")
    ordered = [path for _, path in sorted(entries.items())]
    frames = []
    for idx in indices:
        if not 0 <= idx < len(ordered):
            raise ExportError(f"frame index {idx} out of range for {video_dir}")
        img = cv2.imread(str(ordered[idx]), cv2.IMREAD_UNCHANGED)
        if img is None:
            raise ExportError(f"unreadable frame {ordered[idx]}")
        if img.ndim == 3 and img.shape[2] >= 3:
            img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB if img.shape[2] == 3 else cv2.COLOR_BGRA2RGB)
        frames.append(np.ascontiguousarray(img, dtype=np.uint8))
    return frames


def export_video(
    model, info: BackboneInfo, job: ExportJob, video_id: str
) -> tuple[Path, dict]:
    selection = read_selection(job.indices_dir, video_id)
    indices = [int(i) for i in selection["indices"]]
    unique = sorted(set(indices))
    frames = load_frames(job.data_dir / video_id, unique)
    prepared = np.stack(
        [prepare_frame(f, info.short_side, info.patch_size, info.mean, info.std) for f in frames]
    )
    vectors = embed_frames(model, prepared, batch_size=job.batch_size, device=job.device)
    by_index = {idx: vectors[i] for i, idx in enumerate(unique)}
    matrix = np.stack([by_index[idx] for idx in indices]).astype(np.float32)
    out_path = job.out_dir / f"{video_id}.marf"
    write_marf(out_path, matrix, indices, info.tag)
    return out_path, selection


def export_onnx_bundle(model, info: BackboneInfo, probed_dim: int, out_dir: Path) -> Path:
    """Write model.onnx plus the metadata the recognition pipeline's onnx
    backend reads (identity, dim, normalization, resize geometry)."""
    import torch

    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.onnx"
    dummy = torch.zeros(1, 3, info.short_side, info.short_side)
    try:
        torch.onnx.export(
            model,
            (dummy,),
            str(model_path),
            input_names=["frames"],
            output_names=["classifier_token"],
            dynamic_axes={"frames": {0: "batch", 2: "height", 3: "width"}},
            dynamo=False,
        )
    except Exception as exc:
        raise ExportError(
            f"ONNX export failed (the onnx/onnxscript toolchain must be installed): {exc}"
        ) from exc
    (out_dir / "metadata.json").write_text(
        json.dumps(
            {
                "identity": info.tag,
                "dim": probed_dim,
                "mean": list(info.mean),
                "std": list(info.std),
                "short_side": info.short_side,
                "patch_size": info.patch_size,
                "input_name": "frames",
                "output_name": "classifier_token",
            },
            indent=2,
            sort_keys=True,
        )
    )
    return model_path


@dataclass
class ExportReport:
    backbone_tag: str
    dim: int
    exported: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def run_export(job: ExportJob) -> ExportReport:
    model, info, probed_dim = load_backbone(job.backbone_tag, device=job.device)
    job.out_dir.mkdir(parents=True, exist_ok=True)

    if job.onnx:
        export_onnx_bundle(model, info, probed_dim, job.out_dir)
        report = ExportReport(backbone_tag=info.tag, dim=probed_dim)
        report.exported.append({"bundle": str(job.out_dir / "model.onnx")})
        _write_report(job, report)
        return report

    report = ExportReport(backbone_tag=info.tag, dim=probed_dim)
    for record in read_manifest_records(job.manifest_path):
        video_id = record["video_id"]
        try:
            out_path, selection = export_video(model, info, job, video_id)
            report.exported.append(
                {
                    "video_id": video_id,
                    "feature_path": str(out_path),
                    "k": selection["k"],
                    "d": probed_dim,
                    "labels": record.get("labels", []),
                    "split": record.get("split"),
                    "source_video": record.get("source_video"),
                }
            )
        except (ExportError, OSError, ValueError) as exc:
            report.failures.append({"video_id": video_id, "error": str(exc)})
    _write_report(job, report)
    return report


def _write_report(job: ExportJob, report: ExportReport) -> None:
    meta = {
        "backbone_tag": report.backbone_tag,
        "dim": report.dim,
        "n_exported": len(report.exported),
        "n_failed": len(report.failures),
    }
    (job.out_dir / "export_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    if report.exported and not job.onnx:
        with open(job.out_dir / "manifest.jsonl", "w", encoding="utf-8") as fh:
            for row in report.exported:
                fh.write(
                    json.dumps(
                        {
                            "video_id": row["video_id"],
                            "feature_path": row["feature_path"],
                            "labels": row["labels"],
                            "split": row["split"],
                            "source_video": row["source_video"],
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    if report.failures:
        with open(job.out_dir / "failures.jsonl", "w", encoding="utf-8") as fh:
            for row in report.failures:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
