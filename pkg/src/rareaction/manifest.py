"""JSON Lines manifests: one record per video/clip.

Required keys per record: video_id, feature_path, labels, split, source_video.
Extra keys (clip boundaries etc.) are preserved verbatim on read and write.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

SPLITS = ("train", "test")
_CORE_KEYS = ("video_id", "feature_path", "labels", "split", "source_video")


@dataclass
class ManifestRecord:
    video_id: str
    feature_path: str | None = None
    labels: list[str] = field(default_factory=list)
    split: str | None = None
    source_video: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split is not None and self.split not in SPLITS:
            raise DataError(f"record {self.video_id!r}: split must be one of {SPLITS}")

    @property
    def group(self) -> str:
        """Leakage-control group: the source video, or the clip itself."""
        return self.source_video if self.source_video is not None else self.video_id

    def to_json(self) -> dict:
        out = {
            "video_id": self.video_id,
            "feature_path": self.feature_path,
            "labels": list(self.labels),
            "split": self.split,
            "source_video": self.source_video,
        }
        out.update(self.extra)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestRecord":
        if "video_id" not in obj:
            raise DataError(f"manifest record without video_id: {obj!r}")
        extra = {k: v for k, v in obj.items() if k not in _CORE_KEYS}
        return cls(
            video_id=obj["video_id"],
            feature_path=obj.get("feature_path"),
            labels=list(obj.get("labels") or []),
            split=obj.get("split"),
            source_video=obj.get("source_video"),
            extra=extra,
        )


def check_unique_ids(records: list[ManifestRecord]) -> None:
    seen = set()
    for r in records:
        if r.video_id in seen:
            raise DataError(f"duplicate video_id in manifest: {r.video_id!r}")
        seen.add(r.video_id)


def write_manifest(path: str | Path, records: list[ManifestRecord]) -> None:
    check_unique_ids(records)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such manifest: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(ManifestRecord.from_json(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    check_unique_ids(records)
    return records
