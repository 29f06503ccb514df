"""Dataset construction: clip slicing with middle-positive labeling, fish
predation filtering of an external annotation table, group-aware splits, and
representative subsampling with a chi-square acceptance check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import detect, evaluate
from .errors import InvalidInputError, SamplingError, SlicingError, SplitError
from .manifest import ManifestRecord, check_unique_ids
from .media import FrameSequence

ATTACK_LABEL = "attack"

# The eight predation-related action names, case-normalized.
PREDATION_ACTIONS = frozenset(
    {
        "attacking",
        "being eaten",
        "biting",
        "chasing",
        "fighting",
        "fleeing",
        "retaliating",
        "struggling",
    }
)


def normalize_action(name: str) -> str:
    return " ".join(name.replace("_", " ").lower().split())


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]
    task: str = "binary"
    label_space: list[str] = field(default_factory=list)

    def __post_init__(self):
        check_unique_ids(self.records)
        if not self.label_space:
            self.label_space = sorted({l for r in self.records for l in r.labels})
        known = set(self.label_space)
        for r in self.records:
            unknown = set(r.labels) - known
            if unknown:
                raise InvalidInputError(
                    f"record {r.video_id!r} carries labels outside the label space: {unknown}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    def label_matrix(self, records: list[ManifestRecord] | None = None) -> np.ndarray:
        """(n, C) 0/1 matrix in label_space column order."""
        records = self.records if records is None else records
        index = {label: j for j, label in enumerate(self.label_space)}
        out = np.zeros((len(records), len(self.label_space)))
        for i, r in enumerate(records):
            for label in r.labels:
                out[i, index[label]] = 1.0
        return out

    def label_counts(self, records: list[ManifestRecord] | None = None) -> np.ndarray:
        return self.label_matrix(records).sum(axis=0)


def slice_coral_reef(
    videos: list[FrameSequence], clip_length: float = 2.0, clips_per_video: int = 5
) -> tuple[DatasetManifest, dict[str, list[detect.ClipWindow]]]:
    """Cut each source video into ``clips_per_video`` windows and label the
    middle one positive.

    Every video must last clips_per_video * clip_length seconds, with one
    frame of tolerance for capture jitter.  Returns the clip manifest (with
    window boundaries stored on each record) and the windows per source.
    """
    if clips_per_video < 1 or clips_per_video % 2 == 0:
        raise InvalidInputError(
            f"clips_per_video must be odd and positive, got {clips_per_video}"
        )
    records = []
    windows_by_source: dict[str, list[detect.ClipWindow]] = {}
    middle = clips_per_video // 2
    for seq in videos:
        expected = clips_per_video * clip_length * seq.fps
        if abs(seq.n_frames - expected) > 1:
            raise SlicingError(
                f"{seq.video_id!r}: {seq.n_frames} frames, expected "
                f"{expected:.1f} (= {clips_per_video} x {clip_length}s x {seq.fps} fps)"
            )
        if seq.n_frames > expected:  # capture jitter: drop the trailing extra frame
            seq = seq.slice(0, int(round(expected)), video_id=seq.video_id)
        windows = detect.segment(seq, clip_length)
        if len(windows) != clips_per_video:
            raise SlicingError(
                f"{seq.video_id!r}: segmentation produced {len(windows)} windows, "
                f"expected {clips_per_video}"
            )
        windows_by_source[seq.video_id] = windows
        for i, w in enumerate(windows):
            records.append(
                ManifestRecord(
                    video_id=w.clip_id,
                    labels=[ATTACK_LABEL] if i == middle else [],
                    source_video=seq.video_id,
                    extra={
                        "start": w.start,
                        "end": w.end,
                        "frame_start": w.frame_start,
                        "frame_end": w.frame_end,
                    },
                )
            )
    return (
        DatasetManifest(records=records, task="binary", label_space=[ATTACK_LABEL]),
        windows_by_source,
    )


def middle_window_truth(
    windows_by_source: dict[str, list[detect.ClipWindow]]
) -> dict[str, list[evaluate.TimeInterval]]:
    """Ground-truth intervals under middle-positive labeling: the middle
    window of each source video."""
    truth = {}
    for source, windows in windows_by_source.items():
        mid = windows[len(windows) // 2]
        truth[source] = [evaluate.TimeInterval(mid.start, mid.end)]
    return truth


def read_annotation_csv(path: str | Path) -> list[dict]:
    """Normalized annotation rows: video_id, split, species_group, actions
    (semicolon-separated)."""
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"no such annotation file: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"video_id", "split", "species_group", "actions"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise InvalidInputError(
                f"annotation CSV needs columns {sorted(required)}, got {reader.fieldnames}"
            )
        for row in reader:
            rows.append(
                {
                    "video_id": row["video_id"].strip(),
                    "split": row["split"].strip().lower(),
                    "species_group": row["species_group"].strip().lower(),
                    "actions": [
                        normalize_action(a)
                        for a in row["actions"].split(";")
                        if a.strip()
                    ],
                }
            )
    return rows


def filter_ak_fish(
    rows: list[dict], known_actions: set[str] | None = None
) -> tuple[DatasetManifest, list[str]]:
    """Binary fish-predation dataset from annotation rows.

    A video is included when a fish performs any action; it is positive when
    a fish performs one of the eight predation-related actions.  The split
    column is preserved.  Action strings outside ``known_actions`` (when
    given) are reported back and treated as non-predation.
    """
    vocabulary = None
    if known_actions is not None:
        vocabulary = {normalize_action(a) for a in known_actions} | PREDATION_ACTIONS
    unknown: list[str] = []
    per_video: dict[str, dict] = {}
    for row in rows:
        actions = row["actions"]
        if vocabulary is not None:
            for a in actions:
                if a not in vocabulary and a not in unknown:
                    unknown.append(a)
            actions = [a for a in actions if a in vocabulary]
        is_fish = row["species_group"] == "fish"
        if not (is_fish and actions):
            continue
        entry = per_video.setdefault(
            row["video_id"], {"split": row["split"], "positive": False}
        )
        if any(a in PREDATION_ACTIONS for a in actions):
            entry["positive"] = True
    records = [
        ManifestRecord(
            video_id=vid,
            labels=[ATTACK_LABEL] if entry["positive"] else [],
            split=entry["split"] if entry["split"] in ("train", "test") else None,
        )
        for vid, entry in sorted(per_video.items())
    ]
    manifest = DatasetManifest(records=records, task="binary", label_space=[ATTACK_LABEL])
    return manifest, unknown


def multilabel_manifest(rows: list[dict]) -> DatasetManifest:
    """Multi-label manifest from annotation rows: every action of every row
    becomes a label of the video."""
    per_video: dict[str, dict] = {}
    for row in rows:
        entry = per_video.setdefault(
            row["video_id"], {"split": row["split"], "labels": set()}
        )
        entry["labels"].update(row["actions"])
    records = [
        ManifestRecord(
            video_id=vid,
            labels=sorted(entry["labels"]),
            split=entry["split"] if entry["split"] in ("train", "test") else None,
        )
        for vid, entry in sorted(per_video.items())
        if entry["labels"]
    ]
    return DatasetManifest(records=records, task="multilabel")


def split_grouped(
    manifest: DatasetManifest, test_fraction: float = 0.20, seed: int = 0
) -> DatasetManifest:
    """Assign whole groups (source videos) to train or test.

    The test side receives round(test_fraction * n_groups) groups, clamped so
    both sides stay non-empty.
    """
    if not 0 < test_fraction < 1:
        raise InvalidInputError(f"test_fraction must be in (0, 1), got {test_fraction}")
    groups = sorted({r.group for r in manifest.records})
    if len(groups) < 2:
        raise SplitError(f"need at least 2 groups to split, found {len(groups)}")
    n_test = int(np.floor(test_fraction * len(groups) + 0.5))
    n_test = min(max(n_test, 1), len(groups) - 1)
    rng = np.random.default_rng(seed)
    test_groups = set(rng.choice(groups, size=n_test, replace=False).tolist())
    records = [
        ManifestRecord(
            video_id=r.video_id,
            feature_path=r.feature_path,
            labels=list(r.labels),
            split="test" if r.group in test_groups else "train",
            source_video=r.source_video,
            extra=dict(r.extra),
        )
        for r in manifest.records
    ]
    return DatasetManifest(records=records, task=manifest.task, label_space=manifest.label_space)


def representative_sample(
    manifest: DatasetManifest,
    n: int,
    seed: int = 0,
    min_p_value: float = 0.05,
    max_retries: int = 20,
) -> tuple[DatasetManifest, dict]:
    """Random subsample preserving the train:test proportion, accepted only
    when a chi-square homogeneity test against the full label distribution
    reaches ``min_p_value``.

    Returns the sample and a report with the p-value, the surviving class
    count, and how many draws were needed.
    """
    if n > len(manifest):
        raise InvalidInputError(f"cannot sample {n} of {len(manifest)} records")
    if n < 1:
        raise InvalidInputError("sample size must be positive")
    train = manifest.split("train")
    test = manifest.split("test")
    if len(train) + len(test) != len(manifest):
        raise InvalidInputError("every record needs a train/test split before sampling")
    n_test = int(np.floor(n * len(test) / len(manifest) + 0.5))
    n_test = min(n_test, len(test))
    n_train = n - n_test
    if n_train > len(train):
        n_train = len(train)
        n_test = n - n_train
    population_counts = manifest.label_counts()

    for attempt in range(max_retries):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        picked_train = rng.choice(len(train), size=n_train, replace=False)
        picked_test = rng.choice(len(test), size=n_test, replace=False)
        records = [train[i] for i in sorted(picked_train)] + [
            test[i] for i in sorted(picked_test)
        ]
        sample = DatasetManifest(
            records=records, task=manifest.task, label_space=manifest.label_space
        )
        sample_counts = sample.label_counts()
        result = evaluate.chi2_homogeneity(sample_counts, population_counts)
        if result["p_value"] >= min_p_value:
            surviving = int((sample_counts > 0).sum())
            survived_labels = [
                label
                for label, count in zip(manifest.label_space, sample_counts)
                if count > 0
            ]
            trimmed = DatasetManifest(
                records=records, task=manifest.task, label_space=survived_labels
            )
            return trimmed, {
                "p_value": result["p_value"],
                "statistic": result["statistic"],
                "surviving_classes": surviving,
                "draws": attempt + 1,
                "n_train": n_train,
                "n_test": n_test,
            }
    raise SamplingError(
        f"no representative sample reached p >= {min_p_value} in {max_retries} draws"
    )
