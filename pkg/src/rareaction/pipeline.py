"""End-to-end orchestration: slice -> select frames -> extract -> CV -> train
-> evaluate, driven by one JSON config.

Features are cached as MARF files keyed by everything that affects them
(data, selector, k, backend identity); extraction dominates the cost, so a
rerun with an unchanged feature configuration reuses the cache.  Reports
embed the full config hash and all seeds, and carry no timestamps, so reruns
with identical config produce byte-identical JSON.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classify, datasets, detect, embed, evaluate, frameselect, modelselect, synth
from .errors import ConfigError, DataError, EmbedderError
from .manifest import ManifestRecord, read_manifest, write_manifest
from .media import DecodeConfig, FrameSequence, decode_video
from .modelselect import FeatureScaler, LabeledFeatures


@dataclass
class RunConfig:
    data_dir: str
    out_dir: str
    truth_path: str | None = None  # defaults to <data_dir>/truth.jsonl when present
    k: int = 10
    clip_length: float = 2.0
    clips_per_video: int = 5
    method: str = frameselect.MOTION_BASED
    backend: str = "mock"  # "mock" | "onnx:<bundle_dir>" | "store:<manifest_path>"
    downscale: int | None = None
    test_fraction: float = 0.2
    split_seed: int = 0
    cv_seed: int = 0
    bootstrap_seed: int = 0
    resamples: int = 100
    tiou_thresholds: tuple[float, ...] = (0.5, 0.25)
    standardize: bool = True
    cv: dict = field(default_factory=dict)  # CvPlan field overrides

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.method not in (frameselect.MOTION_BASED, frameselect.EVENLY_SPACED):
            raise ConfigError(f"unknown frame selection method {self.method!r}")
        self.tiou_thresholds = tuple(float(t) for t in self.tiou_thresholds)
        for t in self.tiou_thresholds:
            if not 0 < t <= 1:
                raise ConfigError(f"t-IoU thresholds must lie in (0, 1], got {t}")
        if self.resamples < 1:
            raise ConfigError("resamples must be >= 1")

    @classmethod
    def from_json(cls, path: str | Path, **overrides) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"no such config file: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)

    def to_json(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["tiou_thresholds"] = list(self.tiou_thresholds)
        return doc

    def validate_paths(self) -> None:
        if not Path(self.data_dir).is_dir():
            raise ConfigError(f"data_dir does not exist: {self.data_dir}")
        if self.truth_path is not None and not Path(self.truth_path).exists():
            raise ConfigError(f"truth_path does not exist: {self.truth_path}")
        if self.backend.startswith("onnx:") and not Path(self.backend[5:]).exists():
            raise ConfigError(f"onnx bundle does not exist: {self.backend[5:]}")
        if self.backend.startswith("store:") and not Path(self.backend[6:]).exists():
            raise ConfigError(f"feature-store manifest does not exist: {self.backend[6:]}")


def _hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def config_hash(config: RunConfig) -> str:
    return _hash(config.to_json())


def feature_config_hash(config: RunConfig) -> str:
    """Hash over exactly the fields that determine feature bytes: the cache key."""
    return _hash(
        {
            "data_dir": str(Path(config.data_dir).resolve()),
            "k": config.k,
            "clip_length": config.clip_length,
            "clips_per_video": config.clips_per_video,
            "method": config.method,
            "backend": config.backend,
            "downscale": config.downscale,
        }
    )


def make_embedder(backend: str) -> embed.Embedder:
    if backend == "mock":
        return embed.MockEmbedder()
    if backend.startswith("onnx:"):
        return embed.OnnxEmbedder(backend[5:])
    raise ConfigError(f"unknown embedder backend {backend!r}")


def discover_videos(data_dir: str | Path) -> list[Path]:
    """Source videos: subdirectories with numbered frames, or container files."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"no such data directory: {data_dir}")
    found = []
    for p in sorted(data_dir.iterdir()):
        if p.is_dir() and (p / "meta.json").exists():
            found.append(p)
        elif p.suffix.lower() in (".mp4", ".avi", ".mov", ".mkv", ".webm"):
            found.append(p)
    if not found:
        raise DataError(f"no video directories or container files under {data_dir}")
    return found


def load_videos(config: RunConfig) -> list[FrameSequence]:
    decode_config = DecodeConfig()
    return [decode_video(p, decode_config) for p in discover_videos(config.data_dir)]


def selection_payload(video_id: str, sel: frameselect.FrameSelection) -> dict:
    return {
        "video_id": video_id,
        "method": sel.method,
        "k": sel.k,
        "indices": sel.indices,
        "scores": sel.scores,
    }


def extract_features(
    config: RunConfig,
    manifest: datasets.DatasetManifest,
    clips: dict[str, FrameSequence],
) -> datasets.DatasetManifest:
    """Embed every clip, reusing cached MARF files when their provenance
    matches; returns the manifest with feature paths filled in."""
    out_dir = Path(config.out_dir)
    cache_key = feature_config_hash(config)
    cache_dir = out_dir / "features" / cache_key[:16]
    cache_dir.mkdir(parents=True, exist_ok=True)
    meta_path = cache_dir / "cache_meta.json"
    if meta_path.exists():
        existing = json.loads(meta_path.read_text())
        if existing.get("feature_config_hash") != cache_key:
            raise ConfigError(
                f"feature cache {cache_dir} was built with a different configuration"
            )
    else:
        meta_path.write_text(json.dumps({"feature_config_hash": cache_key}, indent=2))

    if config.backend.startswith("store:"):
        store = embed.FeatureStore(
            read_manifest(config.backend[6:]), root=Path(config.backend[6:]).parent
        )
        embedder = None
    else:
        store = None
        embedder = make_embedder(config.backend)

    records = []
    for record in manifest.records:
        marf_path = cache_dir / f"{record.video_id}.marf"
        feature = None
        if marf_path.exists():
            feature = embed.read_feature(marf_path, video_id=record.video_id)
        elif store is not None:
            feature = store.get(record.video_id)
            embed.write_feature(marf_path, feature)
        else:
            clip = clips[record.video_id]
            sel = frameselect.select_frames(
                clip, config.method, config.k, downscale=config.downscale
            )
            feature = embed.build_video_feature(embedder, clip, sel)
            embed.write_feature(marf_path, feature)
        if feature.k != config.k:
            raise EmbedderError(
                f"{record.video_id!r}: cached feature has k={feature.k}, run wants k={config.k}"
            )
        records.append(
            ManifestRecord(
                video_id=record.video_id,
                feature_path=str(marf_path),
                labels=list(record.labels),
                split=record.split,
                source_video=record.source_video,
                extra=dict(record.extra),
            )
        )
    return datasets.DatasetManifest(
        records=records, task=manifest.task, label_space=manifest.label_space
    )


def gather_features(
    manifest: datasets.DatasetManifest, split: str
) -> tuple[LabeledFeatures, list[ManifestRecord]]:
    records = manifest.split(split)
    if not records:
        raise DataError(f"manifest has no {split!r} records")
    vectors = [
        embed.read_feature(r.feature_path, video_id=r.video_id).vector.astype(np.float64)
        for r in records
    ]
    y = manifest.label_matrix(records)
    if manifest.task == "binary":
        y = y.max(axis=1, keepdims=True) if y.shape[1] else np.zeros((len(records), 1))
    return (
        LabeledFeatures(
            x=np.vstack(vectors),
            y=y,
            ids=[r.video_id for r in records],
            groups=[r.group for r in records],
            label_space=manifest.label_space,
            task=manifest.task,
        ),
        records,
    )


@dataclass
class Predictor:
    """Everything needed to score new clips: head, scaler, selection recipe."""

    head: classify.ClassifierHead
    scaler: FeatureScaler
    method: str
    k: int
    backend: str
    downscale: int | None = None

    def score(self, features: np.ndarray) -> np.ndarray:
        return classify.forward(self.head, self.scaler.transform(features))

    def save(self, path: str | Path, extra_metadata: dict | None = None) -> None:
        metadata = {
            "scaler": self.scaler.to_json(),
            "selection": {"method": self.method, "k": self.k, "downscale": self.downscale},
            "backend": self.backend,
        }
        metadata.update(extra_metadata or {})
        classify.save_head(path, self.head, metadata)

    @classmethod
    def load(cls, path: str | Path) -> "Predictor":
        head = classify.load_head(path)
        meta = json.loads(Path(path).read_text())["metadata"]
        selection = meta.get("selection", {})
        scaler_doc = meta.get("scaler")
        scaler = (
            FeatureScaler.from_json(scaler_doc)
            if scaler_doc
            else FeatureScaler.identity(head.config.input_dim)
        )
        return cls(
            head=head,
            scaler=scaler,
            method=selection.get("method", frameselect.MOTION_BASED),
            k=int(selection.get("k", 10)),
            backend=meta.get("backend", "mock"),
            downscale=selection.get("downscale"),
        )


def fit_predictor(
    config: RunConfig, train: LabeledFeatures
) -> tuple[Predictor, modelselect.CvReport]:
    plan = modelselect.plan_for_task(train.task, seed=config.cv_seed, **config.cv)
    scaler = (
        FeatureScaler.fit(train.x)
        if config.standardize
        else FeatureScaler.identity(train.x.shape[1])
    )
    scaled = LabeledFeatures(
        x=scaler.transform(train.x),
        y=train.y,
        ids=train.ids,
        groups=train.groups,
        label_space=train.label_space,
        task=train.task,
    )
    report = modelselect.cross_validate(plan, scaled)
    head = modelselect.finalize(plan, scaled, report)
    predictor = Predictor(
        head=head,
        scaler=scaler,
        method=config.method,
        k=config.k,
        backend=config.backend,
        downscale=config.downscale,
    )
    return predictor, report


def evaluate_recognition(
    predictor: Predictor, test: LabeledFeatures, resamples: int, seed: int
) -> dict:
    scores = predictor.score(test.x)
    labels = test.y[:, 0] > 0
    predicted = scores[:, 0] >= predictor.head.threshold
    reports = evaluate.bootstrap_binary_report(
        predicted, labels, scores=scores[:, 0], resamples=resamples, seed=seed
    )
    point = evaluate.confusion_metrics(
        evaluate.BinaryConfusion.from_predictions(predicted, labels)
    )
    point["roc_auc"] = evaluate.roc_auc(scores[:, 0], labels)["auc"]
    return {
        "point": point,
        "bootstrap": {name: rep.to_json() for name, rep in reports.items()},
        "summary": evaluate.summary_table(reports),
        "threshold": predictor.head.threshold,
    }


def _localize_from_store(
    store: embed.FeatureStore,
    seq: FrameSequence,
    windows: list[detect.ClipWindow],
    predictor: Predictor,
) -> detect.DetectionResult:
    """Detection when features are precomputed: windows are looked up by clip
    id, so the store must have been extracted with the same segmentation."""
    probs = []
    for w in windows:
        if w.clip_id not in store:
            raise EmbedderError(
                f"feature store has no entry for window {w.clip_id!r}; "
                "re-extract with matching clip_length"
            )
        probs.append(float(predictor.score(store.get(w.clip_id).vector)[0]))
    positive = [p >= predictor.head.threshold for p in probs]
    return detect.DetectionResult(
        source_video=seq.video_id,
        predicted=detect.merge_positive_windows(windows, positive),
        window_probs=probs,
    )


def evaluate_detection_on_videos(
    predictor: Predictor,
    videos: list[FrameSequence],
    truth: dict[str, list[evaluate.TimeInterval]],
    config: RunConfig,
) -> dict:
    if config.backend.startswith("store:"):
        store = embed.FeatureStore(
            read_manifest(config.backend[6:]), root=Path(config.backend[6:]).parent
        )
        embedder = None
    else:
        store = None
        embedder = make_embedder(config.backend)
    results = []
    for seq in videos:
        if seq.video_id not in truth:
            raise DataError(f"no ground-truth intervals for {seq.video_id!r}")
        windows = detect.segment(seq, config.clip_length)
        if store is not None:
            result = _localize_from_store(store, seq, windows, predictor)
        else:
            result = detect.localize(
                seq,
                windows,
                predictor.head,
                embedder,
                method=predictor.method,
                k=predictor.k,
                downscale=predictor.downscale,
                scaler=predictor.scaler,
            )
        result.truths = truth[seq.video_id]
        results.append(result)
    out = {"videos": {}, "thresholds": {}}
    for threshold in config.tiou_thresholds:
        report = detect.evaluate_detection(
            results, threshold, resamples=config.resamples, seed=config.bootstrap_seed
        )
        point = evaluate.detection_ap([(r.predicted, r.truths) for r in results], threshold)
        out["thresholds"][str(threshold)] = {
            "ap": point["ap_mean"],
            "bootstrap": report.to_json(),
        }
        out["videos"][str(threshold)] = [r.to_json(threshold) for r in results]
    return out


def run_pipeline(config: RunConfig) -> dict:
    """Execute every stage and write manifest, CV report, head, and the final
    metrics report under ``config.out_dir``."""
    config.validate_paths()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    videos = load_videos(config)
    manifest, windows_by_source = datasets.slice_coral_reef(
        videos, clip_length=config.clip_length, clips_per_video=config.clips_per_video
    )
    manifest = datasets.split_grouped(
        manifest, test_fraction=config.test_fraction, seed=config.split_seed
    )

    clips = {}
    for seq in videos:
        for w in windows_by_source[seq.video_id]:
            clips[w.clip_id] = seq.slice(w.frame_start, w.frame_end, video_id=w.clip_id)
    manifest = extract_features(config, manifest, clips)
    write_manifest(out_dir / "manifest.jsonl", manifest.records)

    train, _ = gather_features(manifest, "train")
    test, _ = gather_features(manifest, "test")
    predictor, cv_report = fit_predictor(config, train)
    cv_report.save(out_dir / "cv_report.json")
    predictor.save(
        out_dir / "head.json",
        extra_metadata={
            "config_hash": config_hash(config),
            "feature_config_hash": feature_config_hash(config),
            "seeds": {
                "split": config.split_seed,
                "cv": config.cv_seed,
                "bootstrap": config.bootstrap_seed,
            },
            "data_fingerprint": _hash(
                {"x": hashlib.sha256(train.x.tobytes()).hexdigest(), "ids": train.ids}
            ),
        },
    )

    recognition = evaluate_recognition(
        predictor, test, config.resamples, config.bootstrap_seed
    )

    if config.truth_path is not None:
        truth = synth.read_truth(config.truth_path)
    elif (Path(config.data_dir) / "truth.jsonl").exists():
        truth = synth.read_truth(Path(config.data_dir) / "truth.jsonl")
    else:
        truth = datasets.middle_window_truth(windows_by_source)
    test_sources = sorted({r.group for r in manifest.split("test")})
    test_videos = [seq for seq in videos if seq.video_id in set(test_sources)]
    detection = evaluate_detection_on_videos(predictor, test_videos, truth, config)

    report = {
        "config": config.to_json(),
        "config_hash": config_hash(config),
        "feature_config_hash": feature_config_hash(config),
        "n_videos": len(videos),
        "n_clips": len(manifest.records),
        "n_train": train.n,
        "n_test": test.n,
        "test_sources": test_sources,
        "cv": {
            "chosen": cv_report.to_json()["chosen"],
            "chosen_mean_metric": cv_report.chosen_mean,
            "threshold": predictor.head.threshold,
        },
        "recognition": recognition,
        "detection": {"thresholds": detection["thresholds"]},
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    (out_dir / "summary.txt").write_text(recognition["summary"] + "\n")
    (out_dir / "detection.json").write_text(
        json.dumps(detection, indent=2, sort_keys=True)
    )
    return report


def run_ablation(config: RunConfig) -> dict:
    """Run the pipeline once per frame-selection method and compare test F1."""
    comparison = {}
    for method in (frameselect.MOTION_BASED, frameselect.EVENLY_SPACED):
        sub = dataclasses.replace(config, method=method, out_dir=str(Path(config.out_dir) / method))
        report = run_pipeline(sub)
        comparison[method] = {
            "f1": report["recognition"]["point"]["f1"],
            "accuracy": report["recognition"]["point"]["accuracy"],
            "bootstrap_f1_mean": report["recognition"]["bootstrap"]["f1"]["mean"],
        }
    motion = comparison[frameselect.MOTION_BASED]["f1"]
    evenly = comparison[frameselect.EVENLY_SPACED]["f1"]
    result = {
        "comparison": comparison,
        "motion_minus_evenly_f1": motion - evenly,
        "config_hash": config_hash(config),
    }
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.json").write_text(json.dumps(result, indent=2, sort_keys=True))
    return result
