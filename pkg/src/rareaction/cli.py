"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datasets, embed, frameselect, pipeline, synth
from .errors import ConfigError, DataError, RareActionError
from .manifest import read_manifest, write_manifest
from .media import DecodeConfig, decode_video
from .modelselect import BINARY, MULTILABEL
from .pipeline import Predictor, RunConfig


def _write_json(path: str | Path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def _config_from_args(args) -> RunConfig:
    overrides = {
        "data_dir": args.data_dir,
        "out_dir": args.out_dir,
        "method": args.method,
        "k": args.k,
    }
    if args.config:
        return RunConfig.from_json(args.config, **overrides)
    missing = [name for name in ("data_dir", "out_dir") if overrides[name] is None]
    if missing:
        raise ConfigError(f"--config or explicit {missing} required")
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_synth(args) -> int:
    spec = synth.SyntheticSpec(
        n_videos=args.videos,
        frame_size=(args.height, args.width),
        fps=args.fps,
        clip_length=args.clip_length,
        clips_per_video=args.clips_per_video,
        event_window=tuple(args.event_window) if args.event_window else None,
        event_jitter=args.event_jitter,
        base_speed=args.base_speed,
        event_speed=args.event_speed,
        noise_std=args.noise_std,
        blob_amplitude=args.blob_amplitude,
        seed=args.seed,
    )
    dataset = synth.generate_synthetic(spec, args.out)
    print(f"wrote {len(dataset.video_ids)} videos under {dataset.root}")
    return 0


def cmd_slice(args) -> int:
    videos = [
        decode_video(p, DecodeConfig())
        for p in pipeline.discover_videos(args.data_dir)
    ]
    manifest, _ = datasets.slice_coral_reef(
        videos, clip_length=args.clip_length, clips_per_video=args.clips_per_video
    )
    write_manifest(args.out, manifest.records)
    positives = sum(1 for r in manifest.records if r.labels)
    print(f"{len(manifest.records)} clips ({positives} positive) -> {args.out}")
    return 0


def cmd_filter_ak(args) -> int:
    rows = datasets.read_annotation_csv(args.annotations)
    known = None
    if args.known_actions:
        known = set(Path(args.known_actions).read_text().splitlines())
    manifest, unknown = datasets.filter_ak_fish(rows, known_actions=known)
    write_manifest(args.out, manifest.records)
    for action in unknown:
        print(f"warning: unknown action {action!r} treated as non-predation", file=sys.stderr)
    positives = sum(1 for r in manifest.records if r.labels)
    print(f"{len(manifest.records)} fish videos ({positives} positive) -> {args.out}")
    return 0


def cmd_split(args) -> int:
    manifest = datasets.DatasetManifest(records=read_manifest(args.manifest))
    split = datasets.split_grouped(manifest, test_fraction=args.test_fraction, seed=args.seed)
    write_manifest(args.out, split.records)
    print(
        f"{len(split.split('train'))} train / {len(split.split('test'))} test -> {args.out}"
    )
    return 0


def cmd_sample_ak(args) -> int:
    manifest = datasets.DatasetManifest(
        records=read_manifest(args.manifest), task=MULTILABEL
    )
    sample, report = datasets.representative_sample(
        manifest, n=args.n, seed=args.seed, min_p_value=args.min_p, max_retries=args.retries
    )
    write_manifest(args.out, sample.records)
    _write_json(Path(args.out).with_suffix(".report.json"), report)
    print(
        f"{len(sample.records)} records, {report['surviving_classes']} classes, "
        f"chi2 p={report['p_value']:.3f} -> {args.out}"
    )
    return 0


def cmd_select_frames(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in pipeline.discover_videos(args.data_dir):
        seq = decode_video(path, DecodeConfig())
        sel = frameselect.select_frames(seq, args.method, args.k, downscale=args.downscale)
        _write_json(out_dir / f"{seq.video_id}.json", pipeline.selection_payload(seq.video_id, sel))
    print(f"frame selections -> {out_dir}")
    return 0


def _clip_sequences(records, data_dir: Path) -> dict:
    """Clip FrameSequences for manifest records: sliced from the source video
    when the record carries frame boundaries, else the whole video."""
    cache: dict[str, object] = {}
    clips = {}
    for r in records:
        source = r.source_video or r.video_id
        if source not in cache:
            cache[source] = decode_video(data_dir / source, DecodeConfig())
        seq = cache[source]
        if "frame_start" in r.extra and "frame_end" in r.extra:
            clips[r.video_id] = seq.slice(
                int(r.extra["frame_start"]), int(r.extra["frame_end"]), video_id=r.video_id
            )
        else:
            clips[r.video_id] = seq
    return clips


def cmd_extract(args) -> int:
    records = read_manifest(args.manifest)
    manifest = datasets.DatasetManifest(records=records, task=args.task)
    config = RunConfig(
        data_dir=args.data_dir,
        out_dir=args.out_dir,
        k=args.k,
        method=args.method,
        backend=args.backend,
        downscale=args.downscale,
    )
    clips = _clip_sequences(records, Path(args.data_dir))
    extracted = pipeline.extract_features(config, manifest, clips)
    out_manifest = Path(args.out_dir) / "manifest.jsonl"
    write_manifest(out_manifest, extracted.records)
    print(f"{len(extracted.records)} features -> {out_manifest}")
    return 0


def cmd_cv(args) -> int:
    manifest = datasets.DatasetManifest(records=read_manifest(args.manifest), task=args.task)
    train, _ = pipeline.gather_features(manifest, "train")
    config = RunConfig(
        data_dir=".", out_dir=".", cv_seed=args.seed, standardize=not args.no_standardize
    )
    _, report = pipeline.fit_predictor(config, train)
    report.save(args.out)
    print(
        f"grid of {len(report.rows)} evaluated on {report.plan.folds} folds; "
        f"chosen {report.to_json()['chosen']} (mean {report.chosen_mean:.4f}) -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    manifest = datasets.DatasetManifest(records=read_manifest(args.manifest), task=args.task)
    train, _ = pipeline.gather_features(manifest, "train")
    config = RunConfig(
        data_dir=".",
        out_dir=".",
        cv_seed=args.seed,
        method=args.method,
        k=args.k,
        backend=args.backend,
        standardize=not args.no_standardize,
    )
    predictor, report = pipeline.fit_predictor(config, train)
    predictor.save(args.out)
    if args.cv_report:
        report.save(args.cv_report)
    print(
        f"trained head ({report.to_json()['chosen']}), threshold "
        f"{predictor.head.threshold:.4f} -> {args.out}"
    )
    return 0


def cmd_predict(args) -> int:
    predictor = Predictor.load(args.head)
    records = read_manifest(args.manifest)
    if args.split:
        records = [r for r in records if r.split == args.split]
    if not records:
        raise DataError("no records to predict on")
    with open(args.out, "w", encoding="utf-8") as fh:
        for r in records:
            if r.feature_path is None:
                raise DataError(f"record {r.video_id!r} has no feature_path")
            feature = embed.read_feature(r.feature_path, video_id=r.video_id)
            scores = predictor.score(feature.vector)
            fh.write(
                json.dumps(
                    {
                        "video_id": r.video_id,
                        "scores": [float(s) for s in scores],
                        "predicted": [bool(s >= predictor.head.threshold) for s in scores],
                        "threshold": predictor.head.threshold,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    print(f"{len(records)} predictions -> {args.out}")
    return 0


def cmd_eval_ar(args) -> int:
    predictor = Predictor.load(args.head)
    manifest = datasets.DatasetManifest(records=read_manifest(args.manifest), task=BINARY)
    test, _ = pipeline.gather_features(manifest, args.split)
    result = pipeline.evaluate_recognition(predictor, test, args.resamples, args.seed)
    _write_json(args.out, result)
    print(result["summary"])
    return 0


def cmd_eval_ad(args) -> int:
    predictor = Predictor.load(args.head)
    truth = synth.read_truth(args.truth)
    config = RunConfig(
        data_dir=args.data_dir,
        out_dir=str(Path(args.out).parent),
        clip_length=args.clip_length,
        tiou_thresholds=tuple(args.thresholds),
        resamples=args.resamples,
        bootstrap_seed=args.seed,
        backend=predictor.backend if args.backend is None else args.backend,
        k=predictor.k,
        method=predictor.method,
    )
    videos = pipeline.load_videos(config)
    if args.videos:
        wanted = set(args.videos)
        videos = [v for v in videos if v.video_id in wanted]
    result = pipeline.evaluate_detection_on_videos(predictor, videos, truth, config)
    _write_json(args.out, result)
    for threshold, entry in result["thresholds"].items():
        rep = entry["bootstrap"]
        print(
            f"t-IoU {threshold}: AP {100 * entry['ap']:.2f}% "
            f"(bootstrap {100 * rep['mean']:.2f}% +/- {100 * rep['half_width_95']:.2f}%)"
        )
    return 0


def cmd_run(args) -> int:
    config = _config_from_args(args)
    report = pipeline.run_pipeline(config)
    print(json.dumps(report["recognition"]["point"], indent=2, sort_keys=True))
    print(f"report -> {Path(config.out_dir) / 'report.json'}")
    return 0


def cmd_ablate(args) -> int:
    config = _config_from_args(args)
    result = pipeline.run_ablation(config)
    for method, row in result["comparison"].items():
        print(f"{method}: F1 {row['f1']:.4f}  accuracy {row['accuracy']:.4f}")
    print(f"motion - evenly F1: {result['motion_minus_evenly_f1']:+.4f}")
    return 0


def _add_config_args(p) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--data-dir", help="override: directory of source videos")
    p.add_argument("--out-dir", help="override: output directory")
    p.add_argument("--method", choices=(frameselect.MOTION_BASED, frameselect.EVENLY_SPACED))
    p.add_argument("--k", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rareaction",
        description="Rare-action recognition and temporal detection in video",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=60)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--fps", type=float, default=12.0)
    p.add_argument("--clip-length", type=float, default=2.0)
    p.add_argument("--clips-per-video", type=int, default=5)
    p.add_argument("--event-window", type=float, nargs=2, metavar=("START", "END"))
    p.add_argument("--event-jitter", action="store_true")
    p.add_argument("--base-speed", type=float, default=0.8)
    p.add_argument("--event-speed", type=float, default=7.0)
    p.add_argument("--noise-std", type=float, default=3.0)
    p.add_argument("--blob-amplitude", type=float, default=160.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("slice", help="cut source videos into labeled clips")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clip-length", type=float, default=2.0)
    p.add_argument("--clips-per-video", type=int, default=5)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("filter-ak", help="binary fish-predation manifest from annotations")
    p.add_argument("--annotations", required=True, help="normalized annotation CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--known-actions", help="file with one known action name per line")
    p.set_defaults(func=cmd_filter_ak)

    p = sub.add_parser("split", help="grouped train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("sample-ak", help="representative multilabel subsample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-p", type=float, default=0.05)
    p.add_argument("--retries", type=int, default=20)
    p.set_defaults(func=cmd_sample_ak)

    p = sub.add_parser("select-frames", help="emit per-video frame selections")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--method",
        default=frameselect.MOTION_BASED,
        choices=(frameselect.MOTION_BASED, frameselect.EVENLY_SPACED),
    )
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--downscale", type=int)
    p.set_defaults(func=cmd_select_frames)

    p = sub.add_parser("extract", help="embed manifest clips into MARF features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--backend", default="mock")
    p.add_argument(
        "--method",
        default=frameselect.MOTION_BASED,
        choices=(frameselect.MOTION_BASED, frameselect.EVENLY_SPACED),
    )
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--downscale", type=int)
    p.add_argument("--task", default=BINARY, choices=(BINARY, MULTILABEL))
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("cv", help="cross-validate the hyperparameter grid")
    p.add_argument("--manifest", required=True, help="manifest with feature paths")
    p.add_argument("--out", required=True, help="CV report JSON")
    p.add_argument("--task", default=BINARY, choices=(BINARY, MULTILABEL))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-standardize", action="store_true")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("train", help="cross-validate, train final head, fix threshold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="head JSON")
    p.add_argument("--cv-report", help="also write the CV report here")
    p.add_argument("--task", default=BINARY, choices=(BINARY, MULTILABEL))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--method",
        default=frameselect.MOTION_BASED,
        choices=(frameselect.MOTION_BASED, frameselect.EVENLY_SPACED),
    )
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--backend", default="mock")
    p.add_argument("--no-standardize", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score manifest records with a trained head")
    p.add_argument("--manifest", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "test"))
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval-ar", help="bootstrapped recognition metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--resamples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval_ar)

    p = sub.add_parser("eval-ad", help="temporal detection with bootstrapped AP")
    p.add_argument("--data-dir", required=True, help="untrimmed source videos")
    p.add_argument("--head", required=True)
    p.add_argument("--truth", required=True, help="ground-truth intervals JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--clip-length", type=float, default=2.0)
    p.add_argument("--thresholds", type=float, nargs="+", default=[0.5, 0.25])
    p.add_argument("--resamples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend")
    p.add_argument("--videos", nargs="+", help="restrict to these video ids")
    p.set_defaults(func=cmd_eval_ad)

    p = sub.add_parser("run", help="full pipeline from one config")
    _add_config_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run the pipeline once per selection method")
    _add_config_args(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RareActionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
