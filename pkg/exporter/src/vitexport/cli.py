"""marf-export: dump frozen backbone classifier tokens for selected frames.

Exit code 0 when every video exports; 1 when any video fails (a failure
manifest is written next to the outputs); 2 for setup errors.
"""

from __future__ import annotations

import argparse
import sys

from .backbones import BackboneError, REGISTRY
from .export import ExportError, ExportJob, run_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marf-export", description=__doc__)
    parser.add_argument("--backbone", required=True, choices=sorted(REGISTRY))
    parser.add_argument("--manifest", required=True, help="input manifest JSONL")
    parser.add_argument(
        "--indices", required=True, help="directory of per-video frame-selection JSON"
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--onnx", action="store_true", help="export an ONNX bundle instead of MARF files"
    )
    parser.add_argument(
        "--data-dir", help="directory of source videos (default: the manifest's directory)"
    )
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        backbone_tag=args.backbone,
        manifest_path=args.manifest,
        indices_dir=args.indices,
        out_dir=args.out,
        data_dir=args.data_dir,
        batch_size=args.batch_size,
        device=args.device,
        onnx=args.onnx,
    )
    try:
        report = run_export(job)
    except (BackboneError, ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.onnx:
        print(f"ONNX bundle ({report.backbone_tag}, dim {report.dim}) -> {job.out_dir}")
        return 0
    print(
        f"{len(report.exported)} videos exported with {report.backbone_tag} "
        f"(dim {report.dim}) -> {job.out_dir}"
    )
    if report.failures:
        for row in report.failures:
            print(f"failed: {row['video_id']}: {row['error']}", file=sys.stderr)
        print(f"failure manifest -> {job.out_dir / 'failures.jsonl'}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
