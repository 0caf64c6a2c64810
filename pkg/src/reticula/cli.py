"""``reticula`` command line: filter, detect, track, eval, phantom, pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .annotations import Status, load_annotations, save_annotations
from .config import ConfigError, PipelineConfig, load_config, reference_phantom_spec
from .detect import detect_volume
from .evaluate import ConfusionCounts, match_annotations, report
from .filters import filter_volume
from .phantom import PhantomError, PhantomSpec, generate_phantom
from .track import track_volume
from .volume import StackError, load_stack, save_stack

log = logging.getLogger("reticula")

BILATERAL_DIR = "bilateral"
SHARPENED_DIR = "sharpened"
DETECTIONS_FILE = "detections.json"
ANNOTATIONS_FILE = "annotations.json"
REPORT_FILE = "report.json"
TRUTH_FILE = "truth.json"


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def run_filter(in_manifest, out_dir, config: PipelineConfig, sharpen: bool, threads: int = 1) -> None:
    volume = load_stack(in_manifest)
    bilateral, sharpened = filter_volume(volume, config.bilateral, with_sharpen=sharpen, threads=threads)
    out = Path(out_dir)
    save_stack(bilateral, out / BILATERAL_DIR)
    if sharpened is not None:
        save_stack(sharpened, out / SHARPENED_DIR)
    log.info("filtered %d slices into %s", volume.depth, out)


def run_detect(bilateral_manifest, sharpened_manifest, out_json, config: PipelineConfig, threads: int = 1) -> None:
    bilateral = load_stack(bilateral_manifest)
    sharpened = load_stack(sharpened_manifest)
    if bilateral.shape != sharpened.shape:
        raise StackError(
            f"stack dimensions differ: {bilateral_manifest} is {bilateral.width}x{bilateral.height}x{bilateral.depth}, "
            f"{sharpened_manifest} is {sharpened.width}x{sharpened.height}x{sharpened.depth}"
        )
    ann = detect_volume(bilateral, sharpened, config.grow_bilateral, config.grow_laplacian, threads=threads)
    save_annotations(out_json, ann)
    log.info("detected %d components", len(ann))


def run_track(bilateral_manifest, annotations_in, annotations_out, config: PipelineConfig) -> None:
    bilateral = load_stack(bilateral_manifest)
    ann, _ = load_annotations(annotations_in)
    tracked, tracks = track_volume(bilateral, ann, config.grow_bilateral, config.track)
    save_annotations(annotations_out, tracked, tracks)
    kept = sum(1 for c in tracked if c.status == Status.CONFIRMED)
    log.info("tracking kept %d of %d components, %d tracks", kept, len(tracked), len(tracks))


def run_eval(pred_json, truth_json, out_report, config: PipelineConfig, include_provisional: bool = False) -> dict:
    pred, _ = load_annotations(pred_json)
    truth, _ = load_annotations(truth_json)
    statuses = (Status.CONFIRMED, Status.PROVISIONAL) if include_provisional else (Status.CONFIRMED,)
    counts = match_annotations(pred, truth, config.eval, pred_statuses=statuses)
    result = report(counts, config.eval)
    if out_report is not None:
        _write_json(Path(out_report), result)
    return result


def run_phantom(spec: PhantomSpec, out_dir) -> None:
    volume, truth, tracks = generate_phantom(spec)
    out = Path(out_dir)
    save_stack(volume, out)
    save_annotations(out / TRUTH_FILE, truth, tracks)
    log.info("phantom with %d truth components written to %s", len(truth), out)


def run_pipeline(in_manifest, out_dir, config: PipelineConfig, truth_json=None, threads: int = 1) -> Optional[dict]:
    out = Path(out_dir)
    run_filter(in_manifest, out, config, sharpen=True, threads=threads)
    run_detect(out / BILATERAL_DIR, out / SHARPENED_DIR, out / DETECTIONS_FILE, config, threads=threads)
    run_track(out / BILATERAL_DIR, out / DETECTIONS_FILE, out / ANNOTATIONS_FILE, config)
    if truth_json is None:
        return None
    return run_eval(out / ANNOTATIONS_FILE, truth_json, out / REPORT_FILE, config)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline configuration JSON (defaults built in)")
    common.add_argument("--threads", type=int, default=1, help="max worker threads for per-slice stages")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="reticula", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", parents=[common], help="bilateral filter (and optionally sharpen) a stack")
    p.add_argument("in_manifest")
    p.add_argument("out_dir")
    p.add_argument("--sharpen", action="store_true", help="also write the Laplacian-sharpened stack")

    p = sub.add_parser("detect", parents=[common], help="dual-pass region growing")
    p.add_argument("bilateral_manifest")
    p.add_argument("sharpened_manifest")
    p.add_argument("out_annotations")

    p = sub.add_parser("track", parents=[common], help="confirm, rescue or delete detections across slices")
    p.add_argument("bilateral_manifest")
    p.add_argument("annotations", help="annotations.json to read (rewritten in place unless -o is given)")
    p.add_argument("-o", "--output")

    p = sub.add_parser("eval", parents=[common], help="precision/recall against ground truth")
    p.add_argument("pred", nargs="?")
    p.add_argument("truth", nargs="?")
    p.add_argument("-o", "--output", help="report.json path")
    p.add_argument("--counts", nargs=3, type=int, metavar=("TP", "FP", "FN"), help="score given counts directly")
    p.add_argument("--include-provisional", action="store_true", help="score untracked detections too")

    p = sub.add_parser("phantom", parents=[common], help="generate a synthetic stack with ground truth")
    p.add_argument("spec", nargs="?", help="phantom spec.json; omit with --reference")
    p.add_argument("out_dir")
    p.add_argument("--reference", action="store_true", help="use the bundled reference phantom spec")

    p = sub.add_parser("pipeline", parents=[common], help="filter, detect, track and optionally evaluate")
    p.add_argument("in_manifest")
    p.add_argument("out_dir")
    p.add_argument("--truth", help="truth annotations.json; writes report.json when given")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        config = load_config(args.config)
        if args.command == "filter":
            run_filter(args.in_manifest, args.out_dir, config, args.sharpen, args.threads)
        elif args.command == "detect":
            run_detect(args.bilateral_manifest, args.sharpened_manifest, args.out_annotations, config, args.threads)
        elif args.command == "track":
            run_track(args.bilateral_manifest, args.annotations, args.output or args.annotations, config)
        elif args.command == "eval":
            if args.counts is not None:
                result = report(ConfusionCounts(*args.counts))
                if args.output:
                    _write_json(Path(args.output), result)
            else:
                if args.pred is None or args.truth is None:
                    parser.error("eval needs PRED and TRUTH, or --counts TP FP FN")
                result = run_eval(args.pred, args.truth, args.output, config, args.include_provisional)
            print(json.dumps(result))
        elif args.command == "phantom":
            if args.reference == (args.spec is not None):
                parser.error("phantom needs exactly one of SPEC or --reference")
            if args.reference:
                spec = reference_phantom_spec()
            else:
                spec = PhantomSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
            run_phantom(spec, args.out_dir)
        elif args.command == "pipeline":
            result = run_pipeline(args.in_manifest, args.out_dir, config, args.truth, args.threads)
            if result is not None:
                print(json.dumps(result))
    except (OSError, StackError, ConfigError, PhantomError, ValueError, TypeError) as exc:
        print(f"reticula: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
