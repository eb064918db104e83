"""Command-line entry point: synth, mask, extract, train, eval, predict, report."""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from Backend.config import RunConfig
from Backend.datamodel import SyntheticSpec, generate_synthetic
from Backend.errors import FDPNError, UsageError
from Backend.metrics import duration_bucket_improvement, read_report
from Backend.model_loader import derived_seed
from Backend.training_pipeline import (
    CHECKPOINT_DIR,
    CONFIG_NAME,
    LATEST_NAME,
    SYSTEMS,
    evaluate,
    export_features,
    export_masks,
    predict,
    train,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
IMPROVEMENT_NAME = "bucket_improvement.csv"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--run-dir", default="runs/default", help="run directory (snapshot, checkpoints, logs)")
    common.add_argument("--dps-mode", choices=["network_only", "saliency_only", "combined"])
    common.add_argument("--snippet-net", choices=["toy", "precomputed"])
    common.add_argument("--quiet", action="store_true", help="warnings only, no progress bars")
    common.add_argument("--log-file", help="also write the log to this file")

    parser = argparse.ArgumentParser(
        prog="run_fdpn.py",
        allow_abbrev=False,
        description="Frame-level video anomaly detection with direction prediction. "
        "Any config key can be overridden as --key value.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], allow_abbrev=False, help="generate a synthetic panorama dataset")
    synth.add_argument("--out", required=True, help="dataset directory to create")
    synth.add_argument("--num-videos", type=int, default=24)
    synth.add_argument("--num-test-videos", type=int)
    synth.add_argument("--frame-count", type=int, default=512)
    synth.add_argument("--min-duration", type=int, default=8)
    synth.add_argument("--max-duration", type=int, default=64)
    synth.add_argument("--intensity", type=float, default=1.0)
    synth.add_argument("--no-direction-signal", action="store_true")

    mask = sub.add_parser("mask", parents=[common], allow_abbrev=False, help="write saliency-masked frames")
    mask.add_argument("--data", required=True)
    mask.add_argument("--out", required=True)
    mask.add_argument("--grid-n", type=int)
    mask.add_argument("--top-k", type=int)
    mask.add_argument("--saliency", choices=["tempdiff", "file"])

    extract = sub.add_parser("extract", parents=[common], allow_abbrev=False, help="write snippet and frame features")
    extract.add_argument("--data", required=True)
    extract.add_argument("--out", required=True)

    fit = sub.add_parser("train", parents=[common], allow_abbrev=False, help="train the snippet scorer, then FPS and DPS")
    fit.add_argument("--data", required=True)
    fit.add_argument("--resume", action="store_true")
    fit.add_argument("--stop-after", type=int, help="stop (with a checkpoint) after this step")

    ev = sub.add_parser("eval", parents=[common], allow_abbrev=False, help="score the test split")
    ev.add_argument("--data", required=True)
    ev.add_argument("--checkpoint")
    ev.add_argument("--system", choices=SYSTEMS, default="fdpn")
    ev.add_argument("--out")

    pred = sub.add_parser("predict", parents=[common], allow_abbrev=False, help="score a single frame file")
    pred.add_argument("--video", required=True)
    pred.add_argument("--checkpoint")
    pred.add_argument("--out", required=True)

    rep = sub.add_parser("report", parents=[common], allow_abbrev=False, help="duration-bucket accuracy delta of two evaluations")
    rep.add_argument("--current", required=True, help="evaluation directory of the system under test")
    rep.add_argument("--reference", required=True, help="evaluation directory of the reference system")
    rep.add_argument("--out", required=True)
    return parser


def parse_overrides(tokens: Sequence[str]) -> Dict[str, str]:
    """`--key value` and `--key=value` pairs left over by argparse."""
    overrides: Dict[str, str] = {}
    tokens = list(tokens)
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise UsageError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(tokens):
                raise UsageError(f"missing value for --{key}")
            i += 1
            value = tokens[i]
        overrides[key.replace("-", "_")] = value
        i += 1
    return overrides


def resolve_config(args: argparse.Namespace, overrides: Dict[str, str]) -> RunConfig:
    values: Dict[str, object] = dict(overrides)
    for name in ("seed", "dps_mode", "snippet_net", "grid_n", "top_k", "saliency"):
        value = getattr(args, name, None)
        if value is not None:
            values[name] = value
    config_path = args.config
    snapshot = Path(args.run_dir) / CONFIG_NAME
    if config_path is None and args.command in ("eval", "predict") and snapshot.exists():
        config_path = snapshot
    if config_path is not None:
        return RunConfig.from_file(config_path, values)
    return RunConfig().with_overrides(values)


def setup_logging(quiet: bool = False, log_file: Optional[str] = None) -> None:
    root = logging.getLogger()
    root.setLevel(logging.WARNING if quiet else logging.INFO)
    if log_file:
        handler = logging.FileHandler(log_file, encoding="utf-8")
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)


def _checkpoint(args: argparse.Namespace) -> Path:
    return Path(args.checkpoint) if args.checkpoint else Path(args.run_dir) / CHECKPOINT_DIR / LATEST_NAME


def run_command(args: argparse.Namespace, config: RunConfig) -> None:
    progress = not args.quiet
    if args.command == "synth":
        spec = SyntheticSpec(
            num_videos=args.num_videos,
            num_test_videos=args.num_test_videos,
            frame_count=args.frame_count,
            anomaly_duration_range=(args.min_duration, args.max_duration),
            anomaly_intensity=args.intensity,
            direction_signal=not args.no_direction_signal,
            seed=derived_seed(config.seed, 2),
        )
        generate_synthetic(spec, args.out)
    elif args.command == "mask":
        export_masks(args.data, config, args.out, progress)
    elif args.command == "extract":
        export_features(args.data, config, args.out, progress)
    elif args.command == "train":
        artifacts = train(config, args.data, args.run_dir, resume=args.resume, progress=progress, stop_after=args.stop_after)
        logger.info(f"Loss log: {artifacts.loss_log}; latest checkpoint: {artifacts.latest_checkpoint}")
    elif args.command == "eval":
        out = args.out or Path(args.run_dir) / "eval" / args.system
        evaluate(_checkpoint(args), args.data, config, args.system, out, progress)
    elif args.command == "predict":
        predict(_checkpoint(args), args.video, config, args.out)
    elif args.command == "report":
        deltas = duration_bucket_improvement(
            read_report(args.current), read_report(args.reference), fps_nominal=config.fps_nominal
        )
        rows = [
            {"bucket": bucket, "threshold": t, "delta": delta}
            for bucket, by_threshold in deltas.items()
            for t, delta in by_threshold.items()
        ]
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows, columns=["bucket", "threshold", "delta"]).to_csv(
            out / IMPROVEMENT_NAME, index=False, lineterminator="\n"
        )
        logger.info(f"✅ Wrote {len(rows)} bucket deltas to {out / IMPROVEMENT_NAME}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    setup_logging(args.quiet, args.log_file)
    try:
        config = resolve_config(args, parse_overrides(extra))
        run_command(args, config)
    except FDPNError as e:
        logger.error(str(e))
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected failure: {str(e)}")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
