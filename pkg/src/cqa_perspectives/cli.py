"""Command-line entry point: one subcommand per pipeline stage, plus run-all.

Exit codes: 0 success, 2 config error, 3 data error, 4 backend error,
5 internal error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import PipelineError
from .pipeline import STAGES, run_pipeline, run_single

logger = logging.getLogger("cqa_perspectives")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqa-perspectives",
        description="Perspective classification and summarization for CQA threads.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline config file (TOML)")
    common.add_argument("--seed", type=int, help="override the label-model and SVM seeds")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name, parents=[common], help=f"run the {name} stage")
        if name == "train-label-model":
            p.add_argument("--epochs", type=int, help="EM iterations (default from config, 500)")
    p = sub.add_parser("run-all", parents=[common], help="run every stage, skipping up-to-date ones")
    p.add_argument("--force", action="store_true", help="rerun every stage")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if getattr(args, "epochs", None) is not None:
            cfg = cfg.with_label_model_epochs(args.epochs)
        if args.command == "run-all":
            status = run_pipeline(cfg, force=args.force)
            for stage, state in status.items():
                print(f"{stage}: {state}")
        else:
            run_single(cfg, args.command)
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
