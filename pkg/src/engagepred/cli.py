"""``engagepred`` command line.

Exit codes: 0 success, 2 invalid configuration or data, 3 missing
prerequisite, 4 any other runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ENV_PREFIX, ConfigError, defaults, dump, load_config
from .evaluation import FoldError
from .features import AssemblyError
from .labeling import ConfigurationError, LabelConflictError, PoolExhaustedError
from .models import TrainingError, ValidationError
from .pipeline import STAGES, Context, MissingPrerequisite, run_pipeline, run_stage

EXIT_OK, EXIT_VALIDATION, EXIT_MISSING, EXIT_RUNTIME = 0, 2, 3, 4
VALIDATION_ERRORS = (ConfigError, ConfigurationError, ValidationError, TrainingError, AssemblyError,
                     FoldError, LabelConflictError, PoolExhaustedError)

log = logging.getLogger("engagepred")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="YAML configuration file")
    p.add_argument("--workdir", type=Path, default=Path("work"), help="stage output root (default: ./work)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    p.add_argument("--force", action="store_true", help="rerun even if the manifest is unchanged")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="engagepred",
        description="Predict community engagement in a collective campaign from pre-campaign activity.",
        epilog=f"Configuration keys can be overridden with {ENV_PREFIX}<SECTION>__<KEY>=<value>.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    helps = {
        "synth": "generate a synthetic labeled dataset",
        "ingest": "parse dumps into per-community corpora for both windows",
        "label": "build the positive / matched-negative label set",
        "featurize": "compute the L, M and N feature blocks",
        "train": "fit one model on all labeled communities",
        "evaluate": "cross-validated ablation over feature blocks",
        "explain": "SHAP attributions of the trained tree model",
        "report": "results table, dataset statistics and explanation summaries",
        "run": "ingest through report in one go",
    }
    for name in (*STAGES, "run"):
        sub.add_parser(name, parents=[common], help=helps[name])
    cfg = sub.add_parser("config", parents=[common], help="show or check the configuration")
    group = cfg.add_mutually_exclusive_group()
    group.add_argument("--print-defaults", action="store_true", help="print the embedded defaults")
    group.add_argument("--print", dest="print_effective", action="store_true",
                       help="print the effective configuration")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "config" and args.print_defaults:
        sys.stdout.write(dump(defaults()))
        return EXIT_OK
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "config":
            sys.stdout.write(dump(cfg))
            return EXIT_OK
        ctx = Context(cfg, args.workdir, args.force)
        if args.command == "run":
            ran = run_pipeline(ctx)
            print(f"ran: {', '.join(ran) or 'nothing (all stages up to date)'}")
        else:
            changed = run_stage(args.command, ctx)
            print(f"{args.command}: {'done' if changed else 'up to date'} ({ctx.dir(args.command)})")
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (MissingPrerequisite, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to an exit code
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
