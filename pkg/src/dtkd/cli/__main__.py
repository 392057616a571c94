"""The `dtkd` command.

```
dtkd pretrain --config study.cfg
dtkd finetune --config study.cfg
dtkd finetune --config study.cfg --teacher out/teacher --alpha 0.1
dtkd evaluate --config study.cfg tl tl_kd
dtkd attribute --config study.cfg tl tl_kd
dtkd quantify --config study.cfg tl tl_kd
dtkd sweep --config study.cfg --teacher out/teacher --train-fraction 0.1 0.5 1
dtkd plot --history out/tl/0/history.csv out/tl_kd/0/history.csv
```

Errors of the library are printed to stderr as a single JSON object, the exit
code is 2 for configuration errors and 1 for any other error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from dtkd.__version__ import version
from dtkd.cli import experiments
from dtkd.cli.config import IMAGE_CORRUPTIONS, ExperimentConfig
from dtkd.cli.plots import emit_plots, history_label
from dtkd.exceptions import ConfigError, DTKDError

logger = logging.getLogger("dtkd.cli")

SUBCOMMANDS = (
    "pretrain",
    "finetune",
    "evaluate",
    "attribute",
    "quantify",
    "corrupt-preview",
    "gradcheck",
    "sweep",
    "plot",
)


def _common(*, sweep: bool = False) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=Path, help="A `key = value` config file.")
    parser.add_argument("--seed", type=int, help="Run this seed only.")
    parser.add_argument("--out", help="Output directory.")
    parser.add_argument("--alpha", type=float, help="Weight of the distillation term.")
    parser.add_argument("--temperature", type=float, help="Distillation temperature.")
    nargs = "+" if sweep else None
    parser.add_argument("--train-fraction", type=float, nargs=nargs)
    parser.add_argument("--label-noise-fraction", type=float, nargs=nargs)
    parser.add_argument("--image-noise-train-fraction", type=float, nargs=nargs)
    parser.add_argument("--corruption", choices=IMAGE_CORRUPTIONS)
    parser.add_argument("--center-min", type=int, help="Smallest blacked out side.")
    parser.add_argument("--center-max", type=int, help="Largest blacked out side.")
    parser.add_argument("--mask", help="COCO style segmentation annotations.")
    parser.add_argument("--grid", help="Superpixel grid as RxC.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings only.")
    return parser


def build_parser() -> argparse.ArgumentParser:
    """The argument parser of every subcommand."""
    parser = argparse.ArgumentParser(
        prog="dtkd",
        description="Transfer learning with knowledge distillation at desk scale.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {version}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    common = _common()

    subparsers.add_parser(
        "pretrain",
        parents=[common],
        help="Pretrain student and teacher on the source task.",
    )

    finetune = subparsers.add_parser(
        "finetune",
        parents=[common],
        help="Fine-tune the student, distilling from --teacher when given.",
    )
    finetune.add_argument("--teacher", help="Teacher checkpoint or run directory.")
    finetune.add_argument("--run", help="Run name, `tl` or `tl_kd` by default.")

    for name, help_ in (
        ("evaluate", "Compare the metrics of two runs."),
        ("quantify", "Foreground and background sums of two runs' attributions."),
    ):
        sub = subparsers.add_parser(name, parents=[common], help=help_)
        sub.add_argument("baseline", nargs="?", default="tl")
        sub.add_argument("improved", nargs="?", default="tl_kd")

    attribute = subparsers.add_parser(
        "attribute",
        parents=[common],
        help="Shapley attribution of validation images.",
    )
    attribute.add_argument("runs", nargs="*", default=["tl", "tl_kd"])

    preview = subparsers.add_parser(
        "corrupt-preview",
        parents=[common],
        help="Write PPM images of both image corruptions.",
    )
    preview.add_argument("--count", type=int, default=4)

    gradcheck = subparsers.add_parser(
        "gradcheck",
        parents=[common],
        help="Finite-difference check of every layer and loss.",
    )
    gradcheck.add_argument("--n-configs", type=int, default=100)

    sweep = subparsers.add_parser(
        "sweep",
        parents=[_common(sweep=True)],
        help="Fine-tune over a grid of one training set parameter.",
    )
    sweep.add_argument("--teacher", help="Teacher checkpoint or run directory.")
    sweep.add_argument("--jobs", type=int, default=1, help="Parallel jobs.")

    plot = subparsers.add_parser(
        "plot",
        parents=[common],
        help="SVG plots of histories or a sweep.",
    )
    plot.add_argument("--history", nargs="*", default=[], help="history.csv files.")
    plot.add_argument("--sweep", help="A sweep_summary.csv.")
    return parser


def setup_logging(*, verbose: bool = False, quiet: bool = False) -> None:
    """Log to the console, through rich when it is installed."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    try:
        from rich.logging import RichHandler
    except ImportError:
        logging.basicConfig(
            level=level,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
            force=True,
        )
    else:
        logging.basicConfig(
            level=level,
            format="%(message)s",
            handlers=[RichHandler(show_path=False)],
            force=True,
        )


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """The config file, or the defaults, with the flags applied on top."""
    if args.config is None:
        cfg = ExperimentConfig()
    else:
        cfg = ExperimentConfig.from_file(args.config)
    overrides: dict[str, Any] = {
        "out": args.out,
        "alpha": args.alpha,
        "temperature": args.temperature,
        "corruption": args.corruption,
        "center_min": args.center_min,
        "center_max": args.center_max,
        "mask": args.mask,
        "grid": args.grid,
        "seeds": None if args.seed is None else (args.seed,),
    }
    if args.subcommand != "sweep":
        overrides.update(
            {
                "train_fraction": args.train_fraction,
                "label_noise_fraction": args.label_noise_fraction,
                "image_noise_train_fraction": args.image_noise_train_fraction,
            },
        )
    return cfg.with_overrides(**overrides)


def _sweep_grid(args: argparse.Namespace) -> tuple[str, list[float]]:
    given = {
        name: values
        for name in experiments.SWEEP_PARAMETERS
        if (values := getattr(args, name)) is not None
    }
    if len(given) != 1:
        raise ConfigError(
            "Sweep exactly one of --train-fraction, --label-noise-fraction"
            f" or --image-noise-train-fraction, got {sorted(given)}",
        )
    ((parameter, values),) = given.items()
    return parameter, list(values)


def run(args: argparse.Namespace) -> int:  # noqa: C901, PLR0912
    """Execute a parsed command line."""
    if args.subcommand == "plot":
        if not args.history and args.sweep is None:
            raise ConfigError("Give --history files, a --sweep summary or both")
        written = emit_plots(
            args.out or "out/plots",
            history_csvs={history_label(p): p for p in args.history},
            sweep_csv=args.sweep,
        )
        logger.info(f"Wrote {', '.join(str(p) for p in written)}")
        return 0

    cfg = load_config(args)
    match args.subcommand:
        case "pretrain":
            for seed in cfg.seeds:
                experiments.run_pretrain(cfg, seed)
            archs = dict.fromkeys((cfg.student, cfg.teacher))
            for run_name in (*(f"pretrain-{arch}" for arch in archs), "teacher"):
                experiments.write_manifest("pretrain", run_name, cfg)
        case "finetune":
            run_name = args.run or ("tl" if args.teacher is None else "tl_kd")
            inputs = []
            for seed in cfg.seeds:
                if args.teacher is not None:
                    inputs.append(experiments.teacher_checkpoint(args.teacher, seed))
                experiments.run_finetune(cfg, seed, run=run_name, teacher=args.teacher)
            experiments.write_manifest("finetune", run_name, cfg, inputs=inputs)
        case "evaluate":
            summary = experiments.run_evaluate(cfg, args.baseline, args.improved)
            logger.info(f"Summary\n{summary.to_string()}")
            experiments.write_manifest("evaluate", "evaluate", cfg)
        case "attribute":
            for run_name in args.runs:
                for seed in cfg.seeds:
                    experiments.run_attribute(cfg, run_name, seed)
        case "quantify":
            for seed in cfg.seeds:
                experiments.run_quantify(cfg, args.baseline, args.improved, seed)
            experiments.write_manifest("quantify", "quantify", cfg)
        case "corrupt-preview":
            experiments.run_corrupt_preview(cfg, args.count)
        case "gradcheck":
            report = experiments.run_gradcheck(cfg, args.n_configs)
            if not report.passed:
                logger.error(
                    "Gradient check failed,"
                    f" max relative error {report.max_rel_error:.3e}",
                )
                return 1
        case "sweep":
            parameter, values = _sweep_grid(args)
            experiments.run_sweep(
                cfg,
                parameter,
                values,
                teacher=args.teacher,
                jobs=args.jobs,
            )
            experiments.write_manifest("sweep", "sweep", cfg)
        case _:
            raise ConfigError(f"Unknown subcommand {args.subcommand!r}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the `dtkd` console script.

    Returns:
        The exit code.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(verbose=args.verbose, quiet=args.quiet)

    try:
        return run(args)
    except DTKDError as e:
        error = {
            "error": type(e).__name__,
            "message": str(e),
            "subcommand": args.subcommand,
        }
        print(json.dumps(error), file=sys.stderr)  # noqa: T201
        return 2 if isinstance(e, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
