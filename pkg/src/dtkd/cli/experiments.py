"""The experiments behind each subcommand.

Every run writes into `<out>/<run>/<seed>/` through a
[`PathBucket`][dtkd.store.PathBucket]:

* `history.csv`: `epoch,train_loss,val_acc,lr` per epoch.
* `best.dtkd`: the weights of the best validation epoch.
* `metrics.json`: accuracy, macro precision, recall and F1, per class metrics.
* `confusion.csv`: the validation confusion matrix.

Nothing written depends on wall time, so identical configs give identical
files.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import as_completed
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from dtkd.attribution import FgBgTable, attribute, grid_partition, quantify_fg_bg
from dtkd.attribution.fgbg import COMPARED_COLUMNS
from dtkd.cli.config import ExperimentConfig, RunManifest
from dtkd.cli.executors import make_executor
from dtkd.data import (
    CorruptionSpec,
    ImageDataset,
    SegmentationMask,
    apply_corruption,
    attribution_heatmap,
    denormalize,
    load_cifar10_binary,
    load_coco_mask,
    load_idx,
    make_synthetic_dataset,
    prepare,
    resize_bilinear,
    select_classes,
    subset_training_fraction,
)
from dtkd.exceptions import AllZeroDifferencesError, ConfigError, TooLongError
from dtkd.gradient_suite import GradientSuiteReport, run_gradient_suite
from dtkd.metrics import (
    ConfusionMatrix,
    MetricsReport,
    confusion_matrix,
    convergence_comparison,
    metrics_from_cm,
    summarize_runs,
    tp_change_table,
)
from dtkd.nn import Checkpoint, Model, build_model
from dtkd.store import PathBucket
from dtkd.training import (
    TrainingHistory,
    as_teacher,
    pretrain,
    train_tl,
    train_tl_kd,
    transfer,
)
from dtkd.types import Split

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = (
    "train_fraction",
    "label_noise_fraction",
    "image_noise_train_fraction",
)


@dataclass(frozen=True)
class Splits:
    """The prepared train and validation sets of one task."""

    train: ImageDataset
    val: ImageDataset


def load_raw(cfg: ExperimentConfig) -> Splits:
    """Train and validation images in `[0, 1]` with every class of the dataset."""
    match cfg.dataset:
        case "synthetic":
            num_classes = max((*cfg.source_classes, *cfg.target_classes)) + 1

            def synthetic(n: int, split: Split) -> ImageDataset:
                return make_synthetic_dataset(
                    n,
                    num_classes,
                    image_size=cfg.image_size,
                    noise=cfg.synthetic_noise,
                    seed=cfg.data_seed,
                    split=split,
                )

            return Splits(
                synthetic(cfg.n_per_class, "train"),
                synthetic(cfg.val_per_class, "val"),
            )
        case "cifar10":
            return Splits(
                load_cifar10_binary(cfg.train_path, split="train"),
                load_cifar10_binary(cfg.val_path, split="val"),
            )
        case "idx":
            return Splits(
                load_idx(cfg.train_path, cfg.train_labels_path, split="train"),
                load_idx(cfg.val_path, cfg.val_labels_path, split="val"),
            )
        case _:
            raise ConfigError(f"Unknown dataset {cfg.dataset!r}")


def source_task(cfg: ExperimentConfig, raw: Splits | None = None) -> Splits:
    """The pretraining task, never corrupted."""
    if not cfg.source_classes:
        raise ConfigError("Pretraining needs `source_classes`")
    raw = raw or load_raw(cfg)
    return Splits(
        prepare(select_classes(raw.train, cfg.source_classes), cfg.image_size),
        prepare(select_classes(raw.val, cfg.source_classes), cfg.image_size),
    )


def target_task(
    cfg: ExperimentConfig,
    seed: int,
    raw: Splits | None = None,
    *,
    clean: bool = False,
) -> Splits:
    """The fine-tuning task of one seed.

    The training split is subset to `train_fraction` first, then resized and
    corrupted, image corruptions before label noise.

    Args:
        cfg: The experiment.
        seed: Seed of subsetting and corruptions.
        raw: Already loaded images.
        clean: Skip subsetting and corruptions.
    """
    raw = raw or load_raw(cfg)
    train = select_classes(raw.train, cfg.target_classes)
    specs: list[CorruptionSpec] = []
    if not clean:
        if cfg.train_fraction < 1:
            train = subset_training_fraction(train, cfg.train_fraction, seed)
        specs = cfg.corruption_specs(seed)

    return Splits(
        prepare(train, cfg.image_size, corruptions=specs),
        prepare(select_classes(raw.val, cfg.target_classes), cfg.image_size),
    )


def _evaluate(model: Model, ds: ImageDataset) -> tuple[ConfusionMatrix, MetricsReport]:
    preds = model.predict(ds.images).argmax(axis=1)
    cm = confusion_matrix(preds, ds.labels, ds.num_classes, ds.class_names)
    return cm, metrics_from_cm(cm)


def save_run(
    bucket: PathBucket,
    model: Model,
    history: TrainingHistory,
    val: ImageDataset,
) -> dict[str, Any]:
    """Write the artifacts of one trained model.

    Returns:
        The contents of `metrics.json`.
    """
    cm, report = _evaluate(model, val)
    metrics = {
        **report.to_dict(),
        "best_epoch": history.best_epoch,
        "best_val_acc": history.best_val_acc,
        "epochs": len(history),
    }
    bucket["history.csv"] = history
    bucket["best.dtkd"] = Checkpoint.from_model(model)
    bucket["confusion.csv"] = cm
    bucket["metrics.json"] = metrics
    logger.info(
        f"{bucket.path}: accuracy {report.accuracy:.4f},"
        f" best epoch {history.best_epoch}",
    )
    return metrics


def write_manifest(
    subcommand: str,
    run: str,
    cfg: ExperimentConfig,
    *,
    inputs: Sequence[Path] = (),
) -> RunManifest:
    """Record the config, inputs and per-seed outputs of `<out>/<run>`."""
    bucket = PathBucket(cfg.out) / run
    outputs = {seed: list((bucket / seed).sizes()) for seed in bucket.subdirs()}
    manifest = RunManifest.build(subcommand, run, cfg, inputs=inputs, outputs=outputs)
    bucket["manifest.json"] = manifest.to_dict()
    return manifest


def _build(cfg: ExperimentConfig, arch: str, num_classes: int, seed: int) -> Model:
    return build_model(arch, num_classes, image_size=cfg.image_size, seed=seed)


def _pretrained_student(cfg: ExperimentConfig, seed: int) -> Model:
    path = PathBucket(cfg.out, create=False) / f"pretrain-{cfg.student}" / seed
    drop = path["best.dtkd"]
    if not drop.exists():
        raise ConfigError(
            f"No pretrained backbone at {drop.path}, run `dtkd pretrain` first",
        )
    model = _build(cfg, cfg.student, len(cfg.source_classes), seed)
    return drop.load(check=Checkpoint).apply_to(model)


def teacher_checkpoint(teacher: Path | str, seed: int) -> Path:
    """`teacher` itself, or `teacher/<seed>/best.dtkd` when it is a run directory."""
    path = Path(teacher)
    if path.is_dir():
        path = path / str(seed) / "best.dtkd"
    if not path.exists():
        raise ConfigError(f"Teacher checkpoint {path} does not exist")
    return path


def load_teacher(cfg: ExperimentConfig, teacher: Path | str, seed: int) -> Model:
    """A frozen eval-mode teacher for the target task."""
    model = _build(cfg, cfg.teacher, len(cfg.target_classes), seed)
    Checkpoint.load(teacher_checkpoint(teacher, seed)).apply_to(model)
    return as_teacher(model)


def run_pretrain(cfg: ExperimentConfig, seed: int) -> dict[str, dict[str, Any]]:
    """Pretrain student and teacher on the source task, then fine-tune the teacher.

    The teacher is fine-tuned on the target task with every parameter
    trainable and the hard-label loss only.

    Returns:
        Metrics by run name.
    """
    raw = load_raw(cfg)
    source = source_task(cfg, raw)
    target = target_task(cfg, seed, raw, clean=True)
    tcfg = cfg.training_config(seed)
    root = PathBucket(cfg.out)

    results = {}
    pretrained = {}
    for arch in dict.fromkeys((cfg.student, cfg.teacher)):
        model = _build(cfg, arch, len(cfg.source_classes), seed)
        model, history = pretrain(model, source.train, source.val, tcfg)
        run = f"pretrain-{arch}"
        results[run] = save_run(root / run / seed, model, history, source.val)
        pretrained[arch] = model

    teacher = transfer(
        pretrained[cfg.teacher],
        len(cfg.target_classes),
        seed=seed,
        freeze=False,
    )
    teacher, history = train_tl(teacher, target.train, target.val, tcfg)
    results["teacher"] = save_run(root / "teacher" / seed, teacher, history, target.val)
    return results


def run_finetune(
    cfg: ExperimentConfig,
    seed: int,
    *,
    run: str | None = None,
    teacher: Path | str | None = None,
) -> dict[str, Any]:
    """Fine-tune the pretrained student on the target task.

    Without a teacher this is plain transfer learning, with one the combined
    distillation loss is used.

    Args:
        cfg: The experiment.
        seed: The seed of this run.
        run: Output run name, `tl` or `tl_kd` by default.
        teacher: Teacher checkpoint or teacher run directory.

    Returns:
        The contents of `metrics.json`.
    """
    target = target_task(cfg, seed)
    tcfg = cfg.training_config(seed)
    student = transfer(
        _pretrained_student(cfg, seed),
        len(cfg.target_classes),
        seed=seed,
        freeze=cfg.freeze_backbone,
    )

    if teacher is None:
        run = run or "tl"
        model, history = train_tl(student, target.train, target.val, tcfg)
    else:
        run = run or "tl_kd"
        frozen = load_teacher(cfg, teacher, seed)
        dcfg = cfg.distillation_config()
        model, history = train_tl_kd(
            student,
            frozen,
            target.train,
            target.val,
            tcfg,
            dcfg,
        )

    return save_run(PathBucket(cfg.out) / run / seed, model, history, target.val)


def _run_dir(cfg: ExperimentConfig, run: str | Path) -> PathBucket:
    path = Path(run)
    if not path.is_dir():
        path = Path(cfg.out) / run
    if not path.is_dir():
        raise ConfigError(f"Run directory {run} does not exist")
    return PathBucket(path, create=False)


def run_evaluate(
    cfg: ExperimentConfig,
    baseline: str | Path,
    improved: str | Path,
) -> pd.DataFrame:
    """Compare two fine-tuning runs over their common seeds.

    Writes `summary.csv` (mean and sample deviation of the headline metrics),
    `tp_change.csv` (true positives of the pooled confusion matrices),
    `tp_change_<seed>.csv`, `per_class.csv` (per-class metrics of the pooled
    matrices) and `convergence.csv` into `<out>/evaluate/`.

    Returns:
        The summary table.
    """
    runs = {Path(run).name: _run_dir(cfg, run) for run in (baseline, improved)}
    (base_name, base), (imp_name, imp) = runs.items()
    seeds = sorted(set(base.subdirs()) & set(imp.subdirs()), key=_seed_key)
    if not seeds:
        raise ConfigError(f"Runs {baseline} and {improved} share no seed")

    out = PathBucket(cfg.out) / "evaluate"
    reports: dict[str, list[MetricsReport]] = {base_name: [], imp_name: []}
    histories: dict[str, dict[int, TrainingHistory]] = {base_name: {}, imp_name: {}}
    pooled: dict[str, ConfusionMatrix] = {}
    for seed in seeds:
        cms = {}
        for name, bucket in runs.items():
            seed_dir = bucket / seed
            metrics = seed_dir["metrics.json"].load()
            reports[name].append(MetricsReport.from_dict(_report_fields(metrics)))
            history_csv = seed_dir.path / "history.csv"
            histories[name][int(seed)] = TrainingHistory.from_csv(history_csv)
            cms[name] = ConfusionMatrix.from_csv(seed_dir.path / "confusion.csv")
            previous = pooled.get(name)
            pooled[name] = (
                cms[name]
                if previous is None
                else replace(previous, counts=previous.counts + cms[name].counts)
            )
        per_seed = tp_change_table(cms[base_name], cms[imp_name])
        out[f"tp_change_{seed}.csv"] = per_seed.reset_index()

    tp_change = tp_change_table(pooled[base_name], pooled[imp_name])
    out["tp_change.csv"] = tp_change.reset_index()
    per_class = pd.concat(
        {name: metrics_from_cm(cm).per_class_df() for name, cm in pooled.items()},
        names=["variant"],
    )
    out["per_class.csv"] = per_class.reset_index()
    out["convergence.csv"] = convergence_comparison(histories, reference=base_name)
    summary = summarize_runs(reports, baseline=base_name, improved=imp_name)
    out["summary.csv"] = summary.reset_index()
    return summary


def _seed_key(seed: str) -> tuple[int, str]:
    return (int(seed), seed) if seed.isdigit() else (2**63, seed)


def _report_fields(metrics: dict[str, Any]) -> dict[str, Any]:
    keys = ("accuracy", "precision", "recall", "f1", "per_class")
    return {k: metrics[k] for k in keys}


def _trained_student(cfg: ExperimentConfig, bucket: PathBucket) -> Model:
    model = _build(cfg, cfg.student, len(cfg.target_classes), 0)
    return bucket["best.dtkd"].load(check=Checkpoint).apply_to(model).eval()


def run_attribute(
    cfg: ExperimentConfig,
    run: str | Path,
    seed: int,
) -> list[dict[str, Any]]:
    """Shapley attribution of the first validation images for one run and seed.

    For every attributed sample `<id>` this writes `attribution/<id>.json`
    (the full report), `attribution/<id>_map.csv` (the per-pixel map of the
    true class) and `attribution/<id>.ppm` (that map as a heatmap).

    Returns:
        One summary row per sample, also written to `attribution/samples.csv`.
    """
    bucket = _run_dir(cfg, run) / seed
    model = _trained_student(cfg, bucket)
    raw = load_raw(cfg)
    clean = target_task(cfg, seed, raw, clean=True)
    background = clean.train.images[: cfg.background_size]
    partition = grid_partition(cfg.image_size, cfg.image_size, *cfg.grid_shape)
    out = PathBucket(bucket.path / "attribution")

    rows = []
    val = clean.val
    for i in range(min(cfg.attribution_samples, len(val))):
        sample_id, label = int(val.ids[i]), int(val.labels[i])
        report = attribute(
            model,
            val.images[i],
            partition,
            background,
            reference=cfg.reference,  # type: ignore[arg-type]
            output=cfg.attribution_output,  # type: ignore[arg-type]
            class_names=val.class_names,
        )
        pixel_map = report.pixel_map(label)
        out[f"{sample_id}.json"] = report.to_dict()
        out[f"{sample_id}_map.csv"] = pd.DataFrame(pixel_map)
        base = np.clip(denormalize(val.images[i]), 0, 1)
        out[f"{sample_id}.ppm"] = attribution_heatmap(pixel_map, base)
        rows.append(
            {
                "sample_id": sample_id,
                "label": label,
                "class_name": val.class_names[label],
                "winning_class": report.winning_class,
                "additivity_error": report.additivity_error(),
            },
        )

    out["samples.csv"] = pd.DataFrame(rows)
    return rows


def _masks(
    cfg: ExperimentConfig,
    val: ImageDataset,
    sample_ids: Sequence[int],
) -> dict[int, SegmentationMask]:
    if cfg.mask:
        return {
            sid: load_coco_mask(
                cfg.mask,
                sid,
                width=cfg.image_size,
                height=cfg.image_size,
            )
            for sid in sample_ids
        }
    if val.masks is None:
        raise ConfigError(
            "No `mask` annotation file given and the dataset has no masks",
        )
    position = {int(sid): i for i, sid in enumerate(val.ids)}
    return {
        sid: SegmentationMask.from_array(val.masks[position[sid]])
        for sid in sample_ids
    }


def run_quantify(
    cfg: ExperimentConfig,
    baseline: str | Path,
    improved: str | Path,
    seed: int,
) -> FgBgTable:
    """Foreground and background sums of the attributions of two runs.

    Writes `fgbg.csv` (one row per map), `ratios.csv` (both variants side by
    side with `A/B`, `C/D` and their ratio) and `wilcoxon.json` into
    `<out>/quantify/<seed>/`. A comparison without an exact test is recorded
    in `wilcoxon.json` as an error naming the compared column.
    """
    base, imp = _run_dir(cfg, baseline) / seed, _run_dir(cfg, improved) / seed
    base_name, imp_name = Path(baseline).name, Path(improved).name
    samples = (base / "attribution")["samples.csv"].load()
    sample_ids = [int(s) for s in samples["sample_id"]]
    masks = _masks(cfg, target_task(cfg, seed, clean=True).val, sample_ids)

    table = FgBgTable(baseline=base_name, improved=imp_name)
    for sid, class_name in zip(sample_ids, samples["class_name"], strict=True):
        for name, bucket in ((base_name, base), (imp_name, imp)):
            pixel_map = (bucket / "attribution")[f"{sid}_map.csv"].load().to_numpy()
            row = quantify_fg_bg(
                pixel_map,
                masks[sid],
                sample_id=sid,
                class_name=str(class_name),
                variant=name,
            )
            table.add(row)

    out = PathBucket(cfg.out) / "quantify" / seed
    out["fgbg.csv"] = table.rows_df()
    out["ratios.csv"] = table.df()
    out["wilcoxon.json"] = wilcoxon_report(table, seed)
    return table


def wilcoxon_report(table: FgBgTable, seed: int) -> dict[str, dict[str, Any]]:
    """Exact signed-rank tests of every compared column, errors kept per column."""
    tests: dict[str, dict[str, Any]] = {}
    n_pairs = len(table.pairs())
    for attr in COMPARED_COLUMNS:
        try:
            tests[attr] = table.compare(attr).to_dict()
        except (TooLongError, AllZeroDifferencesError) as e:
            logger.warning(
                f"No exact Wilcoxon test of {attr} for seed {seed}"
                f" over {n_pairs} pairs: {e}",
            )
            tests[attr] = {
                "error": type(e).__name__,
                "message": f"{attr} over {n_pairs} pairs: {e}",
            }
    return tests


def run_corrupt_preview(cfg: ExperimentConfig, count: int = 4) -> list[Path]:
    """PPM images of the first training images, clean and under each corruption."""
    raw = select_classes(load_raw(cfg).train, cfg.target_classes)
    raw = raw.subset(np.arange(count))
    if raw.image_shape != (cfg.image_size, cfg.image_size):
        images = resize_bilinear(raw.images, cfg.image_size, cfg.image_size)
        raw = replace(raw, images=images, masks=None)

    out = PathBucket(cfg.out) / "corrupt-preview"
    written = []
    for i, image in enumerate(raw.images):
        out[f"original_{i}.ppm"] = image
        written.append(out.path / f"original_{i}.ppm")

    for kind in ("center_black", "quarter_black"):
        spec = CorruptionSpec(kind=kind, side_range=cfg.side_range, seed=cfg.seeds[0])
        corrupted = apply_corruption(raw, spec)
        for i, image in enumerate(corrupted.images):
            out[f"{kind}_{i}.ppm"] = image
            written.append(out.path / f"{kind}_{i}.ppm")
    return written


def run_gradcheck(cfg: ExperimentConfig, n_configs: int = 100) -> GradientSuiteReport:
    """Run the gradient suite and write `gradcheck.json` and `gradcheck.csv`."""
    report = run_gradient_suite(n_configs, seed=cfg.seeds[0])
    out = PathBucket(cfg.out) / "gradcheck"
    out["gradcheck.json"] = report.to_dict()
    out["gradcheck.csv"] = report.df()
    return report


def _sweep_job(
    cfg: ExperimentConfig,
    parameter: str,
    value: float,
    seed: int,
    teacher: str | None,
) -> dict[str, Any]:
    variant = "tl" if teacher is None else "tl_kd"
    point = cfg.with_overrides(**{parameter: value})
    run = f"sweep/{parameter}={value!r}/{variant}"
    metrics = run_finetune(point, seed, run=run, teacher=teacher)
    return {
        "parameter": parameter,
        "value": value,
        "seed": seed,
        "variant": variant,
        "accuracy": metrics["accuracy"],
    }


def run_sweep(
    cfg: ExperimentConfig,
    parameter: str,
    values: Sequence[float],
    *,
    teacher: Path | str | None = None,
    jobs: int | None = 1,
) -> pd.DataFrame:
    """Fine-tune every grid point and seed, with and without the teacher.

    Writes `sweep.csv`, the final accuracy of every job, and
    `sweep_summary.csv`, the mean accuracy per value and variant plus an
    `improvement` column of TL+KD minus TL, into `<out>/sweep/`.

    Returns:
        The summary table.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"Cannot sweep {parameter!r}, choose from {SWEEP_PARAMETERS}")
    for value in values:
        cfg.with_overrides(**{parameter: value})

    teachers: list[str | None] = [None] if teacher is None else [None, str(teacher)]
    grid = [(v, s, t) for v in values for s in cfg.seeds for t in teachers]
    with make_executor(jobs) as executor:
        futures = [
            executor.submit(_sweep_job, cfg, parameter, v, s, t) for v, s, t in grid
        ]
        rows = [f.result() for f in as_completed(futures)]

    long = pd.DataFrame(rows).sort_values(["value", "variant", "seed"], kind="stable")
    long = long.reset_index(drop=True)
    summary = long.pivot_table(
        index="value",
        columns="variant",
        values="accuracy",
        aggfunc="mean",
    )
    summary.columns.name = None
    if {"tl", "tl_kd"} <= set(summary.columns):
        summary["improvement"] = summary["tl_kd"] - summary["tl"]
    summary = summary.reset_index()
    summary.insert(0, "parameter", parameter)

    out = PathBucket(cfg.out) / "sweep"
    out["sweep.csv"] = long
    out["sweep_summary.csv"] = summary
    return summary
