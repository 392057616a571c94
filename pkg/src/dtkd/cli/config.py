"""Flat `key = value` experiment configuration and run manifests.

```
# target task of the synthetic study
dataset = synthetic
source_classes = 0,1,2,3,4
target_classes = 5,6,7,8,9
seeds = 0,7,42
alpha = 0.1
```

Lines hold one assignment each, `#` starts a comment. Every key must be a
field of [`ExperimentConfig`][dtkd.cli.ExperimentConfig] and serializing a
parsed config gives text that parses to the same config.
"""
from __future__ import annotations

import hashlib
import logging
import re
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from dtkd.data import CorruptionSpec
from dtkd.exceptions import ConfigError
from dtkd.losses import DistillationConfig
from dtkd.training import TrainingConfig

logger = logging.getLogger(__name__)

DATASETS = ("synthetic", "cifar10", "idx")
IMAGE_CORRUPTIONS = ("center_black", "quarter_black")
PATH_KEYS = ("train_path", "val_path", "train_labels_path", "val_labels_path", "mask")
_GRID = re.compile(r"^(\d+)x(\d+)$")
_TRUE = ("true", "yes", "1", "on")
_FALSE = ("false", "no", "0", "off")


@dataclass(frozen=True, kw_only=True)
class ExperimentConfig:
    """Everything an experiment run depends on.

    Attributes:
        dataset: `synthetic`, `cifar10` (binary batches) or `idx`.
        train_path: Training images file, unused for `synthetic`.
        val_path: Validation images file, unused for `synthetic`.
        train_labels_path: Training labels file of an `idx` dataset.
        val_labels_path: Validation labels file of an `idx` dataset.
        source_classes: Classes of the pretraining task.
        target_classes: Classes of the fine-tuning task.
        n_per_class: Synthetic training images per class.
        val_per_class: Synthetic validation images per class.
        synthetic_noise: Pixel noise of synthetic images.
        data_seed: Seed of the synthetic generator.
        image_size: Side of the square model inputs.
        student: Architecture of the student.
        teacher: Architecture of the teacher.
        freeze_backbone: Train only the new head when fine-tuning.
        learning_rate: See [`TrainingConfig`][dtkd.training.TrainingConfig].
        momentum: See `TrainingConfig`.
        weight_decay: See `TrainingConfig`.
        batch_size: See `TrainingConfig`.
        max_epochs: See `TrainingConfig`.
        lr_patience: See `TrainingConfig`.
        lr_factor: See `TrainingConfig`.
        early_stop_patience: See `TrainingConfig`.
        flip_prob: See `TrainingConfig`.
        temperature: Distillation temperature.
        alpha: Weight of the distillation term.
        train_fraction: Share of each target class kept for training.
        label_noise_fraction: Share of training labels reassigned.
        image_noise_train_fraction: Share of training images corrupted.
        corruption: `center_black` or `quarter_black`.
        center_min: Smallest `center_black` side, scaled from the image when 0.
        center_max: Largest `center_black` side, the image side when 0.
        seeds: Seeds of the repeated runs.
        out: Output directory.
        grid: Superpixel grid as `RxC`.
        background_size: Images averaged into the attribution reference.
        attribution_samples: Validation images attributed per run.
        attribution_output: `logits` or `softmax`.
        reference: `mean` or `black` attribution reference.
        mask: COCO annotation file with foreground polygons, synthetic masks
            are used when empty.
    """

    dataset: str = "synthetic"
    train_path: str = ""
    val_path: str = ""
    train_labels_path: str = ""
    val_labels_path: str = ""
    source_classes: tuple[int, ...] = (0, 1, 2, 3, 4)
    target_classes: tuple[int, ...] = (5, 6, 7, 8, 9)
    n_per_class: int = 200
    val_per_class: int = 50
    synthetic_noise: float = 0.1
    data_seed: int = 0
    image_size: int = 32
    student: str = "student"
    teacher: str = "teacher"
    freeze_backbone: bool = True
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 64
    max_epochs: int = 200
    lr_patience: int = 3
    lr_factor: float = 0.9
    early_stop_patience: int = 10
    flip_prob: float = 0.0
    temperature: float = 10.0
    alpha: float = 0.1
    train_fraction: float = 1.0
    label_noise_fraction: float = 0.0
    image_noise_train_fraction: float = 0.0
    corruption: str = "center_black"
    center_min: int = 0
    center_max: int = 0
    seeds: tuple[int, ...] = field(default=(0, 7, 42))
    out: str = "out"
    grid: str = "4x4"
    background_size: int = 100
    attribution_samples: int = 10
    attribution_output: str = "logits"
    reference: str = "mean"
    mask: str = ""

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("`seeds` must name at least one seed")
        if self.dataset not in DATASETS:
            raise ConfigError(
                f"Unknown dataset {self.dataset!r}, choose from {DATASETS}",
            )
        if self.corruption not in IMAGE_CORRUPTIONS:
            raise ConfigError(
                f"Unknown corruption {self.corruption!r},"
                f" choose from {IMAGE_CORRUPTIONS}",
            )
        if self.attribution_output not in ("logits", "softmax"):
            raise ConfigError(
                "attribution_output must be logits or softmax,"
                f" got {self.attribution_output!r}",
            )
        if self.reference not in ("mean", "black"):
            raise ConfigError(
                f"reference must be mean or black, got {self.reference!r}",
            )
        if _GRID.match(self.grid) is None:
            raise ConfigError(f"grid must look like 4x4, got {self.grid!r}")
        if not self.target_classes:
            raise ConfigError("`target_classes` must name at least one class")
        if not 0 < self.train_fraction <= 1:
            raise ConfigError(
                f"train_fraction must be in (0, 1], got {self.train_fraction}",
            )
        for name in ("label_noise_fraction", "image_noise_train_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                value = getattr(self, name)
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.dataset != "synthetic":
            required = ["train_path", "val_path"]
            if self.dataset == "idx":
                required += ["train_labels_path", "val_labels_path"]
            for key in required:
                if not getattr(self, key):
                    raise ConfigError(f"Dataset {self.dataset!r} requires `{key}`")
        for key in PATH_KEYS:
            value = getattr(self, key)
            if value and not Path(value).exists():
                raise ConfigError(f"`{key}` points to a missing file: {value}")

        try:
            self.training_config(self.seeds[0])
            self.distillation_config()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def training_config(self, seed: int) -> TrainingConfig:
        """The optimizer settings of one seed."""
        return TrainingConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            lr_patience=self.lr_patience,
            lr_factor=self.lr_factor,
            early_stop_patience=self.early_stop_patience,
            seed=seed,
            flip_prob=self.flip_prob,
        )

    def distillation_config(self) -> DistillationConfig:
        """The distillation settings."""
        return DistillationConfig(temperature=self.temperature, alpha=self.alpha)

    @property
    def side_range(self) -> tuple[int, int] | None:
        """`center_black` side range, `None` for the scaled default."""
        if self.center_min == 0 and self.center_max == 0:
            return None
        return self.center_min or 1, self.center_max or self.image_size

    def corruption_specs(self, seed: int) -> list[CorruptionSpec]:
        """Image then label corruptions of the training split of one seed."""
        specs = []
        if self.image_noise_train_fraction > 0:
            specs.append(
                CorruptionSpec(
                    kind=self.corruption,  # type: ignore[arg-type]
                    apply_fraction=self.image_noise_train_fraction,
                    side_range=self.side_range,
                    seed=seed,
                ),
            )
        if self.label_noise_fraction > 0:
            specs.append(
                CorruptionSpec(
                    kind="label_noise",
                    apply_fraction=self.label_noise_fraction,
                    seed=seed,
                ),
            )
        return specs

    @property
    def grid_shape(self) -> tuple[int, int]:
        """`(rows, cols)` of the superpixel grid."""
        match = _GRID.match(self.grid)
        assert match is not None
        return int(match.group(1)), int(match.group(2))

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """A copy with some keys replaced, `None` values are ignored.

        Raises:
            ConfigError: On an unknown key or an invalid value.
        """
        updates = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(updates) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"Unknown config keys {sorted(unknown)}")
        return replace(self, **updates)

    @classmethod
    def parse(cls, text: str) -> ExperimentConfig:
        """Parse `key = value` lines.

        Raises:
            ConfigError: On a malformed line, an unknown or repeated key, a value
                of the wrong type or a missing path.
        """
        defaults = {f.name: f.default for f in fields(cls)}
        values: dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = re.split(r"(?:^|\s)#", raw, maxsplit=1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ConfigError(f"Line {lineno}: expected `key = value`, got {raw!r}")
            if key not in defaults:
                raise ConfigError(f"Line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"Line {lineno}: {key!r} is set twice")
            values[key] = _parse_value(key, value, defaults[key])

        return cls(**values)

    @classmethod
    def from_file(cls, path: Path | str) -> ExperimentConfig:
        """Parse a config file."""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file {path} does not exist")
        config = cls.parse(path.read_text())
        logger.debug(f"Loaded config from {path}")
        return config

    def to_text(self) -> str:
        """Every key in declaration order.

        The text parses back with [`parse`][dtkd.cli.ExperimentConfig.parse].
        """
        return "".join(
            f"{key} = {_format_value(value)}\n" for key, value in asdict(self).items()
        )

    def input_paths(self) -> list[Path]:
        """The files the config reads."""
        return [Path(getattr(self, key)) for key in PATH_KEYS if getattr(self, key)]


def _parse_value(key: str, text: str, default: Any) -> Any:
    try:
        match default:
            case bool():
                if text.lower() in _TRUE:
                    return True
                if text.lower() in _FALSE:
                    return False
                raise ValueError(f"not a boolean: {text!r}")
            case int():
                return int(text)
            case float():
                return float(text)
            case tuple():
                return tuple(int(v) for v in text.split(",") if v.strip())
            case _:
                return text
    except ValueError as e:
        raise ConfigError(f"Invalid value for {key!r}: {e}") from e


def _format_value(value: Any) -> str:
    match value:
        case bool():
            return "true" if value else "false"
        case float():
            return repr(value)
        case tuple():
            return ",".join(str(v) for v in value)
        case _:
            return str(value)


def content_hash(config: ExperimentConfig, inputs: Iterable[Path] = ()) -> str:
    """sha256 over the serialized config and the bytes of every input file."""
    digest = hashlib.sha256(config.to_text().encode())
    for path in sorted(Path(p) for p in inputs):
        digest.update(str(path.name).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


@dataclass(frozen=True, kw_only=True)
class RunManifest:
    """What a run read and what it wrote.

    Attributes:
        subcommand: The subcommand that produced the run.
        run: The run name.
        config: The resolved config text.
        input_hash: [`content_hash`][dtkd.cli.config.content_hash] of config
            and inputs.
        inputs: Input files besides the config.
        outputs: Output files per seed, relative to the run directory.
    """

    subcommand: str
    run: str
    config: str
    input_hash: str
    inputs: tuple[str, ...] = ()
    outputs: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        subcommand: str,
        run: str,
        config: ExperimentConfig,
        *,
        inputs: Iterable[Path] = (),
        outputs: Mapping[str, Iterable[str]] | None = None,
    ) -> RunManifest:
        """Hash the config and every input file."""
        all_inputs = sorted({*config.input_paths(), *(Path(p) for p in inputs)})
        return cls(
            subcommand=subcommand,
            run=run,
            config=config.to_text(),
            input_hash=content_hash(config, all_inputs),
            inputs=tuple(str(p) for p in all_inputs),
            outputs={k: tuple(sorted(v)) for k, v in sorted((outputs or {}).items())},
        )

    def to_dict(self) -> dict[str, Any]:
        """A JSON-serializable representation."""
        d = asdict(self)
        d["inputs"] = list(self.inputs)
        d["outputs"] = {k: list(v) for k, v in self.outputs.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunManifest:
        """Inverse of [`to_dict`][dtkd.cli.RunManifest.to_dict]."""
        return cls(
            subcommand=d["subcommand"],
            run=d["run"],
            config=d["config"],
            input_hash=d["input_hash"],
            inputs=tuple(d["inputs"]),
            outputs={k: tuple(v) for k, v in d["outputs"].items()},
        )
