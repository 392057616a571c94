from dtkd import options
from dtkd.__version__ import version
from dtkd.attribution import (
    AttributionReport,
    CoalitionGame,
    FgBgTable,
    attribute,
    exact_shapley,
    grid_partition,
    quantify_fg_bg,
)
from dtkd.autodiff import Tensor, backward, gradcheck
from dtkd.data import CorruptionSpec, ImageDataset, make_synthetic_dataset, prepare
from dtkd.losses import DistillationConfig, kd_combined_loss
from dtkd.metrics import (
    ConfusionMatrix,
    MetricsReport,
    tp_change_table,
    wilcoxon_signed_rank_exact,
)
from dtkd.nn import Checkpoint, Model, build_student, build_teacher
from dtkd.store import Drop, PathBucket
from dtkd.training import TrainingConfig, TrainingHistory, train_tl, train_tl_kd

__all__ = [
    "AttributionReport",
    "Checkpoint",
    "CoalitionGame",
    "ConfusionMatrix",
    "CorruptionSpec",
    "DistillationConfig",
    "Drop",
    "FgBgTable",
    "ImageDataset",
    "MetricsReport",
    "Model",
    "PathBucket",
    "Tensor",
    "TrainingConfig",
    "TrainingHistory",
    "attribute",
    "backward",
    "build_student",
    "build_teacher",
    "exact_shapley",
    "gradcheck",
    "grid_partition",
    "kd_combined_loss",
    "make_synthetic_dataset",
    "options",
    "prepare",
    "quantify_fg_bg",
    "tp_change_table",
    "train_tl",
    "train_tl_kd",
    "version",
    "wilcoxon_signed_rank_exact",
]
