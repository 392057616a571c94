from dtkd.metrics.confusion import (
    ClassMetrics,
    ConfusionMatrix,
    MetricsReport,
    confusion_matrix,
    metrics_from_cm,
)
from dtkd.metrics.summary import convergence_comparison, summarize_runs
from dtkd.metrics.tables import tp_change_table
from dtkd.metrics.wilcoxon import (
    PairedComparison,
    WilcoxonResult,
    null_counts,
    paired_comparison,
    wilcoxon_signed_rank_exact,
)

__all__ = [
    "ClassMetrics",
    "ConfusionMatrix",
    "MetricsReport",
    "PairedComparison",
    "WilcoxonResult",
    "confusion_matrix",
    "convergence_comparison",
    "metrics_from_cm",
    "null_counts",
    "paired_comparison",
    "summarize_runs",
    "tp_change_table",
    "wilcoxon_signed_rank_exact",
]
