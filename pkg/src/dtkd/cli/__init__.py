from dtkd.cli.config import ExperimentConfig, RunManifest, content_hash
from dtkd.cli.executors import SequentialExecutor, make_executor, worker_count
from dtkd.cli.plots import emit_plots

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "SequentialExecutor",
    "content_hash",
    "emit_plots",
    "make_executor",
    "worker_count",
]
