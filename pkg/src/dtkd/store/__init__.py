from dtkd.store.bucket import DEFAULT_LOADERS, Drop, PathBucket
from dtkd.store.loaders import (
    CheckpointLoader,
    CSVLoader,
    JSONLoader,
    PathLoader,
    PPMLoader,
    TxtLoader,
)

__all__ = [
    "DEFAULT_LOADERS",
    "CSVLoader",
    "CheckpointLoader",
    "Drop",
    "JSONLoader",
    "PPMLoader",
    "PathBucket",
    "PathLoader",
    "TxtLoader",
]
