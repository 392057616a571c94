from dtkd.attribution.fgbg import (
    ContributionRatios,
    FgBgRow,
    FgBgTable,
    contribution_ratios,
    quantify_fg_bg,
)
from dtkd.attribution.games import (
    background_expected_value,
    model_game,
    model_games,
    model_outputs,
    reference_image,
)
from dtkd.attribution.partition import MAX_PLAYERS, SuperpixelPartition, grid_partition
from dtkd.attribution.report import AttributionReport, attribute
from dtkd.attribution.shapley import (
    CoalitionGame,
    coalition_sizes,
    exact_shapley,
    monte_carlo_shapley,
)

__all__ = [
    "MAX_PLAYERS",
    "AttributionReport",
    "CoalitionGame",
    "ContributionRatios",
    "FgBgRow",
    "FgBgTable",
    "SuperpixelPartition",
    "attribute",
    "background_expected_value",
    "coalition_sizes",
    "contribution_ratios",
    "exact_shapley",
    "grid_partition",
    "model_game",
    "model_games",
    "model_outputs",
    "monte_carlo_shapley",
    "quantify_fg_bg",
    "reference_image",
]
