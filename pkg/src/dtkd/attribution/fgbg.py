"""Foreground and background sums of per-pixel attributions.

Each row splits a per-pixel map by a segmentation mask into positive and
negative sums per region. Pairing the row of a TL model with the row of a
TL+KD model on the same sample gives the contribution ratios

* `A/B`, TL foreground difference over TL+KD foreground difference,
* `C/D`, the same for the background,
* `(A/B)/(C/D)`.

```python
from dtkd.attribution import FgBgTable, quantify_fg_bg

table = FgBgTable()
table.add(quantify_fg_bg(tl_map, mask, sample_id=3, class_name="cat", variant="tl"))
table.add(quantify_fg_bg(kd_map, mask, sample_id=3, class_name="cat", variant="tl_kd"))
table.ratios()
```
"""
from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Hashable, Iterator
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from dtkd.data.masks import SegmentationMask
from dtkd.exceptions import (
    DimMismatchError,
    MalformedCSVError,
    SampleMismatchError,
    UndefinedRatioWarning,
)
from dtkd.metrics import PairedComparison, paired_comparison

logger = logging.getLogger(__name__)

ROW_COLUMNS = (
    "sample_id",
    "class_name",
    "variant",
    "fg_pos",
    "fg_neg",
    "bg_pos",
    "bg_neg",
)

SUM_COLUMNS = ("fg_pos", "fg_neg", "fg_diff", "bg_pos", "bg_neg", "bg_diff")
COMPARED_COLUMNS = ("fg_diff", "bg_diff", "fg_pos", "bg_pos")


@dataclass(frozen=True, kw_only=True)
class FgBgRow:
    """Region sums of one attribution map.

    Attributes:
        sample_id: The image the map belongs to.
        class_name: The class the map explains.
        variant: The model variant, e.g. `tl` or `tl_kd`.
        fg_pos: Sum of positive values in the foreground, `>= 0`.
        fg_neg: Sum of negative values in the foreground, `<= 0`.
        bg_pos: Sum of positive values in the background, `>= 0`.
        bg_neg: Sum of negative values in the background, `<= 0`.
    """

    sample_id: Hashable
    class_name: str
    variant: str
    fg_pos: float
    fg_neg: float
    bg_pos: float
    bg_neg: float

    @property
    def fg_diff(self) -> float:
        """`fg_pos - |fg_neg|`."""
        return self.fg_pos + self.fg_neg

    @property
    def bg_diff(self) -> float:
        """`bg_pos - |bg_neg|`."""
        return self.bg_pos + self.bg_neg

    def to_dict(self) -> dict[str, Any]:
        """The row with its differences."""
        return {**asdict(self), "fg_diff": self.fg_diff, "bg_diff": self.bg_diff}


def quantify_fg_bg(
    pixel_map: np.ndarray,
    mask: SegmentationMask,
    *,
    sample_id: Hashable = 0,
    class_name: str = "",
    variant: str = "",
) -> FgBgRow:
    """Positive and negative sums of a `[H, W]` map inside and outside a mask.

    Any per-pixel map can be quantified, not only those from
    [`attribute`][dtkd.attribution.attribute].

    Raises:
        DimMismatchError: If the map and the mask differ in size.
        InvalidMaskError: If the mask lacks a foreground or a background.
    """
    values = np.asarray(pixel_map, dtype=np.float64)
    if values.shape != (mask.height, mask.width):
        raise DimMismatchError(
            f"Map of shape {values.shape} for a {mask.width}x{mask.height} mask",
        )
    mask.validate()

    pos = np.where(values > 0, values, 0.0)
    neg = np.where(values < 0, values, 0.0)
    fg, bg = mask.foreground, mask.background
    return FgBgRow(
        sample_id=sample_id,
        class_name=class_name,
        variant=variant,
        fg_pos=float(pos[fg].sum()),
        fg_neg=float(neg[fg].sum()),
        bg_pos=float(pos[bg].sum()),
        bg_neg=float(neg[bg].sum()),
    )


@dataclass(frozen=True, kw_only=True)
class ContributionRatios:
    """How a TL model's region differences compare with a TL+KD model's.

    Undefined ratios are `NaN` with their flag set.

    Attributes:
        sample_id: The sample both rows belong to.
        class_name: Its class.
        a: TL foreground difference.
        b: TL+KD foreground difference.
        c: TL background difference.
        d: TL+KD background difference.
        a_over_b: `A/B`.
        c_over_d: `C/D`.
        ratio: `(A/B)/(C/D)`.
        a_over_b_undefined: `B` was zero.
        c_over_d_undefined: `D` was zero.
        ratio_undefined: `C/D` was zero or either ratio was undefined.
    """

    sample_id: Hashable
    class_name: str
    a: float
    b: float
    c: float
    d: float
    a_over_b: float
    c_over_d: float
    ratio: float
    a_over_b_undefined: bool = False
    c_over_d_undefined: bool = False
    ratio_undefined: bool = False

    def to_dict(self) -> dict[str, Any]:
        """A flat representation."""
        return asdict(self)


def _ratio(num: float, den: float, what: str) -> tuple[float, bool]:
    if den == 0 or math.isnan(num) or math.isnan(den):
        warnings.warn(
            f"{what} is undefined for {num}/{den}",
            UndefinedRatioWarning,
            stacklevel=3,
        )
        return math.nan, True
    return num / den, False


def contribution_ratios(tl_row: FgBgRow, kd_row: FgBgRow) -> ContributionRatios:
    """Ratios of the region differences of a TL and a TL+KD row.

    Raises:
        SampleMismatchError: If the rows come from different samples.
    """
    if tl_row.sample_id != kd_row.sample_id:
        raise SampleMismatchError(tl_row.sample_id, kd_row.sample_id)

    a, b = tl_row.fg_diff, kd_row.fg_diff
    c, d = tl_row.bg_diff, kd_row.bg_diff
    a_over_b, ab_undefined = _ratio(a, b, "A/B")
    c_over_d, cd_undefined = _ratio(c, d, "C/D")
    ratio, ratio_undefined = _ratio(a_over_b, c_over_d, "(A/B)/(C/D)")
    return ContributionRatios(
        sample_id=tl_row.sample_id,
        class_name=tl_row.class_name,
        a=a,
        b=b,
        c=c,
        d=d,
        a_over_b=a_over_b,
        c_over_d=c_over_d,
        ratio=ratio,
        a_over_b_undefined=ab_undefined,
        c_over_d_undefined=cd_undefined,
        ratio_undefined=ratio_undefined,
    )


@dataclass
class FgBgTable:
    """Rows of two model variants over a set of samples.

    Attributes:
        rows: The quantified maps.
        baseline: Variant name of the TL model.
        improved: Variant name of the TL+KD model.
    """

    rows: list[FgBgRow] = field(default_factory=list)
    baseline: str = "tl"
    improved: str = "tl_kd"

    def add(self, row: FgBgRow) -> None:
        """Add a row."""
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[FgBgRow]:
        return iter(self.rows)

    def pairs(self) -> list[tuple[FgBgRow, FgBgRow]]:
        """`(baseline, improved)` rows per sample, in order of first appearance.

        Samples missing either variant are skipped.
        """
        by_sample: dict[Hashable, dict[str, FgBgRow]] = {}
        for row in self.rows:
            by_sample.setdefault(row.sample_id, {})[row.variant] = row

        pairs = []
        for sample_id, variants in by_sample.items():
            if self.baseline in variants and self.improved in variants:
                pairs.append((variants[self.baseline], variants[self.improved]))
            else:
                logger.warning(
                    f"Sample {sample_id!r} lacks one of the variants, skipped",
                )
        return pairs

    def ratios(self) -> list[ContributionRatios]:
        """Contribution ratios of every paired sample."""
        return [contribution_ratios(tl, kd) for tl, kd in self.pairs()]

    def df(self) -> pd.DataFrame:
        """One row per sample with both variants' sums, differences and ratios."""
        records = []
        for tl, kd in self.pairs():
            r = contribution_ratios(tl, kd)
            record: dict[str, Any] = {
                "sample_id": tl.sample_id,
                "class_name": tl.class_name,
            }
            for prefix, row in ((self.baseline, tl), (self.improved, kd)):
                for key in SUM_COLUMNS:
                    record[f"{prefix}_{key}"] = getattr(row, key)
            record.update(
                {"A/B": r.a_over_b, "C/D": r.c_over_d, "(A/B)/(C/D)": r.ratio},
            )
            records.append(record)
        return pd.DataFrame.from_records(records)

    def rows_df(self) -> pd.DataFrame:
        """The raw rows, one per map."""
        records = [asdict(row) for row in self.rows]
        return pd.DataFrame(records, columns=list(ROW_COLUMNS))

    def to_csv(self, path: Path | str) -> None:
        """Write the raw rows.

        They read back with [`from_csv`][dtkd.attribution.FgBgTable.from_csv].
        """
        self.rows_df().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_df(
        cls,
        df: pd.DataFrame,
        *,
        baseline: str = "tl",
        improved: str = "tl_kd",
    ) -> FgBgTable:
        """Rebuild a table from its raw rows.

        Raises:
            MalformedCSVError: If a column is missing.
        """
        missing = set(ROW_COLUMNS) - set(df.columns)
        if missing:
            raise MalformedCSVError(f"Missing columns {sorted(missing)}")
        rows = [
            FgBgRow(
                sample_id=rec["sample_id"],
                class_name=str(rec["class_name"]),
                variant=str(rec["variant"]),
                fg_pos=float(rec["fg_pos"]),
                fg_neg=float(rec["fg_neg"]),
                bg_pos=float(rec["bg_pos"]),
                bg_neg=float(rec["bg_neg"]),
            )
            for rec in df.to_dict(orient="records")
        ]
        return cls(rows, baseline=baseline, improved=improved)

    @classmethod
    def from_csv(cls, path: Path | str, **kwargs: str) -> FgBgTable:
        """Read raw rows written by [`to_csv`][dtkd.attribution.FgBgTable.to_csv]."""
        return cls.from_df(pd.read_csv(path), **kwargs)

    def wilcoxon(self) -> dict[str, PairedComparison]:
        """Paired signed-rank tests of the baseline against the improved variant.

        Returns:
            Tests on the foreground differences (`A` vs `B`), the background
            differences (`C` vs `D`), the foreground positives and the
            background positives.
        """
        return {attr: self.compare(attr) for attr in COMPARED_COLUMNS}

    def compare(self, attr: str) -> PairedComparison:
        """Paired signed-rank test of one column, baseline against improved.

        Raises:
            TooLongError: If more than 25 pairs differ.
            AllZeroDifferencesError: If no pair differs.
        """
        pairs = self.pairs()
        return paired_comparison(
            [getattr(tl, attr) for tl, _ in pairs],
            [getattr(kd, attr) for _, kd in pairs],
        )
