"""Confusion counting against ground truth and the seven-metric report:
recall, specificity, FPR, FNR, PWC, precision, F-measure.

Pixels labeled unknown-motion or outside the region of interest never enter
the counts. Ratios with a zero denominator are carried as explicit
"undefined" (None) values and rendered as NaN, not silently zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .depth_io import GtLabel

METRIC_ORDER = ("recall", "specificity", "fpr", "fnr", "pwc", "precision", "f_measure")
TABLE_HEADERS = ("Recall", "Specificity", "FPR", "FNR", "PWC", "Precision", "F-Measure")


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricReport:
    recall: Optional[float]
    specificity: Optional[float]
    fpr: Optional[float]
    fnr: Optional[float]
    pwc: Optional[float]
    precision: Optional[float]
    f_measure: Optional[float]


def accumulate(
    mask: np.ndarray, gt: np.ndarray, roi: Optional[np.ndarray] = None
) -> ConfusionCounts:
    """Count TP/FP/FN/TN for one predicted mask against decoded ground truth.

    Shadow pixels score as background truth. Unknown and outside-ROI pixels
    (and pixels excluded by the optional ROI mask) are skipped entirely.
    """
    if mask.shape != gt.shape:
        raise ValueError(f"mask {mask.shape} and ground truth {gt.shape} differ in size")
    scored = (gt != int(GtLabel.UNKNOWN)) & (gt != int(GtLabel.OUTSIDE_ROI))
    if roi is not None:
        if roi.shape != gt.shape:
            raise ValueError(f"ROI {roi.shape} and ground truth {gt.shape} differ in size")
        scored &= roi
    truth_fg = gt == int(GtLabel.FOREGROUND)
    pred = np.asarray(mask, dtype=bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(scored & pred & truth_fg)),
        fp=int(np.count_nonzero(scored & pred & ~truth_fg)),
        fn=int(np.count_nonzero(scored & ~pred & truth_fg)),
        tn=int(np.count_nonzero(scored & ~pred & ~truth_fg)),
    )


def _ratio(num: float, den: float) -> Optional[float]:
    return None if den == 0 else num / den


def compute_metrics(c: ConfusionCounts) -> MetricReport:
    """Derive the seven standard change-detection metrics from raw counts."""
    recall = _ratio(c.tp, c.tp + c.fn)
    precision = _ratio(c.tp, c.tp + c.fp)
    if precision is None or recall is None:
        f_measure = None
    else:
        f_measure = _ratio(2.0 * precision * recall, precision + recall)
    return MetricReport(
        recall=recall,
        specificity=_ratio(c.tn, c.tn + c.fp),
        fpr=_ratio(c.fp, c.fp + c.tn),
        fnr=_ratio(c.fn, c.tp + c.fn),
        pwc=_ratio(100.0 * (c.fn + c.fp), c.total),
        precision=precision,
        f_measure=f_measure,
    )


def average_reports(
    reports: list[MetricReport],
) -> tuple[MetricReport, dict[str, int]]:
    """Unweighted per-metric mean, skipping undefined entries.

    Returns the averaged report and, per metric, how many reports actually
    contributed.
    """
    if not reports:
        raise ValueError("cannot average an empty report list")
    values: dict[str, Optional[float]] = {}
    contributors: dict[str, int] = {}
    for name in METRIC_ORDER:
        defined = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        contributors[name] = len(defined)
        values[name] = sum(defined) / len(defined) if defined else None
    return MetricReport(**values), contributors


def _fmt(value: Optional[float]) -> str:
    return "NaN" if value is None else f"{value:.4f}"


def reports_to_csv(rows: list[tuple[str, MetricReport]]) -> str:
    lines = ["video," + ",".join(METRIC_ORDER)]
    for name, report in rows:
        cells = [_fmt(getattr(report, m)) for m in METRIC_ORDER]
        lines.append(name + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


def reports_to_table(rows: list[tuple[str, MetricReport]]) -> str:
    """Aligned plain-text table in the conventional column order."""
    name_width = max(len("Video"), *(len(name) for name, _ in rows))
    col = 12
    header = "Video".ljust(name_width) + "".join(h.rjust(col) for h in TABLE_HEADERS)
    lines = [header, "-" * len(header)]
    for name, report in rows:
        cells = "".join(_fmt(getattr(report, m)).rjust(col) for m in METRIC_ORDER)
        lines.append(name.ljust(name_width) + cells)
    return "\n".join(lines) + "\n"
