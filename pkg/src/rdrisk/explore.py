"""Binned exploratory summaries of outcome and treatment around the threshold.

Produces the data behind the usual discontinuity plots: equal-width bins of
the risk score with per-bin outcome means and treatment shares, plus a
smoothing-spline curve fitted separately on each side of the threshold so
that a jump remains representable.  Output is data only; rendering is left
to external tools.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DEFAULT_THRESHOLD, Observation
from .errors import DataError
from .smoothing import fit_smoothing_spline

MIN_BINS_FOR_SPLINE = 4


@dataclass(frozen=True)
class SideCurves:
    """Spline evaluations for one side of the threshold."""

    grid: np.ndarray
    outcome: np.ndarray
    treatment: np.ndarray


@dataclass(frozen=True)
class BinnedSummary:
    """Equal-width bin summary plus optional per-side spline curves.

    Bin means are NaN for empty bins.  ``below``/``above`` are None when
    that side had fewer than 4 populated bins (see ``warnings``).
    """

    edges: np.ndarray
    mid: np.ndarray
    mean_y: np.ndarray
    mean_t: np.ndarray
    count: np.ndarray
    threshold: float
    below: SideCurves | None
    above: SideCurves | None
    warnings: tuple[str, ...]

    def to_rows(self) -> list[dict]:
        return [
            {
                "bin_mid": float(m),
                "mean_y": None if c == 0 else float(my),
                "mean_t": None if c == 0 else float(mt),
                "n": int(c),
            }
            for m, my, mt, c in zip(self.mid, self.mean_y, self.mean_t, self.count)
        ]

    def spline_payload(self) -> dict:
        def side(curves: SideCurves | None) -> dict | None:
            if curves is None:
                return None
            return {
                "grid": curves.grid.tolist(),
                "outcome": curves.outcome.tolist(),
                "treatment": curves.treatment.tolist(),
            }

        return {"below": side(self.below), "above": side(self.above)}


def explore(
    data: Sequence[Observation],
    x_range: tuple[float, float] = (0.1, 0.3),
    bins: int = 20,
    stiffness: float | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    grid_points: int = 100,
) -> BinnedSummary:
    """Bin outcome and treatment over ``x_range`` and fit per-side splines.

    Splines are fitted to the populated bin midpoints (not raw records),
    one per side of the threshold, for both the outcome mean and the
    treatment share.  A side with fewer than 4 populated bins gets no
    spline; a warning records the omission and the bin means still return.
    """
    lo, hi = float(x_range[0]), float(x_range[1])
    if not lo < hi:
        raise DataError(f"invalid x range [{lo}, {hi}]")
    if bins < 2:
        raise DataError(f"need at least 2 bins, got {bins}")
    if not lo < threshold < hi:
        raise DataError(f"range [{lo}, {hi}] must contain the threshold {threshold}")

    x = np.array([o.x for o in data], dtype=np.float64)
    t = np.array([o.t for o in data], dtype=np.float64)
    y = np.array([o.y for o in data], dtype=np.float64)
    keep = (x >= lo) & (x <= hi)
    x, t, y = x[keep], t[keep], y[keep]

    edges = np.linspace(lo, hi, bins + 1)
    width = (hi - lo) / bins
    idx = np.clip(((x - lo) / width).astype(np.int64), 0, bins - 1)

    count = np.bincount(idx, minlength=bins)
    sum_y = np.bincount(idx, weights=y, minlength=bins)
    sum_t = np.bincount(idx, weights=t, minlength=bins)
    with np.errstate(invalid="ignore"):
        mean_y = np.where(count > 0, sum_y / np.maximum(count, 1), np.nan)
        mean_t = np.where(count > 0, sum_t / np.maximum(count, 1), np.nan)
    mid = (edges[:-1] + edges[1:]) / 2.0

    warnings: list[str] = []
    sides: dict[str, SideCurves | None] = {}
    for name, side_mask, g_lo, g_hi in (
        ("below", mid < threshold, lo, threshold),
        ("above", mid >= threshold, threshold, hi),
    ):
        populated = side_mask & (count > 0)
        if populated.sum() < MIN_BINS_FOR_SPLINE:
            warnings.append(
                f"{name}: fewer than {MIN_BINS_FOR_SPLINE} populated bins; spline omitted"
            )
            sides[name] = None
            continue
        knots = mid[populated]
        grid = np.linspace(g_lo, g_hi, grid_points)
        spline_y = fit_smoothing_spline(knots, mean_y[populated], stiffness)
        spline_t = fit_smoothing_spline(knots, mean_t[populated], stiffness)
        sides[name] = SideCurves(grid=grid, outcome=spline_y(grid), treatment=spline_t(grid))

    return BinnedSummary(
        edges=edges,
        mid=mid,
        mean_y=mean_y,
        mean_t=mean_t,
        count=count,
        threshold=threshold,
        below=sides["below"],
        above=sides["above"],
        warnings=tuple(warnings),
    )
