"""Frequentist comparators and instrument diagnostics.

The method-of-moments estimator solves the two instrument moment
equations for a multiplicative treatment-effect parameter; with a binary
instrument the system is exactly identified, so no weighting step is
involved and the solution coincides with the plug-in ratio wherever both
are defined.  Intervals come from a within-arm nonparametric bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .data import CellCounts, WindowedSample, cell_counts
from .errors import DataError, UnidentifiedError

PSI_BRACKET = (-20.0, 20.0)


@dataclass(frozen=True)
class GmmFit:
    """Moment-equation solution with a bootstrap percentile interval."""

    alpha0: float
    psi: float
    rrt: float
    l95: float
    u95: float
    n_boot: int
    n_failed: int
    converged: bool


@dataclass(frozen=True)
class BoundsResult:
    """Assumption-light bounds on the average causal risk difference.

    ``lower``/``upper`` are the tightest of the four closed-form
    lower/upper expressions in the joint (y, t | z) probabilities.  When
    the instrument inequality is violated the identified set is empty and
    the reported interval may be inverted; ``inequality_violated`` flags
    this.
    """

    lower: float
    upper: float
    inequality_violated: bool

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class FTestResult:
    """First-stage instrument-strength F-test (treatment on threshold arm)."""

    f: float
    df1: int
    df2: int
    p: float


def _moment_gap(psi: float, cells: CellCounts) -> float:
    """Instrument moment E_n[(Y exp(-psi T) - alpha0) Z] with alpha0 profiled out."""
    n1, n0 = cells.n(1), cells.n(0)
    n = n1 + n0
    e1 = cells.mean_y_tbar(1) + cells.mean_yt(1) * math.exp(-psi)
    e0 = cells.mean_y_tbar(0) + cells.mean_yt(0) * math.exp(-psi)
    alpha0 = (n1 * e1 + n0 * e0) / n
    return n1 / n * (e1 - alpha0)


def _solve_psi(cells: CellCounts) -> tuple[float, float]:
    lo, hi = PSI_BRACKET
    g_lo, g_hi = _moment_gap(lo, cells), _moment_gap(hi, cells)
    if g_lo == 0.0:
        psi = lo
    elif g_hi == 0.0:
        psi = hi
    elif math.copysign(1.0, g_lo) == math.copysign(1.0, g_hi):
        raise UnidentifiedError(
            f"non-identified: no root of the moment equation on psi in {PSI_BRACKET}"
        )
    else:
        psi = float(
            optimize.brentq(
                _moment_gap, lo, hi, args=(cells,), xtol=1e-14, rtol=8.9e-16
            )
        )
    n1, n0 = cells.n(1), cells.n(0)
    e_all = (
        n1 * (cells.mean_y_tbar(1) + cells.mean_yt(1) * math.exp(-psi))
        + n0 * (cells.mean_y_tbar(0) + cells.mean_yt(0) * math.exp(-psi))
    ) / (n1 + n0)
    return psi, e_all


def gmm_msmm(s: WindowedSample, b: int = 2000, seed: int = 0) -> GmmFit:
    """Method-of-moments treated risk ratio with a bootstrap interval.

    The multiplicative parameter is found by one-dimensional root finding
    of the profiled instrument moment.  The interval is the 95% percentile
    range over ``b`` bootstrap resamples of records drawn within each
    threshold arm (arm sizes preserved); resampling is implemented as
    multinomial draws over the four (y, t) cells per arm, which is
    equivalent because the moments depend on records only through those
    cells.  Replicates whose moment equation has no root are discarded
    and counted in ``n_failed``.
    """
    cells = cell_counts(s)
    if cells.mean_y_tbar(1) - cells.mean_y_tbar(0) == 0.0:
        raise UnidentifiedError("non-identified: zero denominator")
    psi, alpha0 = _solve_psi(cells)

    rng = np.random.default_rng(seed)
    n1, n0 = cells.n(1), cells.n(0)
    probs1 = cells.counts[1].reshape(-1) / n1
    probs0 = cells.counts[0].reshape(-1) / n0
    draws1 = rng.multinomial(n1, probs1, size=b)
    draws0 = rng.multinomial(n0, probs0, size=b)

    boot: list[float] = []
    n_failed = 0
    for i in range(b):
        counts = np.stack([draws0[i].reshape(2, 2), draws1[i].reshape(2, 2)])
        try:
            psi_b, _ = _solve_psi(CellCounts(counts))
        except UnidentifiedError:
            n_failed += 1
            continue
        boot.append(math.exp(psi_b))

    if boot:
        l95, u95 = np.percentile(boot, [2.5, 97.5])
    else:
        l95 = u95 = math.nan
    return GmmFit(
        alpha0=alpha0,
        psi=psi,
        rrt=math.exp(psi),
        l95=float(l95),
        u95=float(u95),
        n_boot=b,
        n_failed=n_failed,
        converged=True,
    )


def balke_pearl_bounds(s: WindowedSample) -> BoundsResult:
    """Closed-form bounds on the average causal risk difference.

    With ``p[z, y, t] = P(Y=y, T=t | Z=z)``, the treated-arm risk is
    bracketed by ``max_z p[z,1,1] <= E[Y(1)] <= min_z (1 - p[z,0,1])`` and
    the untreated-arm risk analogously, giving four lower and four upper
    expressions for the difference.  Under perfect compliance both
    collapse to the observed risk difference.
    """
    cells = cell_counts(s)
    p = np.stack([cells.proportions(0), cells.proportions(1)])  # [z, y, t]

    lower = max(p[z, 1, 1] + p[w, 0, 0] - 1.0 for z in (0, 1) for w in (0, 1))
    upper = min(1.0 - p[z, 0, 1] - p[w, 1, 0] for z in (0, 1) for w in (0, 1))

    violated = False
    for t in (0, 1):
        if max(p[0, 0, t], p[1, 0, t]) + max(p[0, 1, t], p[1, 1, t]) > 1.0 + 1e-12:
            violated = True
    return BoundsResult(lower=float(lower), upper=float(upper),
                        inequality_violated=violated)


def first_stage_f(s: WindowedSample) -> FTestResult:
    """F-test of the treatment jump at the threshold.

    Least squares of ``t`` on the threshold indicator; the F statistic is
    the squared t-ratio of the indicator coefficient with (1, n-2)
    degrees of freedom.  A perfect first stage (zero residual variance
    with a nonzero jump) reports an infinite F with p = 0.
    """
    n1, n0 = s.n1, s.n0
    n = n1 + n0
    if n < 3:
        raise DataError("need at least 3 records for the first-stage F-test")
    t1 = float(s.t[s.arm(1)].mean())
    t0 = float(s.t[s.arm(0)].mean())
    jump = t1 - t0
    rss = n1 * t1 * (1.0 - t1) + n0 * t0 * (1.0 - t0)
    df2 = n - 2
    if rss == 0.0:
        if jump == 0.0:
            return FTestResult(f=0.0, df1=1, df2=df2, p=1.0)
        return FTestResult(f=math.inf, df1=1, df2=df2, p=0.0)
    sigma2 = rss / df2
    se2 = sigma2 * (1.0 / n1 + 1.0 / n0)
    f = jump * jump / se2
    return FTestResult(f=float(f), df1=1, df2=df2, p=float(stats.f.sf(f, 1, df2)))
