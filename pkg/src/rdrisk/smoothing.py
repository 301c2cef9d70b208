"""Natural cubic smoothing spline with a generalized cross-validation default.

Fits the penalized least-squares curve minimizing

    sum_i (y_i - g(x_i))^2 + lam * integral g''(u)^2 du

whose minimizer is a natural cubic spline with knots at the data points.
The linear algebra is dense, which is fine for the binned-means use case
(tens of knots).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

_GCV_GRID = np.logspace(-10.0, 10.0, 81)


@dataclass(frozen=True)
class SmoothingSpline:
    """Fitted natural cubic spline: knot values plus second derivatives.

    Evaluation follows the standard piecewise-cubic form; outside the knot
    range the curve continues linearly (zero second derivative at the ends).
    """

    knots: np.ndarray
    values: np.ndarray
    second_derivs: np.ndarray  # includes the zero end conditions
    lam: float

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        t, g, gamma = self.knots, self.values, self.second_derivs
        h = np.diff(t)
        idx = np.clip(np.searchsorted(t, x, side="right") - 1, 0, t.size - 2)
        lo, hi = t[idx], t[idx + 1]
        hd = h[idx]
        below = x < t[0]
        above = x > t[-1]

        a = (hi - x) / hd
        b = (x - lo) / hd
        out = (
            a * g[idx]
            + b * g[idx + 1]
            - (x - lo) * (hi - x) / 6.0
            * ((1.0 + a) * gamma[idx] + (1.0 + b) * gamma[idx + 1])
        )
        # linear continuation past the boundary knots
        slope_lo = (g[1] - g[0]) / h[0] - h[0] * gamma[1] / 6.0
        slope_hi = (g[-1] - g[-2]) / h[-1] + h[-1] * gamma[-2] / 6.0
        out = np.where(below, g[0] + (x - t[0]) * slope_lo, out)
        out = np.where(above, g[-1] + (x - t[-1]) * slope_hi, out)
        return out


def _band_matrices(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Difference matrix Q (n x n-2) and penalty core R (n-2 x n-2)."""
    n = t.size
    h = np.diff(t)
    q = np.zeros((n, n - 2))
    r = np.zeros((n - 2, n - 2))
    for j in range(1, n - 1):
        k = j - 1
        q[j - 1, k] = 1.0 / h[j - 1]
        q[j, k] = -(1.0 / h[j - 1] + 1.0 / h[j])
        q[j + 1, k] = 1.0 / h[j]
        r[k, k] = (h[j - 1] + h[j]) / 3.0
        if k + 1 < n - 2:
            r[k, k + 1] = r[k + 1, k] = h[j] / 6.0
    return q, r


def fit_smoothing_spline(
    x: np.ndarray, y: np.ndarray, stiffness: float | None = None
) -> SmoothingSpline:
    """Fit the spline; ``stiffness`` is the penalty weight, GCV-chosen if None.

    Requires at least 4 strictly increasing knots.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.size != y.size:
        raise DataError("x and y must be 1-d arrays of equal length")
    if x.size < 4:
        raise DataError(f"need at least 4 points to fit a spline, got {x.size}")
    if not (np.diff(x) > 0).all():
        raise DataError("knots must be strictly increasing")

    n = x.size
    q, r = _band_matrices(x)
    k = q @ np.linalg.solve(r, q.T)
    # eigendecomposition of the symmetric PSD penalty keeps the smoother
    # well conditioned for arbitrarily large stiffness
    eigenvalues, eigenvectors = np.linalg.eigh((k + k.T) / 2.0)
    # the two-dimensional null space (linear functions) must survive any
    # stiffness exactly, so zero out numerically-null eigenvalues
    tolerance = eigenvalues.max() * 1e-12
    eigenvalues = np.where(eigenvalues < tolerance, 0.0, eigenvalues)
    y_rotated = eigenvectors.T @ y

    def solve(lam: float) -> tuple[np.ndarray, float]:
        shrink = 1.0 / (1.0 + lam * eigenvalues)
        g = eigenvectors @ (shrink * y_rotated)
        return g, float(shrink.sum())

    if stiffness is None:
        # grid scaled by spacing^3, the natural magnitude of the penalty
        scale = float(np.diff(x).mean()) ** 3
        best_lam, best_gcv = scale * _GCV_GRID[0], np.inf
        for lam in scale * _GCV_GRID:
            g, tr_a = solve(float(lam))
            denominator = n - tr_a
            if denominator <= 1e-10:
                continue
            gcv = n * float(((y - g) ** 2).sum()) / denominator**2
            if gcv < best_gcv:
                best_gcv, best_lam = gcv, float(lam)
        lam = float(best_lam)
    else:
        if not stiffness > 0:
            raise DataError(f"stiffness must be > 0, got {stiffness!r}")
        lam = float(stiffness)

    g, _ = solve(lam)
    gamma_interior = np.linalg.solve(r, q.T @ g)
    gamma = np.zeros(n)
    gamma[1:-1] = gamma_interior
    return SmoothingSpline(knots=x.copy(), values=g, second_derivs=gamma, lam=lam)
