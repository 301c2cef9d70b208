"""Shared builders for synthetic windowed samples."""

from __future__ import annotations

import numpy as np

from rdrisk.data import WindowedSample


def make_windowed(x_star, z, t, y, x0=0.2, h=0.1) -> WindowedSample:
    x_star = np.asarray(x_star, dtype=np.float64)
    z = np.asarray(z, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    return WindowedSample(x_star, z, t, y, y * (1 - t), x0=x0, h=h)


def sample_from_cells(counts, x0=0.2, h=0.1) -> WindowedSample:
    """Expand per-arm (y, t) cell counts into a windowed sample.

    ``counts[z][y][t]`` records; scores are spread uniformly in the arm.
    """
    counts = np.asarray(counts, dtype=np.int64)
    xs, zs, ts, ys = [], [], [], []
    for z in (0, 1):
        n_z = int(counts[z].sum())
        if n_z == 0:
            continue
        side = np.linspace(0.001, h - 0.001, n_z)
        arm_x = side if z == 1 else -side
        i = 0
        for yv in (0, 1):
            for tv in (0, 1):
                for _ in range(int(counts[z, yv, tv])):
                    xs.append(arm_x[i])
                    zs.append(z)
                    ts.append(tv)
                    ys.append(yv)
                    i += 1
    return make_windowed(xs, zs, ts, ys, x0=x0, h=h)


def two_arm_bernoulli(
    n: int,
    p_y1: float,
    p_tbar_given_y1_z1: float,
    p_y0: float,
    p_tbar_given_y1_z0: float,
    seed: int,
    h: float = 0.05,
    p_tbar_given_y0: float = 0.5,
) -> WindowedSample:
    """Per-arm outcome draws with a controlled mean of y*(1-t)."""
    rng = np.random.default_rng(seed)
    xs, zs, ts, ys = [], [], [], []
    for z, p_y, p_tbar in ((1, p_y1, p_tbar_given_y1_z1), (0, p_y0, p_tbar_given_y1_z0)):
        y = (rng.random(n) < p_y).astype(np.int64)
        p = np.where(y == 1, p_tbar, p_tbar_given_y0)
        tbar = (rng.random(n) < p).astype(np.int64)
        x = rng.uniform(0.0, h, n)
        xs.append(x if z == 1 else -x)
        zs.append(np.full(n, z, dtype=np.int64))
        ts.append(1 - tbar)
        ys.append(y)
    return make_windowed(
        np.concatenate(xs), np.concatenate(zs), np.concatenate(ts), np.concatenate(ys), h=h
    )
