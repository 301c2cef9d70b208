import io

import numpy as np
import pytest

from rdrisk.data import (
    CellCounts,
    Observation,
    Window,
    cell_counts,
    load_dataset,
    plug_in_rrt,
    window,
)
from rdrisk.errors import DataError, EmptyArmError, UnidentifiedError


def test_load_basic_order_preserved():
    obs = load_dataset(io.StringIO("x,t,y\n0.21,1,0\n0.18,0,1\n"))
    assert obs == [Observation(0.21, 1, 0), Observation(0.18, 0, 1)]


def test_load_bad_treatment_names_row_and_column():
    stream = io.StringIO("x,t,y\n0.2,1,0\n0.3,0,1\n0.4,2,0\n")
    with pytest.raises(DataError, match=r"row 3: t must be 0/1"):
        load_dataset(stream)


def test_load_empty_body():
    with pytest.raises(DataError, match="no observations"):
        load_dataset(io.StringIO("x,t,y\n"))
    with pytest.raises(DataError, match="no observations"):
        load_dataset(io.StringIO(""))


def test_load_missing_column():
    with pytest.raises(DataError, match="missing column"):
        load_dataset(io.StringIO("x,treat,y\n0.2,1,0\n"))


def test_load_x_out_of_range():
    with pytest.raises(DataError, match=r"row 1: x must be in \[0,1\]"):
        load_dataset(io.StringIO("x,t,y\n1.2,1,0\n"))
    with pytest.raises(DataError, match="row 2: x must be a number"):
        load_dataset(io.StringIO("x,t,y\n0.5,1,0\noops,1,0\n"))


def test_load_remapped_columns():
    stream = io.StringIO("score;rx;goal\n0.25;1;1\n")
    obs = load_dataset(
        stream, columns={"x": "score", "t": "rx", "y": "goal"}, delimiter=";"
    )
    assert obs == [Observation(0.25, 1, 1)]


def test_observation_validation():
    with pytest.raises(DataError):
        Observation(1.5, 0, 0)
    with pytest.raises(DataError):
        Observation(float("nan"), 0, 0)
    with pytest.raises(DataError):
        Observation(0.5, 2, 0)
    with pytest.raises(DataError):
        Observation(0.5, 0, -1)


def test_window_tie_goes_above():
    obs = [Observation(0.2, 1, 0), Observation(0.19, 0, 0)]
    ws = window(obs, Window(h=0.05))
    assert ws.z[np.isclose(ws.x_star, 0.0)] == 1


def test_window_bandwidth_boundary():
    # |x - x0| <= h is inclusive; points just outside drop
    obs = [
        Observation(0.176, 0, 0),  # inside: |0.176-0.2| = 0.024
        Observation(0.174, 0, 0),  # outside: 0.026 > 0.025
        Observation(0.22, 1, 0),
    ]
    ws = window(obs, Window(h=0.025))
    assert ws.n == 2
    assert ws.n1 + ws.n0 == 2


def test_window_empty_arm():
    obs = [Observation(0.21, 1, 0), Observation(0.22, 0, 1)]
    with pytest.raises(EmptyArmError, match="empty arm"):
        window(obs, Window(h=0.05))


def test_window_rejects_invalid():
    with pytest.raises(DataError):
        Window(h=0.0)
    with pytest.raises(DataError):
        Window(h=-0.1)
    with pytest.raises(DataError):
        Window(h=0.3)  # 0.2 - 0.3 < 0: clamping is rejected, not applied


def test_window_idempotent():
    rng = np.random.default_rng(7)
    for _ in range(25):
        obs = [
            Observation(float(x), int(t), int(y))
            for x, t, y in zip(
                rng.uniform(0.0, 0.5, 200), rng.integers(0, 2, 200), rng.integers(0, 2, 200)
            )
        ]
        w = Window(h=0.08)
        first = window(obs, w)
        again = window(first.to_observations(), w)
        assert np.allclose(first.x_star, again.x_star)
        assert np.array_equal(first.z, again.z)
        assert np.array_equal(first.t, again.t)
        assert np.array_equal(first.y, again.y)
        assert first.n1 + first.n0 == first.n


def test_cell_counts_sums_and_means_match_direct_averages():
    rng = np.random.default_rng(11)
    for _ in range(20):
        obs = [
            Observation(float(x), int(t), int(y))
            for x, t, y in zip(
                rng.uniform(0.1, 0.3, 300), rng.integers(0, 2, 300), rng.integers(0, 2, 300)
            )
        ]
        ws = window(obs, Window(h=0.1))
        cells = cell_counts(ws)
        for z in (0, 1):
            mask = ws.arm(z)
            assert cells.n(z) == int(mask.sum())
            assert cells.counts[z].sum() == cells.n(z)
            assert cells.mean_y(z) == pytest.approx(ws.y[mask].mean(), abs=1e-15)
            assert cells.mean_t(z) == pytest.approx(ws.t[mask].mean(), abs=1e-15)
            assert cells.mean_y_tbar(z) == pytest.approx(
                ws.y_tbar[mask].mean(), abs=1e-15
            )
            assert cells.mean_yt(z) == pytest.approx(
                (ws.y[mask] * ws.t[mask]).mean(), abs=1e-15
            )
            assert 0.0 <= cells.mean_y(z) <= 1.0


def test_plug_in_worked_example():
    # E(Y|1)=0.3, E(Y|0)=0.2, E(YT̄|1)=0.05, E(YT̄|0)=0.15 -> 1 - 0.1/(-0.1) = 2
    counts = np.zeros((2, 2, 2), dtype=np.int64)
    counts[1, 1, 0], counts[1, 1, 1] = 1, 5  # arm 1: 6/20 y=1, 1/20 y=1&t=0
    counts[1, 0, 0] = 14
    counts[0, 1, 0], counts[0, 1, 1] = 3, 1  # arm 0: 4/20 y=1, 3/20 y=1&t=0
    counts[0, 0, 0] = 16
    cells = CellCounts(counts)
    assert cells.mean_y(1) == 0.3 and cells.mean_y_tbar(1) == 0.05
    assert cells.mean_y(0) == 0.2 and cells.mean_y_tbar(0) == 0.15
    assert plug_in_rrt(cells) == pytest.approx(2.0, abs=1e-12)


def test_plug_in_null_effect_identity():
    counts = np.zeros((2, 2, 2), dtype=np.int64)
    counts[1, 1, 0], counts[1, 1, 1], counts[1, 0, 0] = 2, 2, 6
    counts[0, 1, 0], counts[0, 1, 1], counts[0, 0, 0] = 3, 1, 6
    cells = CellCounts(counts)
    assert cells.mean_y(1) == cells.mean_y(0)
    assert plug_in_rrt(cells) == pytest.approx(1.0, abs=1e-12)


def test_plug_in_negative_returned_as_is():
    # E(Y|1)=0.4, E(Y|0)=0.1, E(YT̄|1)=0.2, E(YT̄|0)=0.1 -> 1 - 0.3/0.1 = -2
    counts = np.zeros((2, 2, 2), dtype=np.int64)
    counts[1, 1, 0], counts[1, 1, 1], counts[1, 0, 0] = 2, 2, 6
    counts[0, 1, 0], counts[0, 0, 0] = 1, 9
    cells = CellCounts(counts)
    assert plug_in_rrt(cells) == pytest.approx(-2.0, abs=1e-12)


def test_plug_in_zero_denominator():
    counts = np.zeros((2, 2, 2), dtype=np.int64)
    counts[1, 1, 0], counts[1, 0, 0] = 2, 8
    counts[0, 1, 0], counts[0, 0, 0] = 2, 8
    with pytest.raises(UnidentifiedError, match="zero denominator"):
        plug_in_rrt(CellCounts(counts))


def test_plug_in_algebraic_identity():
    # 1 - (dYT + dYT̄)/dYT̄ == -dYT/dYT̄ on random cells
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 1000:
        counts = rng.integers(0, 30, size=(2, 2, 2))
        if counts[0].sum() == 0 or counts[1].sum() == 0:
            continue
        cells = CellCounts(counts)
        d_ytbar = cells.mean_y_tbar(1) - cells.mean_y_tbar(0)
        if d_ytbar == 0.0:
            continue
        d_yt = cells.mean_yt(1) - cells.mean_yt(0)
        assert plug_in_rrt(cells) == pytest.approx(-d_yt / d_ytbar, abs=1e-12)
        checked += 1


def test_sharp_design_reduces_to_risk_ratio():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 200:
        n = 120
        z = rng.integers(0, 2, n)
        if z.sum() in (0, n):
            continue
        y = rng.integers(0, 2, n)
        x = np.where(z == 1, rng.uniform(0.2, 0.28, n), rng.uniform(0.12, 0.199, n))
        obs = [Observation(float(a), int(b), int(c)) for a, b, c in zip(x, z, y)]
        ws = window(obs, Window(h=0.08))
        cells = cell_counts(ws)
        if cells.mean_y(0) == 0.0 or cells.mean_y_tbar(1) - cells.mean_y_tbar(0) == 0.0:
            continue
        assert plug_in_rrt(cells) == pytest.approx(
            cells.mean_y(1) / cells.mean_y(0), abs=1e-12
        )
        checked += 1
