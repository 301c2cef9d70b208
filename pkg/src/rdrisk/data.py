"""Data model for threshold-assigned treatment data with binary outcomes.

Records carry a continuous risk score ``x`` in [0, 1], a binary treatment
indicator ``t`` and a binary outcome ``y``.  Analysis happens inside a
bandwidth window around a decision threshold; the threshold indicator ``z``
is always derived from ``x`` (ties go above), never read from a file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, EmptyArmError, UnidentifiedError

DEFAULT_THRESHOLD = 0.2


@dataclass(frozen=True)
class Observation:
    """One record: risk score ``x`` in [0, 1], treatment ``t``, outcome ``y``."""

    x: float
    t: int
    y: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.x) or not 0.0 <= self.x <= 1.0:
            raise DataError(f"x must be a finite number in [0,1], got {self.x!r}")
        if self.t not in (0, 1):
            raise DataError(f"t must be 0/1, got {self.t!r}")
        if self.y not in (0, 1):
            raise DataError(f"y must be 0/1, got {self.y!r}")


@dataclass(frozen=True)
class Window:
    """Analysis window ``[x0 - h, x0 + h]`` around the threshold ``x0``.

    Windows reaching outside [0, 1] are rejected rather than clamped.
    """

    h: float
    x0: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if not (math.isfinite(self.h) and self.h > 0.0):
            raise DataError(f"bandwidth h must be > 0, got {self.h!r}")
        if self.x0 - self.h < 0.0 or self.x0 + self.h > 1.0:
            raise DataError(
                f"window [{self.x0 - self.h}, {self.x0 + self.h}] falls outside [0,1]"
            )


@dataclass(frozen=True)
class WindowedSample:
    """Threshold-centered records retained by a bandwidth window.

    Arrays are aligned per record: ``x_star`` is the score minus the
    threshold, ``z`` the threshold indicator (1 iff the original score was
    at or above the threshold), ``y_tbar`` equals ``y * (1 - t)``.
    """

    x_star: np.ndarray
    z: np.ndarray
    t: np.ndarray
    y: np.ndarray
    y_tbar: np.ndarray
    x0: float
    h: float

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def n0(self) -> int:
        return int(self.z.size - self.z.sum())

    def arm(self, z: int) -> np.ndarray:
        """Boolean mask of records in threshold arm ``z``."""
        return self.z == z

    def to_observations(self) -> list[Observation]:
        """Reconstruct plain observations (x = x0 + x_star)."""
        return [
            Observation(float(self.x0 + xs), int(t), int(y))
            for xs, t, y in zip(self.x_star, self.t, self.y)
        ]


@dataclass(frozen=True)
class CellCounts:
    """Per-arm counts of the four (y, t) cells.

    ``counts[z, y, t]`` holds the number of records with that combination
    in threshold arm ``z``.
    """

    counts: np.ndarray  # shape (2, 2, 2), int64

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.shape != (2, 2, 2) or (c < 0).any():
            raise DataError("counts must be a non-negative (2,2,2) array")

    def n(self, z: int) -> int:
        return int(self.counts[z].sum())

    def mean_y(self, z: int) -> float:
        return float(self.counts[z, 1, :].sum() / self.n(z))

    def mean_t(self, z: int) -> float:
        return float(self.counts[z, :, 1].sum() / self.n(z))

    def mean_y_tbar(self, z: int) -> float:
        return float(self.counts[z, 1, 0] / self.n(z))

    def mean_yt(self, z: int) -> float:
        return float(self.counts[z, 1, 1] / self.n(z))

    def proportions(self, z: int) -> np.ndarray:
        """Joint cell proportions P(Y=y, T=t | Z=z) as a (2,2) array."""
        return self.counts[z] / self.n(z)


def load_dataset(
    source: str | Path | IO[str],
    columns: Mapping[str, str] | None = None,
    delimiter: str = ",",
) -> list[Observation]:
    """Read observations from delimited text with a header row.

    ``columns`` remaps the required logical fields ``x``, ``t``, ``y`` to
    file column names.  Rows are validated one by one; errors name the
    offending data row (1-based, header excluded) and column.
    """
    colmap = {"x": "x", "t": "t", "y": "y"}
    if columns:
        colmap.update(columns)

    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as handle:
            return _parse_rows(handle, colmap, delimiter)
    return _parse_rows(source, colmap, delimiter)


def _parse_rows(
    handle: Iterable[str], colmap: Mapping[str, str], delimiter: str
) -> list[Observation]:
    reader = csv.DictReader(handle, delimiter=delimiter)
    if reader.fieldnames is None:
        raise DataError("no observations")
    missing = [name for name in colmap.values() if name not in reader.fieldnames]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")

    out: list[Observation] = []
    for i, row in enumerate(reader, start=1):
        xc, tc, yc = colmap["x"], colmap["t"], colmap["y"]
        raw_x = (row.get(xc) or "").strip()
        try:
            x = float(raw_x)
        except ValueError:
            raise DataError(f"row {i}: {xc} must be a number, got {raw_x!r}") from None
        if not math.isfinite(x) or not 0.0 <= x <= 1.0:
            raise DataError(f"row {i}: {xc} must be in [0,1], got {raw_x!r}")
        t = _parse_binary(row.get(tc), i, tc)
        y = _parse_binary(row.get(yc), i, yc)
        out.append(Observation(x, t, y))
    if not out:
        raise DataError("no observations")
    return out


def _parse_binary(raw: str | None, row: int, col: str) -> int:
    value = (raw or "").strip()
    if value not in ("0", "1"):
        raise DataError(f"row {row}: {col} must be 0/1, got {value!r}")
    return int(value)


def window(data: Sequence[Observation], w: Window) -> WindowedSample:
    """Retain records with ``|x - x0| <= h``, centered at the threshold.

    The threshold indicator puts ties above: ``z = 1`` iff ``x >= x0``.
    Raises :class:`EmptyArmError` when either arm ends up empty, since no
    downstream estimator is defined in that case.
    """
    x = np.array([o.x for o in data], dtype=np.float64)
    t = np.array([o.t for o in data], dtype=np.int64)
    y = np.array([o.y for o in data], dtype=np.int64)

    keep = np.abs(x - w.x0) <= w.h
    x, t, y = x[keep], t[keep], y[keep]
    z = (x >= w.x0).astype(np.int64)
    if z.size == 0 or z.sum() == 0 or z.sum() == z.size:
        raise EmptyArmError("empty arm")

    arrays = (x - w.x0, z, t, y, y * (1 - t))
    for arr in arrays:
        arr.setflags(write=False)
    return WindowedSample(*arrays, x0=w.x0, h=w.h)


def cell_counts(sample: WindowedSample) -> CellCounts:
    """Tabulate the four (y, t) cells in each threshold arm."""
    counts = np.zeros((2, 2, 2), dtype=np.int64)
    for z in (0, 1):
        mask = sample.arm(z)
        for yv in (0, 1):
            for tv in (0, 1):
                counts[z, yv, tv] = int(
                    ((sample.y[mask] == yv) & (sample.t[mask] == tv)).sum()
                )
    return CellCounts(counts)


def plug_in_rrt(cells: CellCounts) -> float:
    """Plug-in risk ratio for the treated from arm-level sample means.

    Computes ``1 - [E(Y|Z=1) - E(Y|Z=0)] / [E(YT̄|Z=1) - E(YT̄|Z=0)]``.
    The value is returned as-is even when non-positive; negativity is a
    documented pathology of this estimand, not an error.
    """
    delta = cells.mean_y_tbar(1) - cells.mean_y_tbar(0)
    if delta == 0.0:
        raise UnidentifiedError("unidentified: zero denominator")
    return 1.0 - (cells.mean_y(1) - cells.mean_y(0)) / delta
