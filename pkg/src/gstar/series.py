"""Spatio-temporal observation matrices and per-location regression designs.

Time ranges throughout the package are 0-based half-open ``(start, stop)``
pairs over the column index of ``values``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AllFilteredError, ConstantSeriesError, WindowTooShortError
from .weights import NeighborhoodWeights

__all__ = [
    "SpatioTemporalSeries",
    "StandardizationStats",
    "ModelOrder",
    "DesignPair",
    "standardize",
    "apply_stats",
    "filter_active_locations",
    "build_design",
    "design_tensor",
    "read_series_csv",
    "write_series_csv",
    "fmt_float",
]


def mix(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``A @ X`` summed over the shared index in a fixed order.

    BLAS and ``einsum`` kernels may round differently depending on the memory
    alignment of their operands; accumulating one term at a time keeps
    repeated runs bit-identical.
    """
    out = np.zeros(A.shape[:-1] + X.shape[1:])
    for j in range(A.shape[-1]):
        term = A[..., j]
        out += term[..., None] * X[j] if X.ndim > 1 else term * X[j]
    return out


def rowdot(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product as a row-local reduction (alignment independent)."""
    return np.sum(A * x[..., None, :], axis=-1)


def fmt_float(x: float) -> str:
    """17 significant digits: enough for an exact float round trip."""
    return format(float(x), ".17g")


def _check_range(fit_range, T):
    start, stop = (0, T) if fit_range is None else fit_range
    if not 0 <= start < stop <= T:
        raise ValueError(f"time range {fit_range} outside [0, {T})")
    return int(start), int(stop)


@dataclass(frozen=True)
class SpatioTemporalSeries:
    """``k`` locations observed at ``T`` evenly spaced times.

    ``values[i, t]`` is the observation at location ``i`` and time ``t``.
    ``times`` is either an integer index or ``datetime64`` stamps.
    """

    locations: tuple[str, ...]
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        times = np.asarray(self.times)
        if values.ndim != 2:
            raise ValueError("values must be a k x T matrix")
        if values.shape != (len(self.locations), len(times)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(self.locations)} locations x {len(times)} times"
            )
        if len(set(self.locations)) != len(self.locations):
            raise ValueError("location ids must be unique")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if len(times) > 1:
            steps = np.diff(times)
            if not np.all(steps > steps[0] * 0) or not np.all(steps == steps[0]):
                raise ValueError("times must be strictly increasing and evenly spaced")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "locations", tuple(str(x) for x in self.locations))

    @classmethod
    def from_array(cls, values, locations: Sequence[str] | None = None) -> "SpatioTemporalSeries":
        values = np.asarray(values, dtype=float)
        if locations is None:
            locations = [f"L{i}" for i in range(values.shape[0])]
        return cls(tuple(locations), np.arange(values.shape[1]), values)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def select(self, locations: Sequence[str]) -> "SpatioTemporalSeries":
        idx = {loc: i for i, loc in enumerate(self.locations)}
        rows = [idx[loc] for loc in locations]
        return SpatioTemporalSeries(tuple(locations), self.times, self.values[rows])

    def with_values(self, values) -> "SpatioTemporalSeries":
        return SpatioTemporalSeries(self.locations, self.times, values)


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        for name in ("mean", "std"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values) - self.mean[:, None]) / self.std[:, None]

    def invert(self, values: np.ndarray) -> np.ndarray:
        """Map standardized values back to the original scale."""
        return np.asarray(values) * self.std[:, None] + self.mean[:, None]


@dataclass(frozen=True)
class ModelOrder:
    """Maximum time lag ``p`` and number of neighborhood levels ``eta``."""

    p: int = 1
    eta: int = 1

    def __post_init__(self):
        if self.p < 1 or self.eta < 1:
            raise ValueError(f"need p >= 1 and eta >= 1, got p={self.p}, eta={self.eta}")

    @property
    def n_coef(self) -> int:
        return self.p * self.eta

    def position(self, lag: int, level: int) -> int:
        """0-based coefficient slot of (lag ``j`` >= 1, level ``l`` >= 0)."""
        return (lag - 1) * self.eta + level


@dataclass(frozen=True)
class DesignPair:
    """Response ``y`` and regressors ``Z`` of one location.

    Row ``r`` corresponds to time ``rows[r]``; column ``(j-1)*eta + l`` holds
    ``W^(l)[i] @ Y(t-j)``.
    """

    Z: np.ndarray
    y: np.ndarray
    location: int
    rows: range


def standardize(series: SpatioTemporalSeries, stats_window=None):
    """Center and scale each location by its sample mean and std.

    Parameters
    ----------
    series : SpatioTemporalSeries
    stats_window : (start, stop), optional
        Columns used to compute the statistics; defaults to the whole series.
        The transform is applied to every column regardless.

    Returns
    -------
    (SpatioTemporalSeries, StandardizationStats)
    """
    start, stop = _check_range(stats_window, series.T)
    window = series.values[:, start:stop]
    if stop - start < 2:
        raise ValueError("need at least two time points to estimate a standard deviation")
    mean = window.mean(axis=1)
    std = window.std(axis=1, ddof=1)
    for i, s in enumerate(std):
        if not s > 0:
            raise ConstantSeriesError(series.locations[i])
    stats = StandardizationStats(mean, std)
    return series.with_values(stats.apply(series.values)), stats


def apply_stats(series: SpatioTemporalSeries, stats: StandardizationStats) -> SpatioTemporalSeries:
    return series.with_values(stats.apply(series.values))


def filter_active_locations(series: SpatioTemporalSeries, min_nonzero: int) -> SpatioTemporalSeries:
    """Drop locations with fewer than ``min_nonzero`` nonzero observations."""
    counts = np.count_nonzero(series.values, axis=1)
    keep = [loc for loc, c in zip(series.locations, counts) if c >= min_nonzero]
    if not keep:
        raise AllFilteredError(f"no location has >= {min_nonzero} nonzero observations")
    return series.select(keep)


def design_tensor(values: np.ndarray, W: NeighborhoodWeights, order: ModelOrder, fit_range=None):
    """Stacked designs of all locations.

    Returns ``Z`` of shape ``(k, n - p, eta * p)`` and ``Y`` of shape
    ``(k, n - p)`` where ``n`` is the length of ``fit_range``. Only columns
    inside ``fit_range`` are read.
    """
    values = np.asarray(values, dtype=float)
    k, T = values.shape
    start, stop = _check_range(fit_range, T)
    p, eta = order.p, order.eta
    n = stop - start
    if n <= p:
        raise WindowTooShortError(f"window of length {n} cannot support lag order {p}")
    if W.eta < eta or W.k != k:
        raise ValueError(f"weights (eta={W.eta}, k={W.k}) incompatible with order eta={eta}, k={k}")
    window = values[:, start:stop]
    spatial = mix(W.mats[:eta], window)  # (eta, k, n)
    T_eff = n - p
    Z = np.empty((k, T_eff, p * eta))
    for j in range(1, p + 1):
        lagged = spatial[:, :, p - j : n - j]  # (eta, k, T_eff)
        Z[:, :, (j - 1) * eta : j * eta] = lagged.transpose(1, 2, 0)
    return Z, window[:, p:].copy()


def build_design(
    series: SpatioTemporalSeries,
    W: NeighborhoodWeights,
    order: ModelOrder,
    i: int,
    fit_range=None,
) -> DesignPair:
    start, stop = _check_range(fit_range, series.T)
    Z, Y = design_tensor(series.values, W, order, (start, stop))
    return DesignPair(Z[i], Y[i], i, range(start + order.p, stop))


def _parse_times(raw: list[str]) -> np.ndarray:
    try:
        return np.array([int(x) for x in raw], dtype=np.int64)
    except ValueError:
        return np.array([datetime.fromisoformat(x) for x in raw], dtype="datetime64[s]")


def read_series_csv(path: str | Path) -> SpatioTemporalSeries:
    """Read a ``time,<loc1>,<loc2>,...`` CSV (one row per time point)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0].strip() != "time":
        raise ValueError(f"{path}: first column must be 'time'")
    header = [h.strip() for h in rows[0][1:]]
    body = [r for r in rows[1:] if r]
    times = _parse_times([r[0].strip() for r in body])
    values = np.array([[float(x) for x in r[1:]] for r in body], dtype=float).reshape(len(body), len(header))
    return SpatioTemporalSeries(tuple(header), times, values.T)


def write_series_csv(series: SpatioTemporalSeries, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", *series.locations])
        for t in range(series.T):
            stamp = series.times[t]
            stamp = str(stamp) if np.issubdtype(series.times.dtype, np.datetime64) else str(int(stamp))
            writer.writerow([stamp, *(fmt_float(v) for v in series.values[:, t])])
