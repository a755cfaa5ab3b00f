"""
Fundamental Value Module.

This module provides the exogenous value series r_t that value agents and market makers observe,
the noisy observation model, and the intraday volume profile VWAP agents weight their slices by.
Series can be loaded from CSV files (time_ns,price_ticks) or generated from a seeded
Ornstein-Uhlenbeck process when no historical prices are available.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from config import SESSION_CLOSE_NS, SESSION_OPEN_NS
from errors import FundamentalLoadError
from market.exchange import round_half_away

logger = logging.getLogger(__name__)


class FundamentalSeries:
    """
    Step function of (time, value) points, right-continuous between grid timestamps.

    Args:
        times (array-like): Strictly increasing timestamps in nanoseconds.
        values (array-like): Positive values in ticks.
    """

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.int64)
        _validate(self.times, self.values)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def start(self) -> int:
        return int(self.times[0])

    @property
    def end(self) -> int:
        return int(self.times[-1])

    def covers(self, start_ns: int, end_ns: int) -> bool:
        return self.start <= start_ns and self.end >= end_ns

    def value_at(self, t: int) -> int:
        """
        Returns the value at the greatest grid time not after t.

        Raises:
            ValueError: If t precedes the first point of the series.
        """
        index = int(np.searchsorted(self.times, t, side="right")) - 1
        if index < 0:
            raise ValueError(f"time {t} precedes the fundamental series start {self.start}")
        return int(self.values[index])

    def slice(self, start_ns: int, end_ns: int) -> "FundamentalSeries":
        """Returns the points needed to answer value_at on [start_ns, end_ns]."""
        first = max(int(np.searchsorted(self.times, start_ns, side="right")) - 1, 0)
        last = int(np.searchsorted(self.times, end_ns, side="right"))
        return FundamentalSeries(self.times[first:last], self.values[first:last])

    def to_csv(self, path: Path):
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["time_ns", "price_ticks"])
            writer.writerows(zip(self.times.tolist(), self.values.tolist()))


@dataclass(frozen=True)
class ObservationModel:
    """
    Gaussian observation noise with variance sigma_n (ticks squared).
    """

    sigma_n: float = 0.0

    def __post_init__(self):
        if self.sigma_n < 0:
            raise ValueError("observation noise variance must be non-negative")


class VolumeProfile:
    """
    Normalized traded-volume weights over equal-width buckets of the session.

    Args:
        weights (array-like): Non-negative bucket weights; they are renormalized to sum to 1.
        start_ns (int): Start of the first bucket.
        end_ns (int): End of the last bucket.
    """

    def __init__(self, weights, start_ns: int = SESSION_OPEN_NS, end_ns: int = SESSION_CLOSE_NS):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or len(weights) == 0:
            raise ValueError("a volume profile needs at least one bucket")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("volume profile weights must be finite and non-negative")
        total = weights.sum()
        if total <= 0:
            raise ValueError("volume profile weights must not all be zero")
        if start_ns >= end_ns:
            raise ValueError("volume profile start must precede its end")
        self.weights = weights / total
        self.start_ns = start_ns
        self.end_ns = end_ns

    @classmethod
    def u_shape(cls, n_buckets: int = 13, start_ns: int = SESSION_OPEN_NS,
                end_ns: int = SESSION_CLOSE_NS) -> "VolumeProfile":
        """
        Symmetric U-shaped profile: the first and last buckets are three times the middle one.
        """
        centre = (n_buckets - 1) / 2
        if centre == 0:
            return cls([1.0], start_ns, end_ns)
        weights = [1.0 + 2.0 * ((i - centre) / centre) ** 2 for i in range(n_buckets)]
        return cls(weights, start_ns, end_ns)

    @classmethod
    def uniform(cls, n_buckets: int, start_ns: int = SESSION_OPEN_NS,
                end_ns: int = SESSION_CLOSE_NS) -> "VolumeProfile":
        return cls(np.ones(n_buckets), start_ns, end_ns)

    def weight_between(self, t0: int, t1: int) -> float:
        """
        Profile mass inside [t0, t1): each bucket contributes its weight times the share of it covered.
        """
        edges = np.linspace(self.start_ns, self.end_ns, len(self.weights) + 1)
        overlap = np.clip(np.minimum(edges[1:], t1) - np.maximum(edges[:-1], t0), 0.0, None)
        return float(np.sum(self.weights * overlap / np.diff(edges)))


def _validate(times: np.ndarray, values: np.ndarray):
    if times.ndim != 1 or times.shape != values.shape:
        raise FundamentalLoadError("times and values must be one-dimensional and of equal length")
    if len(times) == 0:
        raise FundamentalLoadError("fundamental series is empty")
    for row in range(len(times)):
        if values[row] <= 0:
            raise FundamentalLoadError(f"row {row + 1}: non-positive price {values[row]}", field="price_ticks")
        if row > 0 and times[row] <= times[row - 1]:
            raise FundamentalLoadError(f"row {row + 1}: timestamp {times[row]} is not after {times[row - 1]}",
                                       field="time_ns")


def load_csv(path) -> FundamentalSeries:
    """
    Loads and validates a fundamental series from a time_ns,price_ticks CSV file.

    Args:
        path (str | Path): The CSV file.

    Returns:
        FundamentalSeries: The validated series.
    """
    path = Path(path)
    if not path.exists():
        raise FundamentalLoadError(f"fundamental file {path} does not exist", field="csv_paths")
    times, values = [], []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise FundamentalLoadError(f"{path} is empty", field="csv_paths")
        if [column.strip() for column in header] != ["time_ns", "price_ticks"]:
            raise FundamentalLoadError(f"{path}: expected header time_ns,price_ticks", field="csv_paths")
        for row_number, row in enumerate(reader, start=1):
            try:
                times.append(int(row[0]))
                values.append(int(row[1]))
            except (ValueError, IndexError):
                raise FundamentalLoadError(f"row {row_number}: cannot parse {row}", field="csv_paths")
    if not times:
        raise FundamentalLoadError(f"{path} has no data rows", field="csv_paths")
    series = FundamentalSeries(times, values)
    logger.info(f"Loaded {len(series)} fundamental points from {path}")
    return series


def generate_ou(mean_ticks: float, reversion_rate: float, vol: float, dt_ns: int, session: tuple, seed,
                initial: float | None = None) -> FundamentalSeries:
    """
    Samples a mean-reverting series on a fixed grid with the exact OU transition.

    Args:
        mean_ticks (float): Long-run mean in ticks.
        reversion_rate (float): Mean-reversion speed per second.
        vol (float): Volatility in ticks per square-root second.
        dt_ns (int): Grid step in nanoseconds.
        session (tuple): (start_ns, end_ns) covered by the grid, both ends included.
        seed: Anything np.random.default_rng accepts.
        initial (float | None): Starting value; defaults to the mean.

    Returns:
        FundamentalSeries: The rounded, positive series.
    """
    if reversion_rate < 0 or vol < 0:
        raise ValueError("reversion rate and volatility must be non-negative")
    start_ns, end_ns = session
    times = np.arange(start_ns, end_ns + 1, dt_ns, dtype=np.int64)
    if times[-1] < end_ns:
        times = np.append(times, end_ns)
    rng = np.random.default_rng(seed)
    dt = dt_ns / 1e9
    decay = math.exp(-reversion_rate * dt)
    if reversion_rate > 0:
        step_std = vol * math.sqrt((1.0 - decay ** 2) / (2.0 * reversion_rate))
    else:
        step_std = vol * math.sqrt(dt)

    shocks = rng.standard_normal(len(times))
    level = float(mean_ticks if initial is None else initial)
    values = np.empty(len(times), dtype=np.int64)
    for i in range(len(times)):
        if i > 0:
            level = mean_ticks + (level - mean_ticks) * decay + step_std * shocks[i]
        values[i] = max(round_half_away(level), 1)
    return FundamentalSeries(times, values)


def observe(series: FundamentalSeries, t: int, model: ObservationModel, rng: np.random.Generator) -> int:
    """
    Returns a noisy estimate of the fundamental value at time t, rounded to ticks.
    """
    value = series.value_at(t)
    if model.sigma_n == 0:
        return value
    return round_half_away(value + rng.normal(0.0, math.sqrt(model.sigma_n)))


def load_volume_profile_csv(path, start_ns: int = SESSION_OPEN_NS, end_ns: int = SESSION_CLOSE_NS) -> VolumeProfile:
    """
    Loads bucket_index,weight rows; buckets must be numbered 0..n-1 without gaps.
    """
    path = Path(path)
    if not path.exists():
        raise FundamentalLoadError(f"volume profile {path} does not exist", field="volume_profile_csv")
    rows = {}
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for row_number, row in enumerate(reader, start=1):
            try:
                rows[int(row["bucket_index"])] = float(row["weight"])
            except (KeyError, TypeError, ValueError):
                raise FundamentalLoadError(f"row {row_number}: cannot parse {row}", field="volume_profile_csv")
    if sorted(rows) != list(range(len(rows))) or not rows:
        raise FundamentalLoadError(f"{path}: bucket indices must be 0..n-1", field="volume_profile_csv")
    try:
        return VolumeProfile([rows[i] for i in range(len(rows))], start_ns, end_ns)
    except ValueError as e:
        raise FundamentalLoadError(f"{path}: {e}", field="volume_profile_csv")
