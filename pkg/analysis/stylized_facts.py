"""
Stylized Facts Module.

Checks the realism of simulated markets: mid prices are resampled from the L2 log onto a regular
grid, turned into non-overlapping log returns at several horizons, and summarized by their
excess kurtosis, the fat-tail statistic that should shrink as the horizon grows.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel
from scipy.stats import kurtosis, norm

from config import HISTOGRAM_BINS, MID_SAMPLE_STEP_NS, NS_PER_MINUTE, STYLIZED_HORIZONS_MIN
from learning.dataset import read_l2_log
from reporting.svg_constructor import SVGConstructor

logger = logging.getLogger(__name__)

HISTOGRAM_HEADER = ["bin_left", "bin_right", "count"]


class HorizonSummary(BaseModel):
    horizon: str
    n: int
    mean: Optional[float]
    std: Optional[float]
    excess_kurtosis: Optional[float]


def mid_price_grid(snapshots: list, step_ns: int, start_ns: int, end_ns: int) -> np.ndarray:
    """
    Samples the mid price of the latest two-sided snapshot at or before each grid time.

    Grid points before the first two-sided snapshot are NaN.
    """
    two_sided = [s for s in snapshots if s.two_sided]
    grid = np.arange(start_ns, end_ns + 1, step_ns, dtype=np.int64)
    mids = np.full(len(grid), np.nan)
    if not two_sided:
        return mids
    times = np.array([s.time for s in two_sided], dtype=np.int64)
    values = np.array([s.mid for s in two_sided], dtype=float)
    index = np.searchsorted(times, grid, side="right") - 1
    mids[index >= 0] = values[index[index >= 0]]
    return mids


def log_returns(mid_series, horizon: int) -> np.ndarray:
    """
    Non-overlapping log returns ln(p[t+h] / p[t]) of one session's mid-price series.

    Args:
        mid_series (array-like): Mid prices on a regular grid; NaN marks missing points.
        horizon (int): Horizon in grid steps.

    Returns:
        np.ndarray: The returns whose endpoints both exist; empty for series shorter than the horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least one grid step")
    prices = np.asarray(mid_series, dtype=float)[::horizon]
    if len(prices) < 2:
        return np.zeros(0)
    start, end = prices[:-1], prices[1:]
    valid = np.isfinite(start) & np.isfinite(end) & (start > 0) & (end > 0)
    return np.log(end[valid] / start[valid])


def session_log_returns(sessions: list, horizon: int) -> np.ndarray:
    """Concatenates per-session returns; no return spans two sessions."""
    parts = [log_returns(session, horizon) for session in sessions]
    return np.concatenate(parts) if parts else np.zeros(0)


def excess_kurtosis(xs) -> float:
    """
    Biased sample kurtosis minus 3.

    Raises:
        ValueError: For fewer than 4 values or zero variance.
    """
    xs = np.asarray(xs, dtype=float)
    if len(xs) < 4:
        raise ValueError(f"excess kurtosis needs at least 4 values, got {len(xs)}")
    if np.var(xs) == 0:
        raise ValueError("excess kurtosis is undefined for zero variance")
    return float(kurtosis(xs, fisher=True, bias=True))


def summarize(xs, horizon: str) -> HorizonSummary:
    xs = np.asarray(xs, dtype=float)
    if len(xs) == 0:
        return HorizonSummary(horizon=horizon, n=0, mean=None, std=None, excess_kurtosis=None)
    try:
        kurt = excess_kurtosis(xs)
    except ValueError as e:
        logger.warning(f"Horizon {horizon}: {e}")
        kurt = None
    return HorizonSummary(horizon=horizon, n=len(xs), mean=float(xs.mean()), std=float(xs.std()),
                          excess_kurtosis=kurt)


def histogram(xs, bins: int) -> tuple:
    """
    Equal-width histogram over the data range.

    Returns:
        tuple: (edges, counts); both empty for empty input.
    """
    if bins < 1:
        raise ValueError("bins must be at least 1")
    xs = np.asarray(xs, dtype=float)
    if len(xs) == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    counts, edges = np.histogram(xs, bins=bins)
    return edges, counts


def export_histogram(xs, bins: int, csv_path, svg_path=None, title: str = "Log returns") -> tuple:
    """
    Writes the histogram as CSV (bin_left,bin_right,count) and, if asked, as an SVG bar chart with a
    normal density overlay of the same mean and standard deviation.
    """
    edges, counts = histogram(xs, bins)
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(HISTOGRAM_HEADER)
        for i, count in enumerate(counts):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(count)])

    if svg_path is not None:
        xs = np.asarray(xs, dtype=float)
        density = None
        if len(xs) > 1 and xs.std() > 0:
            centres = (edges[:-1] + edges[1:]) / 2
            density = norm.pdf(centres, xs.mean(), xs.std()) * len(xs) * (edges[1] - edges[0])
        SVGConstructor.write(SVGConstructor.construct_histogram(edges, {"returns": counts}, title, "log return",
                                                                density), svg_path)
    return edges, counts


def stylized_facts_report(l2_paths: list, out_dir, session: tuple, horizons_min: list = STYLIZED_HORIZONS_MIN,
                          step_ns: int = MID_SAMPLE_STEP_NS, bins: int = HISTOGRAM_BINS) -> list:
    """
    Computes the return summaries of every horizon and writes report.json plus histograms.

    Args:
        l2_paths (list): One L2 log per session.
        out_dir (str | Path): Destination directory.
        session (tuple): (open_ns, close_ns) of every session.
        horizons_min (list): Return horizons in minutes.
        step_ns (int): Mid-price sampling step.
        bins (int): Histogram bin count.

    Returns:
        list: One HorizonSummary per horizon.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sessions = [mid_price_grid(read_l2_log(path), step_ns, *session) for path in l2_paths]
    summaries = []
    for minutes in horizons_min:
        steps = max(int(math.ceil(minutes * NS_PER_MINUTE / step_ns)), 1)
        returns = session_log_returns(sessions, steps)
        summary = summarize(returns, f"{minutes}min")
        summaries.append(summary)
        logger.info(f"Horizon {summary.horizon}: n={summary.n}, excess kurtosis={summary.excess_kurtosis}")
        export_histogram(returns, bins, out_dir / f"returns_{minutes}min.csv", out_dir / f"returns_{minutes}min.svg",
                         f"{minutes}-minute log returns")
    report = "[\n" + ",\n".join(summary.model_dump_json() for summary in summaries) + "\n]\n"
    (out_dir / "report.json").write_text(report)
    return summaries
