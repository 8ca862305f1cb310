"""Similarity and overhead measurements for defended traces."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .trace_io import CELL_SIZE, Direction, Trace


class UndefinedMetric(ValueError):
    """The metric has no value for this input (reported, never averaged)."""


@dataclass(frozen=True)
class AggregatedTimeSeries:
    window: float                # milliseconds
    upload: np.ndarray
    download: np.ndarray

    def series(self, direction: str) -> np.ndarray:
        return self.upload if direction == "upload" else self.download


def aggregate(trace: Trace, window_ms: float) -> AggregatedTimeSeries:
    """Bytes sent/received by the client in consecutive windows.

    Windows cover ``[0, last event]``; there are ``ceil(duration / I)`` of
    them (at least one) and a cell on the closing edge falls in the last.
    """
    if not window_ms > 0:
        raise ValueError(f"window must be > 0 ms, got {window_ms}")
    window_us = int(round(window_ms * 1000))
    times = np.array([int(round(e.time * 1_000_000)) for e in trace.events], dtype=np.int64)
    outgoing = np.array([e.direction == Direction.OUT for e in trace.events], dtype=bool)
    duration = int(times.max()) if len(times) else 0
    n = max(1, -(-duration // window_us))
    idx = np.minimum(times // window_us, n - 1)
    upload = np.bincount(idx[outgoing], minlength=n) * CELL_SIZE
    download = np.bincount(idx[~outgoing], minlength=n) * CELL_SIZE
    return AggregatedTimeSeries(window_ms, upload.astype(np.int64), download.astype(np.int64))


def _pad_pair(a: Sequence[float], b: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    n = max(len(x), len(y))
    if len(x) < n:
        x = np.concatenate((x, np.zeros(n - len(x))))
    if len(y) < n:
        y = np.concatenate((y, np.zeros(n - len(y))))
    return x, y


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Sample correlation after zero-padding the shorter series."""
    x, y = _pad_pair(a, b)
    if len(x) < 2:
        raise UndefinedMetric("correlation needs at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(np.dot(xc, xc)))
    sy = math.sqrt(float(np.dot(yc, yc)))
    if sx == 0 or sy == 0:
        raise UndefinedMetric("correlation of a constant series is undefined")
    r = float(np.dot(xc, yc)) / (sx * sy)
    return max(-1.0, min(1.0, r))


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Longest common subsequence length under exact equality.

    Bit-parallel row update: one big-integer pass per element of ``a``.
    """
    if len(a) < len(b):
        a, b = b, a
    m = len(b)
    if m == 0:
        return 0
    masks: dict = {}
    for j, v in enumerate(b.tolist() if isinstance(b, np.ndarray) else b):
        masks[v] = masks.get(v, 0) | (1 << j)
    full = (1 << m) - 1
    row = full
    for v in (a.tolist() if isinstance(a, np.ndarray) else a):
        match = masks.get(v)
        if match:
            u = row & match
            row = ((row + u) | (row - u)) & full
    return m - bin(row).count("1")


def lcss(a: Sequence, b: Sequence) -> float:
    """LCS length divided by the shorter series length."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("lcss needs non-empty series")
    return lcs_length(a, b) / min(len(a), len(b))


@dataclass(frozen=True)
class OverheadReport:
    send_bw: Optional[float]
    recv_bw: Optional[float]
    overall_bw: Optional[float]
    latency: Optional[float] = None


def _ratio(padding: int, real: int) -> Optional[float]:
    return None if real == 0 else 100.0 * padding / real


def bandwidth_overhead(defended: Trace) -> OverheadReport:
    """Padding bytes over non-padding bytes, per direction and overall (%).

    A direction without real cells reports ``None``.
    """
    counts = {(d, p): 0 for d in Direction for p in (False, True)}
    for e in defended.events:
        counts[e.direction, e.is_padding] += e.size
    send = _ratio(counts[Direction.OUT, True], counts[Direction.OUT, False])
    recv = _ratio(counts[Direction.IN, True], counts[Direction.IN, False])
    overall = _ratio(counts[Direction.OUT, True] + counts[Direction.IN, True],
                     counts[Direction.OUT, False] + counts[Direction.IN, False])
    return OverheadReport(send, recv, overall)


def latency_overhead(defended: Trace, base: Trace) -> float:
    """Relative growth (%) of the time to the last real cell, floored at 0."""
    if not len(defended) or not len(base):
        raise ValueError("latency overhead needs non-empty traces")
    base_end = base.last_real_time() - base.events[0].time
    if base_end <= 0:
        raise UndefinedMetric(f"base trace {base.id!r} has zero duration")
    defended_end = defended.last_real_time() - base.events[0].time
    return max(0.0, (defended_end / base_end - 1.0) * 100.0)


def overhead(defended: Trace, base: Trace) -> OverheadReport:
    bw = bandwidth_overhead(defended)
    try:
        latency = latency_overhead(defended, base)
    except UndefinedMetric:
        latency = None
    return OverheadReport(bw.send_bw, bw.recv_bw, bw.overall_bw, latency)


def box_stats(values: Sequence[float]) -> dict[str, float]:
    """Median, quartiles, 1.5-IQR whiskers and mean of ``values``."""
    x = np.sort(np.asarray([v for v in values if v is not None and not math.isnan(v)], float))
    if not len(x):
        return {k: math.nan for k in ("n", "mean", "lower_whisker", "lower_quartile",
                                      "median", "upper_quartile", "upper_whisker")}
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo = x[x >= q1 - 1.5 * iqr].min()
    hi = x[x <= q3 + 1.5 * iqr].max()
    return {
        "n": float(len(x)),
        "mean": float(x.mean()),
        "lower_whisker": float(lo),
        "lower_quartile": float(q1),
        "median": float(med),
        "upper_quartile": float(q3),
        "upper_whisker": float(hi),
    }
