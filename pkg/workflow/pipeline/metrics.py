"""
Per-run evaluation metrics (guard period, channel usage, capacity) and their
Monte Carlo aggregation with 95% confidence half-widths.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import norm

from workflow.pipeline.channel import UeLink
from workflow.pipeline.scheduler import SelectionResult
from workflow.pipeline.tdd_schedule import SlotState, SlotTimeline

CONFIDENCE = 0.95


class TimelineError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    avg_guard_period_ms: float
    channel_usage_pct: float
    dl_usage_pct: float
    ul_usage_pct: float
    avg_capacity_mbps: float
    dl_capacity_mbps: float
    ul_capacity_mbps: float
    n_runs: int = 1
    ci95: Optional[dict] = None


METRIC_FIELDS = tuple(
    f.name for f in fields(MetricsReport) if f.name not in ("n_runs", "ci95")
)


def guard_period(timeline: SlotTimeline) -> float:
    """Mean length [ms] of the idle runs between allocated slots."""
    window = timeline.window
    allocated = np.flatnonzero(window != SlotState.IDLE)
    if allocated.size == 0:
        raise TimelineError(
            "Guard period is undefined on a timeline with no allocated slot"
        )
    gaps = np.diff(allocated) - 1
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        return 0.0
    return float(gaps.mean() * timeline.grid.slot_duration_ms)


def channel_usage(timeline: SlotTimeline) -> tuple[float, float, float]:
    """(total, dl, ul) share of allocated slots in percent."""
    window = timeline.window
    if window.size == 0:
        return 0.0, 0.0, 0.0
    dl = 100.0 * np.count_nonzero(window == SlotState.DL) / window.size
    ul = 100.0 * np.count_nonzero(window == SlotState.UL) / window.size
    return dl + ul, dl, ul


def ul_separations(timeline: SlotTimeline) -> np.ndarray:
    """Number of slots strictly between consecutive UL transmissions."""
    ul_starts = np.array(
        [
            r.ul_slot
            for r in timeline.records
            if r.ul_slot >= timeline.warmup_until - timeline.grid.ul_slots
            and r.ul_slot < timeline.complete_until
        ],
        dtype=int,
    )
    return np.diff(np.sort(ul_starts)) - timeline.grid.ul_slots


def capacity(
    selection: SelectionResult,
    links: Sequence[UeLink],
    dl_usage_pct: float,
    ul_usage_pct: float,
) -> tuple[float, float, float]:
    """(total, dl, ul) average capacity [Mbps] weighted by the slot shares."""
    link_ids = sorted(link.ue_id for link in links)
    if link_ids != sorted(selection.selected_ids):
        raise ValueError(
            f"Links for UEs {link_ids} do not match selection {selection.selected_ids}"
        )
    mean_c = float(np.mean([link.capacity_mbps for link in links]))
    dl = mean_c * dl_usage_pct / 100.0
    ul = mean_c * ul_usage_pct / 100.0
    return dl + ul, dl, ul


class MetricsAccumulator:
    """
    Running mean/variance per metric (Welford). Two accumulators merge
    associatively, so partial results from parallel workers can be combined.
    """

    def __init__(self):
        self.n = 0
        self.mean = np.zeros(len(METRIC_FIELDS))
        self.m2 = np.zeros(len(METRIC_FIELDS))

    def add(self, report: MetricsReport) -> "MetricsAccumulator":
        x = np.array([getattr(report, name) for name in METRIC_FIELDS], dtype=float)
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self.m2 = self.m2 + delta * (x - self.mean)
        return self

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        merged = MetricsAccumulator()
        merged.n = self.n + other.n
        if merged.n == 0:
            return merged
        delta = other.mean - self.mean
        merged.mean = self.mean + delta * other.n / merged.n
        merged.m2 = self.m2 + other.m2 + delta**2 * self.n * other.n / merged.n
        return merged

    def result(self) -> MetricsReport:
        if self.n == 0:
            raise ValueError("No runs to aggregate")
        ci95 = None
        if self.n >= 2:
            z = norm.ppf(1 - (1 - CONFIDENCE) / 2)
            half = z * np.sqrt(self.m2 / (self.n - 1)) / np.sqrt(self.n)
            ci95 = {name: float(h) for name, h in zip(METRIC_FIELDS, half)}
        values = {name: float(m) for name, m in zip(METRIC_FIELDS, self.mean)}
        return MetricsReport(**values, n_runs=self.n, ci95=ci95)


def aggregate(reports: Iterable[MetricsReport]) -> MetricsReport:
    acc = MetricsAccumulator()
    for report in reports:
        acc.add(report)
    return acc.result()
