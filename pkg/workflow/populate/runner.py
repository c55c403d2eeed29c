"""
Seeded Monte Carlo execution of scenarios, parameter sweeps, gain calibration
and result files.

Run `k` of a scenario draws from its own stream, derived from (seed, k), so
adding runs never changes existing ones and the results do not depend on how
many worker processes are used.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial, reduce
from typing import Iterator, Optional, Sequence

import numpy as np
import pandas as pd

from workflow import logger
from workflow.pipeline.channel import UeLink, link_quality
from workflow.pipeline.geometry import delay_extremes, ue_geometry
from workflow.pipeline.metrics import (
    METRIC_FIELDS,
    MetricsAccumulator,
    MetricsReport,
    TimelineError,
    capacity,
    channel_usage,
    guard_period,
)
from workflow.pipeline.scenario import (
    DelayScope,
    ScenarioConfig,
    apply_sweep_value,
    with_overrides,
)
from workflow.pipeline.scheduler import Method, SelectionResult, select
from workflow.pipeline.tdd_schedule import (
    Violation,
    build_timeline,
    verify_no_interference,
)
from workflow.utils.paths import get_output_dir, get_traces_dir

# runs per worker task, also the unit that is accumulated before merging
CHUNK_RUNS = 25

TABLE_COLUMNS = [
    "sweep_value",
    "policy",
    "scheduler",
    "pattern",
    "metric",
    "mean",
    "ci95",
    "n_runs",
]


class InterferenceError(RuntimeError):
    def __init__(self, message: str, violations: Sequence[Violation], trace: str):
        super().__init__(message)
        self.violations = list(violations)
        self.trace = trace


@dataclass(frozen=True)
class RunResult:
    config_digest: str
    run_index: int
    selection: SelectionResult
    metrics: MetricsReport
    trace_digest: str
    selected_snr_db: tuple[float, ...]
    trace: Optional[str] = None


def run_stream(seed: int, run_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_index,)))


def generate_scenario(config: ScenarioConfig, run_index: int) -> list[UeLink]:
    """Draw the UE population of run `run_index` with its per-UE link quality."""
    rng = run_stream(config.seed, run_index)
    satellite = config.satellite
    profile = config.channel_profile

    alphas = rng.uniform(config.alpha_min_deg, config.alpha_max_deg, size=config.n_ue)
    links = []
    for ue_id, alpha in enumerate(alphas):
        geometry = ue_geometry(ue_id, float(alpha), satellite)
        links.append(
            UeLink(geometry, link_quality(geometry, config.link, profile, rng))
        )
    return links


def run_single(
    config: ScenarioConfig, run_index: int, keep_trace: bool = False
) -> RunResult:
    links = generate_scenario(config, run_index)
    selection = select(config.scheduler, links, config.n_s)
    chosen = set(selection.selected_ids)
    selected = [link for link in links if link.ue_id in chosen]

    scope = selected if config.delay_scope is DelayScope.SELECTED else links
    tau_min, tau_max = delay_extremes([link.geometry for link in scope])
    timeline = build_timeline(
        config.policy, config.grid, config.slot_pattern, tau_min, tau_max
    )
    if timeline.truncated:
        raise TimelineError(
            f"Run {run_index}: a horizon of {config.grid.horizon_slots} slots leaves "
            "no complete transmission after the first uplink; increase "
            "grid.horizon_slots"
        )

    assignment = {rec.tx_index: selection.selected_ids for rec in timeline.records}
    violations = verify_no_interference(
        timeline, [link.geometry for link in selected], assignment
    )
    if violations:
        trace = timeline.trace()
        logger.error(
            f"Run {run_index}: {len(violations)} interference violation(s), "
            f"first: {violations[0]}\n{trace}"
        )
        raise InterferenceError(
            f"Run {run_index} produced {len(violations)} interference violation(s)",
            violations,
            trace,
        )

    usage, dl_usage, ul_usage = channel_usage(timeline)
    total_c, dl_c, ul_c = capacity(selection, selected, dl_usage, ul_usage)
    metrics = MetricsReport(
        avg_guard_period_ms=guard_period(timeline),
        channel_usage_pct=usage,
        dl_usage_pct=dl_usage,
        ul_usage_pct=ul_usage,
        avg_capacity_mbps=total_c,
        dl_capacity_mbps=dl_c,
        ul_capacity_mbps=ul_c,
    )
    logger.debug(
        f"Run {run_index}: tau=[{tau_min:.4f}, {tau_max:.4f}] ms, "
        f"usage={usage:.2f}%, capacity={total_c:.1f} Mbps"
    )
    return RunResult(
        config_digest=config.digest(),
        run_index=run_index,
        selection=selection,
        metrics=metrics,
        trace_digest=timeline.trace_digest(),
        selected_snr_db=tuple(link.snr_db for link in selected),
        trace=timeline.trace() if keep_trace else None,
    )


def run_batch(
    config: ScenarioConfig, jobs: int = 1, keep_traces: bool = False
) -> list[RunResult]:
    """All `config.runs` repetitions, ordered by run index."""
    task = partial(run_single, config, keep_trace=keep_traces)
    if jobs <= 1:
        return [task(k) for k in range(config.runs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(task, range(config.runs), chunksize=CHUNK_RUNS))


def batch_report(results: Sequence[RunResult]) -> MetricsReport:
    """
    Mean and 95% interval of every metric. Each chunk of `CHUNK_RUNS`
    consecutive runs is accumulated on its own and the chunks are merged in
    run order, so the report does not depend on the number of workers.
    """
    chunks = [
        reduce(
            MetricsAccumulator.add,
            (r.metrics for r in results[start : start + CHUNK_RUNS]),
            MetricsAccumulator(),
        )
        for start in range(0, len(results), CHUNK_RUNS)
    ]
    if not chunks:
        raise ValueError("No runs to aggregate")
    return reduce(MetricsAccumulator.merge, chunks).result()


def selected_snr_samples(results: Sequence[RunResult]) -> np.ndarray:
    return np.array([snr for r in results for snr in r.selected_snr_db])


def summary_rows(
    config: ScenarioConfig, results: Sequence[RunResult], sweep_value=None
) -> list[dict]:
    report = batch_report(results)

    base = {
        "sweep_value": sweep_value,
        "policy": config.policy.value,
        "scheduler": config.scheduler.value,
        "pattern": config.pattern,
    }
    rows = [
        {
            **base,
            "metric": name,
            "mean": getattr(report, name),
            "ci95": report.ci95[name] if report.ci95 else math.nan,
            "n_runs": report.n_runs,
        }
        for name in METRIC_FIELDS
    ]
    extras = {
        "median_selected_snr_db": float(np.median(selected_snr_samples(results))),
        "median_delay_spread_ms": float(
            np.median([r.selection.delay_spread_ms for r in results])
        ),
    }
    rows.extend(
        {
            **base,
            "metric": name,
            "mean": value,
            "ci95": math.nan,
            "n_runs": len(results),
        }
        for name, value in extras.items()
    )
    return rows


def iter_sweep(
    base: ScenarioConfig,
    axis: str,
    values: Sequence,
    jobs: int = 1,
    keep_traces: bool = False,
) -> Iterator[tuple[object, ScenarioConfig, list[RunResult]]]:
    for value in values:
        config = apply_sweep_value(base, axis, value)
        logger.info(
            f"Sweep {axis}={value}: {config.runs} runs, policy={config.policy.value}, "
            f"scheduler={config.scheduler.value}, pattern={config.pattern}"
        )
        yield value, config, run_batch(config, jobs=jobs, keep_traces=keep_traces)


def run_sweep(
    base: ScenarioConfig, axis: str, values: Sequence, jobs: int = 1
) -> pd.DataFrame:
    rows = []
    for value, config, results in iter_sweep(base, axis, values, jobs=jobs):
        rows.extend(summary_rows(config, results, sweep_value=value))
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def run_point(config: ScenarioConfig, jobs: int = 1) -> pd.DataFrame:
    results = run_batch(config, jobs=jobs)
    return pd.DataFrame(summary_rows(config, results), columns=TABLE_COLUMNS)


def calibrate_gain(
    config: ScenarioConfig,
    target_snr_db: float = 29.0,
    tol_db: float = 0.5,
    runs: int = 1000,
    altitude_km: float = 300.0,
    alpha_min_deg: float = 50.0,
    bounds: tuple[float, float] = (0.0, 120.0),
    max_iter: int = 50,
) -> float:
    """
    Bisect the link calibration gain [dB] until the median SNR of MG-selected
    UEs at the reference scenario is within `tol_db` of `target_snr_db`.
    """
    reference = with_overrides(
        config,
        altitude_km=altitude_km,
        alpha_min_deg=alpha_min_deg,
        scheduler=Method.MG,
        runs=runs,
    )

    def median_snr(gain_db):
        link = reference.link.model_copy(update={"calibration_gain_db": gain_db})
        cfg = with_overrides(reference, link=link.model_dump())
        samples = []
        for k in range(cfg.runs):
            ues = generate_scenario(cfg, k)
            chosen = set(select(Method.MG, ues, cfg.n_s).selected_ids)
            samples.extend(ue.snr_db for ue in ues if ue.ue_id in chosen)
        return float(np.median(samples))

    lo, hi = bounds
    if median_snr(lo) > target_snr_db or median_snr(hi) < target_snr_db:
        raise ValueError(
            f"Target SNR {target_snr_db} dB is not reachable "
            f"with a gain in {bounds} dB"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        err = median_snr(mid) - target_snr_db
        logger.info(
            f"Calibration gain {mid:.3f} dB -> median SNR error {err:+.3f} dB"
        )
        if abs(err) <= tol_db:
            return mid
        if err < 0:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(f"Calibration did not converge in {max_iter} iterations")


def _json_rows(table: pd.DataFrame) -> list[dict]:
    return table.astype(object).where(table.notna(), None).to_dict(orient="records")


def write_table(
    table: pd.DataFrame, out_dir, stem: str, config: ScenarioConfig, axis=None
) -> dict:
    """Write `<stem>.csv` and its mirror `<stem>.json`; returns the paths."""
    out = get_output_dir(out_dir)
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"

    table.to_csv(csv_path, index=False, float_format="%.12g")
    report = {
        "config_digest": config.digest(),
        "sweep_axis": axis,
        "seed": config.seed,
        "rows": _json_rows(table),
    }
    with open(json_path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    return {"csv": csv_path.as_posix(), "json": json_path.as_posix()}


def write_traces(results: Sequence[RunResult], out_dir, label: str) -> list[str]:
    traces_dir = get_traces_dir(out_dir, label)
    paths = []
    for result in results:
        if result.trace is None:
            continue
        path = traces_dir / f"run_{result.run_index:04d}.txt"
        path.write_text(result.trace + "\n")
        paths.append(path.as_posix())
    return paths
