"""Trace-driven replay of CI jobs under each scheduling strategy.

Each strategy is replayed independently in arrival order.  Decisions are
made on the forecast; every executed job is then charged on the actual
intensity series for its true duration.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .carbon import IntensityDataset, Kind
from .errors import CoverageGap, EmptyTrace, InfeasibleDeadline, InvalidConfig
from .estimator import estimate_duration
from .scheduler import (
    RoundRobinState,
    ScheduleDecision,
    SchedulerParams,
    SchedulingContext,
    StrategyConfig,
    StrategyKind,
    decide,
    decide_location_shift,
)
from .timeutil import DAY, HOUR, format_instant
from .workflow import Annotation, ExecutionRecord, JobRequest, WorkflowHistory, WorkflowKey


class BufferPolicy(str, Enum):
    # every job gets its true duration as estimate and deadline = duration + buffer
    PAPER_UNIFORM = "paper_uniform"
    # jobs keep their own annotations; durations come from the estimator
    ANNOTATION_DRIVEN = "annotation_driven"


@dataclass
class SimulationConfig:
    strategies: list[StrategyConfig]
    intensity: IntensityDataset
    jobs: list[JobRequest]
    buffer_policy: BufferPolicy = BufferPolicy.PAPER_UNIFORM
    seed: int = 0
    regions: Sequence[str] | None = None
    params: SchedulerParams = field(default_factory=SchedulerParams)
    # ANNOTATION_DRIVEN only: applied to jobs whose own annotation is all-default
    default_annotation: Annotation | None = None


@dataclass(frozen=True)
class ExecutedJob:
    decision: ScheduleDecision
    actual_duration: float
    actual_emissions: float
    predicted_emissions: float | None
    deadline_violated: bool
    coverage_gap: bool = False

    @property
    def start(self) -> float:
        return self.decision.start

    @property
    def end(self) -> float:
        return self.decision.start + self.actual_duration


@dataclass
class StrategyReport:
    label: str
    strategy: StrategyConfig
    executed: list[ExecutedJob]
    total_actual_emissions: float
    relative_improvement: float
    timestamps: np.ndarray
    cumulative_emissions: np.ndarray
    running_jobs: np.ndarray
    fallback_count: int
    deadline_violation_count: int
    coverage_gap_count: int

    @property
    def improvement_pct(self) -> float:
        return 100.0 * self.relative_improvement


@dataclass
class EmissionsReport:
    baseline: str
    strategies: dict[str, StrategyReport]

    def __getitem__(self, label: str) -> StrategyReport:
        return self.strategies[label]

    def totals(self) -> dict[str, float]:
        return {k: v.total_actual_emissions for k, v in self.strategies.items()}

    def summary_rows(self) -> list[dict[str, object]]:
        return [
            {
                "strategy": r.label,
                "total_reu": r.total_actual_emissions,
                "improvement_pct": r.improvement_pct,
                "fallbacks": r.fallback_count,
                "deadline_violations": r.deadline_violation_count,
            }
            for r in self.strategies.values()
        ]

    def format_table(self) -> str:
        lines = [f"{'strategy':<22}{'total_reu':>16}{'improvement':>13}{'fallbacks':>11}{'violations':>12}"]
        for row in self.summary_rows():
            lines.append(
                f"{row['strategy']:<22}{row['total_reu']:>16.2f}{row['improvement_pct']:>12.2f}%"
                f"{row['fallbacks']:>11}{row['deadline_violations']:>12}"
            )
        return "\n".join(lines)

    def write(self, out_dir: str | Path) -> list[Path]:
        """Summary CSV, one series CSV per strategy and a long-format plot CSV."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        path = out_dir / "summary.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.summary_rows()[0]))
            writer.writeheader()
            for row in self.summary_rows():
                writer.writerow({**row, "total_reu": repr(float(row["total_reu"])),
                                 "improvement_pct": repr(float(row["improvement_pct"]))})
        written.append(path)
        plot_path = out_dir / "plot_data.csv"
        with open(plot_path, "w", newline="") as plot_fh:
            plot = csv.writer(plot_fh)
            plot.writerow(("strategy", "timestamp", "metric", "value"))
            for r in self.strategies.values():
                path = out_dir / f"series_{r.label}.csv"
                with open(path, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(("timestamp", "cumulative_emissions_reu", "running_jobs"))
                    for t, c, n in zip(r.timestamps, r.cumulative_emissions, r.running_jobs):
                        ts = format_instant(float(t))
                        writer.writerow((ts, repr(float(c)), int(n)))
                        plot.writerow((r.label, ts, "cumulative_emissions_reu", repr(float(c))))
                        plot.writerow((r.label, ts, "running_jobs", int(n)))
                written.append(path)
        written.append(plot_path)
        return written


@dataclass(frozen=True)
class ForecastErrorSummary:
    mean_absolute_error: float
    mean_signed_error: float
    n_jobs: int


def running_jobs_at(executed: Iterable[ExecutedJob], t: float) -> int:
    return sum(1 for e in executed if e.start <= t < e.end)


def forecast_error_report(executed: Iterable[ExecutedJob]) -> ForecastErrorSummary:
    """Predicted minus actual emissions, averaged over jobs with a prediction."""
    diffs = [e.predicted_emissions - e.actual_emissions
             for e in executed if e.predicted_emissions is not None]
    if not diffs:
        return ForecastErrorSummary(0.0, 0.0, 0)
    n = len(diffs)
    return ForecastErrorSummary(math.fsum(abs(d) for d in diffs) / n, math.fsum(diffs) / n, n)


# --- replay ------------------------------------------------------------------

def _paper_uniform_request(job: JobRequest, strategy: StrategyConfig) -> JobRequest:
    deadline = None
    if strategy.kind is StrategyKind.LOCATION_TIME:
        deadline = job.true_duration + strategy.buffer_hours * HOUR
    ann = Annotation(True, job.true_duration, deadline, job.annotation.allowed_regions)
    return replace(job, annotation=ann).for_scheduler()


def _horizon(config: SimulationConfig) -> float:
    """Latest instant any decision or execution could touch."""
    max_buffer = max((s.buffer_hours or 0.0) for s in config.strategies) * HOUR
    longest = max(j.true_duration for j in config.jobs)
    b = config.params.estimator.b_max
    end = 0.0
    for j in config.jobs:
        ann = j.annotation
        span = max(j.true_duration, ann.duration_estimate or 0.0, longest) * (1 + b)
        slack = max(max_buffer, ann.deadline_offset or 0.0, DAY)
        end = max(end, j.arrival + span + slack)
    return end


def _series_grid(executed: list[ExecutedJob], actual: dict[str, object], t0: float, res: float):
    start = min(e.start for e in executed)
    stop = max(e.end for e in executed)
    first = t0 + math.floor((start - t0) / res) * res
    n_cells = int(math.ceil((stop - first) / res))
    timestamps = first + res * np.arange(n_cells + 1)
    bins = np.zeros(n_cells)
    for e in executed:
        series = actual[e.decision.region]
        i0 = int((e.start - first) // res)
        i1 = int(math.ceil((e.end - first) / res))
        edges = first + res * np.arange(i0, i1 + 1)
        overlap = np.clip(np.minimum(e.end, edges[1:]) - np.maximum(e.start, edges[:-1]), 0.0, None)
        j0 = int(round((first - series.start) / res)) + i0
        bins[i0:i1] += series.values[j0:j0 + (i1 - i0)] * overlap / HOUR
    cumulative = np.concatenate([[0.0], np.cumsum(bins)])
    starts = np.sort([e.start for e in executed])
    ends = np.sort([e.end for e in executed])
    running = np.searchsorted(starts, timestamps, side="right") - np.searchsorted(ends, timestamps, side="right")
    return timestamps, cumulative, running


def _replay(config: SimulationConfig, strategy: StrategyConfig, data: IntensityDataset,
            regions: Sequence[str], actual_end: float) -> list[ExecutedJob]:
    uniform = config.buffer_policy is BufferPolicy.PAPER_UNIFORM
    params = config.params
    if uniform:
        params = replace(params, estimator=replace(params.estimator, b_max=0.0, b_min=0.0))
    histories: dict[WorkflowKey, WorkflowHistory] = {}
    ctx = SchedulingContext(regions, data, histories, params, RoundRobinState())
    pending: list[tuple[float, int, ExecutionRecord]] = []
    executed = []
    for n, job in enumerate(config.jobs):
        if uniform:
            request = _paper_uniform_request(job, strategy)
        else:
            while pending and pending[0][0] <= job.arrival:
                rec = heapq.heappop(pending)[2]
                histories.setdefault(rec.workflow, WorkflowHistory(rec.workflow)).append(rec)
            request = job
            if config.default_annotation is not None and job.annotation == Annotation():
                request = replace(job, annotation=config.default_annotation)
            request = request.for_scheduler()
        try:
            decision = decide(request, strategy, ctx)
        except InfeasibleDeadline:
            # deadline tighter than the estimate: run now in the best region
            estimate = estimate_duration(request.annotation, histories.get(job.workflow), params.estimator)
            decision = replace(
                decide_location_shift(request, regions, data, estimate),
                strategy=strategy.label,
            )
        actual_duration = job.true_duration
        series = data.series(decision.region, Kind.ACTUAL)
        actual = series.integrate(decision.start, actual_duration)
        end = decision.start + actual_duration
        violated = decision.deadline is not None and end > decision.deadline
        executed.append(ExecutedJob(decision, actual_duration, actual,
                                    decision.predicted_emissions, violated, end > actual_end))
        if not uniform:
            heapq.heappush(pending, (end, n, ExecutionRecord(job.workflow, decision.start, actual_duration)))
    return executed


def run_simulation(config: SimulationConfig) -> EmissionsReport:
    if not config.jobs:
        raise EmptyTrace("no jobs to simulate")
    if any(j.true_duration is None for j in config.jobs):
        raise InvalidConfig("every simulated job needs a true_duration")
    arrivals = [j.arrival for j in config.jobs]
    if arrivals != sorted(arrivals):
        raise InvalidConfig("jobs must be sorted by arrival")
    dataset = config.intensity.require_complete()
    start, actual_end = dataset.coverage
    if arrivals[0] < start:
        raise CoverageGap(f"first job arrives at {format_instant(arrivals[0])}, "
                          f"before data starts at {format_instant(start)}")
    if arrivals[-1] >= actual_end:
        raise CoverageGap(f"last job arrives at {format_instant(arrivals[-1])}, "
                          f"after data ends at {format_instant(actual_end)}")
    regions = list(config.regions) if config.regions else list(dataset.regions)

    strategies = list(config.strategies)
    if not any(s.kind is StrategyKind.ROUND_ROBIN for s in strategies):
        strategies.insert(0, StrategyConfig(StrategyKind.ROUND_ROBIN))
    labels = [s.label for s in strategies]
    if len(set(labels)) != len(labels):
        raise InvalidConfig(f"duplicate strategies: {labels}")
    baseline = next(s.label for s in strategies if s.kind is StrategyKind.ROUND_ROBIN)
    config = replace(config, strategies=strategies)

    # jobs running past the data are charged at the last known value and flagged
    data = dataset.extended_to(_horizon(config))
    actual = {r: data.series(r, Kind.ACTUAL) for r in regions}

    runs = {}
    for s in strategies:
        executed = _replay(config, s, data, regions, actual_end)
        runs[s.label] = (s, executed)

    base_total = math.fsum(e.actual_emissions for e in runs[baseline][1])
    reports = {}
    for label, (s, executed) in runs.items():
        total = math.fsum(e.actual_emissions for e in executed)
        improvement = 0.0 if label == baseline or base_total == 0 else 1.0 - total / base_total
        timestamps, cumulative, running = _series_grid(executed, actual, data.coverage[0], data.resolution)
        reports[label] = StrategyReport(
            label=label,
            strategy=s,
            executed=executed,
            total_actual_emissions=total,
            relative_improvement=improvement,
            timestamps=timestamps,
            cumulative_emissions=cumulative,
            running_jobs=running,
            fallback_count=sum(e.decision.fallback for e in executed),
            deadline_violation_count=sum(e.deadline_violated for e in executed),
            coverage_gap_count=sum(e.coverage_gap for e in executed),
        )
    return EmissionsReport(baseline, reports)
