"""Decision engine: preprocess a request, then pick (region, start time).

Planning uses FORECAST intensity only; ACTUAL intensity is for accounting.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .carbon import IntensityDataset, Kind
from .errors import InfeasibleDeadline, InvalidConfig, NoEstimateAvailable, NoRegions
from .estimator import (
    DeadlineBasis,
    DependencyGuess,
    DurationEstimate,
    EstimatorParams,
    JobClass,
    classify_job,
    estimate_duration,
    infer_deadline,
)
from .workflow import JobRequest, WorkflowHistory, WorkflowKey

# Candidates within this relative distance of the minimum count as ties.
TIE_RTOL = 1e-12


class StrategyKind(str, Enum):
    ROUND_ROBIN = "round_robin"
    LOCATION = "location"
    LOCATION_TIME = "location_time"


@dataclass(frozen=True)
class StrategyConfig:
    kind: StrategyKind
    buffer_hours: float | None = None
    slot_s: float = 300.0

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.kind is StrategyKind.LOCATION_TIME:
            if self.buffer_hours is None or not self.buffer_hours > 0:
                raise InvalidConfig("location_time strategy needs buffer_hours > 0")
        if not self.slot_s > 0:
            raise InvalidConfig("slot_s must be positive")

    @property
    def label(self) -> str:
        if self.kind is StrategyKind.LOCATION_TIME:
            return f"location_time_{self.buffer_hours:g}h"
        return self.kind.value

    @classmethod
    def parse_list(
        cls, names: Sequence[str], buffers: Sequence[float] = (1, 3, 6), slot_s: float = 300.0
    ) -> list["StrategyConfig"]:
        """``["round_robin", "location", "location_time"]`` -> configs.

        ``location_time`` expands to one config per buffer.
        """
        out = []
        for name in names:
            try:
                kind = StrategyKind(name.strip())
            except ValueError:
                raise InvalidConfig(f"unknown strategy {name!r}") from None
            if kind is StrategyKind.LOCATION_TIME:
                out.extend(cls(kind, float(b), slot_s) for b in buffers)
            else:
                out.append(cls(kind, None, slot_s))
        return out


class RoundRobinState:
    """Rotation counter; one per logical decision stream."""

    def __init__(self, counter: int = 0):
        self.counter = counter
        self._lock = threading.Lock()

    def take(self) -> int:
        with self._lock:
            i = self.counter
            self.counter += 1
            return i

    def __deepcopy__(self, memo):
        return RoundRobinState(self.counter)


class PreprocessReason(str, Enum):
    ELIGIBLE = "eligible"
    NOT_CARBON_AWARE = "not_carbon_aware"
    UNKNOWN = "unknown"
    TOO_SHORT = "too_short"
    NO_FLEXIBILITY = "no_flexibility"


@dataclass(frozen=True)
class PreprocessOutcome:
    reason: PreprocessReason

    @property
    def eligible(self) -> bool:
        return self.reason is PreprocessReason.ELIGIBLE


@dataclass
class SchedulerParams:
    min_duration_s: float = 60.0
    estimator: EstimatorParams = field(default_factory=EstimatorParams)


@dataclass(frozen=True)
class ScheduleDecision:
    job: JobRequest
    region: str
    start: float
    estimated_duration: float | None
    deadline: float | None
    predicted_emissions: float | None
    fallback: bool
    strategy: str = ""
    reason: PreprocessReason | None = None


@dataclass
class SchedulingContext:
    regions: Sequence[str]
    dataset: IntensityDataset
    histories: Mapping[WorkflowKey, WorkflowHistory] = field(default_factory=dict)
    params: SchedulerParams = field(default_factory=SchedulerParams)
    rotation: RoundRobinState = field(default_factory=RoundRobinState)
    dependencies: Sequence[DependencyGuess] = ()


def _allowed(request: JobRequest, regions: Sequence[str]) -> list[str]:
    if not regions:
        raise NoRegions("no regions configured")
    allowed = request.annotation.allowed_regions
    out = [r for r in regions if allowed is None or r in allowed]
    if not out:
        raise NoRegions(f"{request.workflow}: none of {sorted(allowed)} is available")
    return out


def first_minimum(values: np.ndarray) -> int:
    """Index of the first entry tying (within TIE_RTOL) with the minimum."""
    flat = np.asarray(values, dtype=float).ravel()
    tol = TIE_RTOL * max(float(np.abs(flat).max()), 1.0)
    return int(np.flatnonzero(flat <= flat.min() + tol)[0])


def _try_estimate(request, history, params: SchedulerParams) -> DurationEstimate | None:
    try:
        return estimate_duration(request.annotation, history, params.estimator)
    except NoEstimateAvailable:
        return None


def preprocess(
    request: JobRequest,
    history: WorkflowHistory | None,
    params: SchedulerParams | None = None,
    *,
    require_deadline: bool = False,
) -> PreprocessOutcome:
    """Filter requests that cannot or should not be carbon-scheduled.

    An unknown job (no history, no user estimate) is reported as UNKNOWN even
    when it is also not carbon-aware, so it lands on round-robin.
    """
    params = params or SchedulerParams()
    if classify_job(request, history, params.estimator) is JobClass.UNKNOWN:
        return PreprocessOutcome(PreprocessReason.UNKNOWN)
    if not request.annotation.carbon_aware:
        return PreprocessOutcome(PreprocessReason.NOT_CARBON_AWARE)
    estimate = estimate_duration(request.annotation, history, params.estimator)
    if estimate.expected < params.min_duration_s:
        return PreprocessOutcome(PreprocessReason.TOO_SHORT)
    if require_deadline:
        if infer_deadline(request, history, params.estimator).basis is DeadlineBasis.NONE:
            return PreprocessOutcome(PreprocessReason.NO_FLEXIBILITY)
    return PreprocessOutcome(PreprocessReason.ELIGIBLE)


def decide_round_robin(
    request: JobRequest,
    regions: Sequence[str],
    counter: RoundRobinState,
    dataset: IntensityDataset | None = None,
    estimate: DurationEstimate | None = None,
    *,
    index: int | None = None,
) -> ScheduleDecision:
    """Rotate through ``regions``; start immediately.

    ``index`` lets a caller that already drew from ``counter`` reuse its slot.
    """
    allowed = _allowed(request, regions)
    if index is None:
        index = counter.take()
    region = allowed[index % len(allowed)]
    predicted = None
    if dataset is not None and estimate is not None:
        predicted = dataset.series(region, Kind.FORECAST).integrate(request.arrival, estimate.total)
    return ScheduleDecision(
        job=request,
        region=region,
        start=request.arrival,
        estimated_duration=estimate.total if estimate else None,
        deadline=None,
        predicted_emissions=predicted,
        fallback=True,
        strategy=StrategyKind.ROUND_ROBIN.value,
    )


def decide_location_shift(
    request: JobRequest,
    regions: Sequence[str],
    dataset: IntensityDataset,
    estimate: DurationEstimate | None = None,
) -> ScheduleDecision:
    """Start now in the cleanest allowed region.

    With a duration estimate the region minimising forecast emissions over
    ``[arrival, arrival + estimate.total)`` wins; without one, the lowest
    forecast intensity at arrival.  Ties go to the smallest region id.
    """
    allowed = sorted(_allowed(request, regions))
    t = request.arrival
    if estimate is not None:
        costs = np.array([
            dataset.series(r, Kind.FORECAST).integrate(t, estimate.total) for r in allowed
        ])
    else:
        costs = np.array([dataset.series(r, Kind.FORECAST).value_at(t) for r in allowed])
    i = first_minimum(costs)
    return ScheduleDecision(
        job=request,
        region=allowed[i],
        start=t,
        estimated_duration=estimate.total if estimate else None,
        deadline=None,
        predicted_emissions=float(costs[i]) if estimate is not None else None,
        fallback=False,
        strategy=StrategyKind.LOCATION.value,
    )


def candidate_starts(arrival: float, deadline: float, total: float, slot_s: float) -> np.ndarray:
    """``arrival + k*slot_s`` for every k whose window still meets the deadline."""
    if deadline - arrival < total:
        raise InfeasibleDeadline(
            f"window of {deadline - arrival:g}s cannot hold an estimated {total:g}s"
        )
    k = int((deadline - total - arrival) // slot_s)
    while k > 0 and arrival + k * slot_s + total > deadline:
        k -= 1
    return arrival + slot_s * np.arange(k + 1)


def decide_location_time_shift(
    request: JobRequest,
    regions: Sequence[str],
    dataset: IntensityDataset,
    estimate: DurationEstimate,
    deadline: float,
    slot_s: float = 300.0,
) -> ScheduleDecision:
    """Exhaustive search over (start slot, region) for minimal forecast emissions.

    Ties prefer the earliest start, then the smallest region id.
    """
    allowed = sorted(_allowed(request, regions))
    starts = candidate_starts(request.arrival, deadline, estimate.total, slot_s)
    costs = np.column_stack([
        dataset.series(r, Kind.FORECAST).window_integrals(starts, estimate.total)
        for r in allowed
    ])
    ci, ri = divmod(first_minimum(costs), len(allowed))
    region, start = allowed[ri], float(starts[ci])
    return ScheduleDecision(
        job=request,
        region=region,
        start=start,
        estimated_duration=estimate.total,
        deadline=deadline,
        predicted_emissions=dataset.series(region, Kind.FORECAST).integrate(start, estimate.total),
        fallback=False,
        strategy=StrategyKind.LOCATION_TIME.value,
    )


def _tag(decision: ScheduleDecision, strategy: StrategyConfig, reason) -> ScheduleDecision:
    return replace(decision, strategy=strategy.label, reason=reason)


def decide(request: JobRequest, strategy: StrategyConfig, context: SchedulingContext) -> ScheduleDecision:
    """Dispatch one request under ``strategy``.

    Every call draws exactly one slot from the rotation counter, whatever the
    strategy, so a round-robin fallback for the k-th request lands on the same
    region the pure round-robin baseline would use.
    """
    index = context.rotation.take()
    history = context.histories.get(request.workflow)
    params = context.params
    estimate = _try_estimate(request, history, params)

    if strategy.kind is StrategyKind.ROUND_ROBIN:
        d = decide_round_robin(request, context.regions, context.rotation,
                               context.dataset, estimate, index=index)
        return _tag(d, strategy, None)

    outcome = preprocess(request, history, params,
                         require_deadline=strategy.kind is StrategyKind.LOCATION_TIME)
    if outcome.reason is PreprocessReason.UNKNOWN:
        d = decide_round_robin(request, context.regions, context.rotation,
                               context.dataset, estimate, index=index)
        return _tag(d, strategy, outcome.reason)
    if not outcome.eligible or strategy.kind is StrategyKind.LOCATION:
        d = decide_location_shift(request, context.regions, context.dataset, estimate)
        return _tag(d, strategy, outcome.reason)

    deadline = infer_deadline(
        request, history, params.estimator,
        dependencies=context.dependencies, histories=context.histories,
    ).deadline
    d = decide_location_time_shift(request, context.regions, context.dataset,
                                   estimate, deadline, strategy.slot_s)
    return _tag(d, strategy, outcome.reason)
