"""Duration estimates, implicit deadlines, dependency guesses and job classes.

All functions are pure over immutable inputs.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .config import load_kv_config
from .errors import InvalidConfig, NoEstimateAvailable
from .timeutil import DAY, parse_clock, time_of_day
from .workflow import Annotation, JobRequest, WorkflowHistory, WorkflowKey


class EstimateSource(str, Enum):
    USER_ONLY = "user_only"
    HISTORY_ONLY = "history_only"
    BLENDED = "blended"


class DeadlineBasis(str, Enum):
    USER_PROVIDED = "user_provided"
    NIGHT_WINDOW = "night_window"
    NONE = "none"


class JobClass(str, Enum):
    PERIODIC = "periodic"
    FLEXIBLE_WINDOW = "flexible_window"
    INFLEXIBLE = "inflexible"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class DurationEstimate:
    expected: float
    buffer: float
    source: EstimateSource
    n_history: int

    @property
    def total(self) -> float:
        return self.expected + self.buffer

    @classmethod
    def exact(cls, seconds: float) -> "DurationEstimate":
        """An estimate with no buffer, for callers that know the true runtime."""
        return cls(float(seconds), 0.0, EstimateSource.USER_ONLY, 0)


@dataclass(frozen=True)
class InferredDeadline:
    deadline: float | None
    basis: DeadlineBasis


@dataclass(frozen=True)
class DependencyGuess:
    upstream: WorkflowKey
    downstream: WorkflowKey
    max_gap: float
    support: int


@dataclass
class EstimatorParams:
    b_max: float = 0.5
    b_min: float = 0.1
    office_start_utc: float = 8 * 3600.0
    office_end_utc: float = 18 * 3600.0
    dep_max_gap_s: float = 300.0
    dep_min_support: int = 3
    periodic_tolerance_s: float = 900.0
    periodic_min_runs: int = 3
    # Tighten night-window deadlines using guessed downstream jobs.
    shrink_by_dependencies: bool = False

    def __post_init__(self):
        if not 0 <= self.b_min <= self.b_max:
            raise InvalidConfig(f"need 0 <= b_min <= b_max, got {self.b_min}, {self.b_max}")
        if self.dep_min_support < 1 or self.periodic_min_runs < 1:
            raise InvalidConfig("support thresholds must be >= 1")

    @classmethod
    def from_mapping(cls, data: Mapping[str, object]) -> "EstimatorParams":
        known = {f.name: f for f in fields(cls)}
        kw: dict[str, object] = {}
        try:
            for key, raw in data.items():
                if key not in known:
                    continue
                if key in ("office_start_utc", "office_end_utc"):
                    kw[key] = parse_clock(raw)
                elif key in ("dep_min_support", "periodic_min_runs"):
                    kw[key] = int(raw)
                elif key == "shrink_by_dependencies":
                    kw[key] = str(raw).strip().lower() in ("1", "true", "yes", "on")
                else:
                    kw[key] = float(raw)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad estimator config: {exc}") from None
        return cls(**kw)

    @classmethod
    def from_file(cls, path: str | Path) -> "EstimatorParams":
        return cls.from_mapping(load_kv_config(path))


def buffer_fraction(n: int, params: EstimatorParams) -> float:
    return min(max(params.b_max / (1 + n), params.b_min), params.b_max)


def estimate_duration(
    annotation: Annotation,
    history: WorkflowHistory | None,
    params: EstimatorParams | None = None,
) -> DurationEstimate:
    """Blend a user estimate with the historical mean.

    The user weight is ``1/(1+n)`` for ``n`` past runs, and the safety buffer
    is ``clamp(b_max/(1+n), b_min, b_max)`` of the expected runtime.
    """
    params = params or EstimatorParams()
    durations = history.durations() if history is not None else []
    n = len(durations)
    u = annotation.duration_estimate
    if u is None and n == 0:
        raise NoEstimateAvailable("no user estimate and no history")
    if n:
        mean = math.fsum(durations) / n
    if u is None:
        expected, source = mean, EstimateSource.HISTORY_ONLY
    elif n == 0:
        expected, source = float(u), EstimateSource.USER_ONLY
    else:
        expected, source = mean + (u - mean) / (1 + n), EstimateSource.BLENDED

    unclamped = params.b_max / (1 + n)
    if unclamped < params.b_min:
        buffer = expected * params.b_min
    else:
        buffer = expected * params.b_max / (1 + n)
    return DurationEstimate(expected, buffer, source, n)


# --- office hours ----------------------------------------------------------

def in_off_hours(t: float, params: EstimatorParams) -> bool:
    tod = time_of_day(t)
    start, end = params.office_start_utc, params.office_end_utc
    if start <= end:
        return not start <= tod < end
    return end <= tod < start


def next_office_start(t: float, params: EstimatorParams) -> float:
    """First office-hours start strictly after ``t``."""
    candidate = t - time_of_day(t) + params.office_start_utc
    while candidate <= t:
        candidate += DAY
    return candidate


def _next_time_of_day(t: float, tod: float) -> float:
    candidate = t - time_of_day(t) + tod
    while candidate <= t:
        candidate += DAY
    return candidate


def infer_deadline(
    request: JobRequest,
    history: WorkflowHistory | None,
    params: EstimatorParams | None = None,
    *,
    dependencies: Iterable[DependencyGuess] = (),
    histories: Mapping[WorkflowKey, WorkflowHistory] | None = None,
) -> InferredDeadline:
    params = params or EstimatorParams()
    offset = request.annotation.deadline_offset
    if offset is not None:
        return InferredDeadline(request.arrival + offset, DeadlineBasis.USER_PROVIDED)
    if history is None or not history.records:
        return InferredDeadline(None, DeadlineBasis.NONE)
    for rec in history.records:
        if not in_off_hours(rec.start, params) or rec.end > next_office_start(rec.start, params):
            return InferredDeadline(None, DeadlineBasis.NONE)

    deadline = next_office_start(request.arrival, params)
    if params.shrink_by_dependencies and histories:
        for guess in dependencies:
            if guess.upstream != request.workflow or guess.downstream not in histories:
                continue
            down = histories[guess.downstream].records
            if not down:
                continue
            # earliest downstream start counted from the end of office hours
            tod = min(
                (time_of_day(r.start) for r in down),
                key=lambda x: (x - params.office_end_utc) % DAY,
            )
            cap = _next_time_of_day(request.arrival, tod) - guess.max_gap
            if request.arrival < cap < deadline:
                deadline = cap
    return InferredDeadline(deadline, DeadlineBasis.NIGHT_WINDOW)


# --- dependencies ----------------------------------------------------------

def _match_pairs(up: WorkflowHistory, down: WorkflowHistory, max_gap: float) -> list[float]:
    starts = [r.start for r in down.records]
    used = [False] * len(starts)
    gaps = []
    for a in sorted(up.records, key=lambda r: r.end):
        i = bisect.bisect_right(starts, a.end)
        while i < len(starts) and starts[i] - a.end <= max_gap:
            if not used[i]:
                used[i] = True
                gaps.append(starts[i] - a.end)
                break
            i += 1
    return gaps


def infer_dependencies(
    histories: Mapping[WorkflowKey, WorkflowHistory],
    params: EstimatorParams | None = None,
) -> list[DependencyGuess]:
    """Guess ``upstream -> downstream`` pairs from start/finish timing.

    A pair is reported when at least ``dep_min_support`` downstream runs start
    within ``(0, dep_max_gap_s]`` after distinct upstream runs end.
    """
    params = params or EstimatorParams()
    keys = sorted(histories)
    out = []
    for a in keys:
        for b in keys:
            if a == b:
                continue
            gaps = _match_pairs(histories[a], histories[b], params.dep_max_gap_s)
            if len(gaps) >= params.dep_min_support:
                out.append(DependencyGuess(a, b, max(gaps), len(gaps)))
    return out


# --- classification --------------------------------------------------------

def _circular_distance(a: float, b: float) -> float:
    d = abs(a - b) % DAY
    return min(d, DAY - d)


def is_periodic(history: WorkflowHistory | None, params: EstimatorParams) -> bool:
    if history is None or len(history) < params.periodic_min_runs:
        return False
    runs = [(time_of_day(r.start), int(r.start // DAY)) for r in history.records]
    for anchor, _ in runs:
        days = {day for tod, day in runs
                if _circular_distance(tod, anchor) <= params.periodic_tolerance_s}
        if len(days) >= params.periodic_min_runs:
            return True
    return False


def classify_job(
    request: JobRequest,
    history: WorkflowHistory | None,
    params: EstimatorParams | None = None,
) -> JobClass:
    params = params or EstimatorParams()
    n = len(history) if history is not None else 0
    if n == 0 and request.annotation.duration_estimate is None:
        return JobClass.UNKNOWN
    if is_periodic(history, params):
        return JobClass.PERIODIC
    if infer_deadline(request, history, params).basis is not DeadlineBasis.NONE:
        return JobClass.FLEXIBLE_WINDOW
    return JobClass.INFLEXIBLE
