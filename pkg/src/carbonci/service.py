"""JSON-over-HTTP scheduling service for CI runners.

The service adds no decision logic: it turns a request message into a
:class:`JobRequest`, calls :func:`carbonci.scheduler.decide` on the current
snapshot, persists the decision and returns it.  Enforcing a deferred start
is the caller's job.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence, Union

from pydantic import BaseModel, ConfigDict

from .carbon import IntensityDataset, Kind
from .errors import (
    BadDurationLiteral,
    InfeasibleDeadline,
    InvalidConfig,
    NoRegions,
    OutOfCoverage,
    UnknownJob,
    UnknownRegion,
    UnknownRegionFormat,
    UnparseableDocument,
)
from .scheduler import (
    RoundRobinState,
    ScheduleDecision,
    SchedulerParams,
    SchedulingContext,
    StrategyConfig,
    StrategyKind,
    decide,
)
from .timeutil import HOUR, format_instant, parse_instant
from .workflow import (
    TRACE_HEADER,
    Annotation,
    ExecutionRecord,
    JobRequest,
    WorkflowHistory,
    WorkflowKey,
    build_histories,
    load_trace_csv,
    parse_duration,
    parse_regions,
    records_from_jobs,
)

log = logging.getLogger(__name__)


# --- wire messages -----------------------------------------------------------

class ScheduleRequestMessage(BaseModel):
    model_config = ConfigDict(extra="ignore")

    repo: str
    workflow: str
    arrival: str | None = None
    carbon_aware: bool = False
    duration: Union[float, str, None] = None
    deadline: Union[float, str, None] = None
    allowed_regions: list[str] | None = None
    strategy: str | None = None


class DecisionBasis(BaseModel):
    strategy: str
    reason: str | None


class ScheduleResponseMessage(BaseModel):
    job_id: str
    region: str
    arrival: str
    start: str
    estimated_duration: float | None
    deadline: str | None
    predicted_emissions_reu: float | None
    fallback: bool
    decision_basis: DecisionBasis


class CompletionMessage(BaseModel):
    job_id: str
    actual_duration: float
    measured_energy: float | None = None


class CompletionAck(BaseModel):
    job_id: str
    actual_emissions_reu: float
    predicted_emissions_reu: float | None
    delta_reu: float | None


def request_from_message(msg: ScheduleRequestMessage, now: float, job_id: str = "") -> JobRequest:
    """Raises BadDurationLiteral / UnknownRegionFormat for malformed hints."""
    try:
        key = WorkflowKey(msg.repo.strip(), msg.workflow.strip())
    except ValueError as exc:
        raise UnparseableDocument(str(exc)) from None
    try:
        arrival = parse_instant(msg.arrival) if msg.arrival else now
    except ValueError:
        raise UnparseableDocument(f"bad arrival timestamp {msg.arrival!r}") from None
    ann = Annotation(
        carbon_aware=msg.carbon_aware,
        duration_estimate=parse_duration(msg.duration) if msg.duration is not None else None,
        deadline_offset=parse_duration(msg.deadline) if msg.deadline is not None else None,
        allowed_regions=parse_regions(msg.allowed_regions) if msg.allowed_regions is not None else None,
    )
    return JobRequest(key, arrival, ann, job_id=job_id)


def decision_to_message(decision: ScheduleDecision) -> ScheduleResponseMessage:
    return ScheduleResponseMessage(
        job_id=decision.job.job_id,
        region=decision.region,
        arrival=format_instant(decision.job.arrival),
        start=format_instant(decision.start),
        estimated_duration=decision.estimated_duration,
        deadline=format_instant(decision.deadline) if decision.deadline is not None else None,
        predicted_emissions_reu=decision.predicted_emissions,
        fallback=decision.fallback,
        decision_basis=DecisionBasis(
            strategy=decision.strategy,
            reason=decision.reason.value if decision.reason is not None else None,
        ),
    )


# --- persistence -------------------------------------------------------------

class HistoryStore:
    """Append-only execution history, backed by a trace-schema CSV when given a path."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        records: list[ExecutionRecord] = []
        if self.path is not None and self.path.exists() and self.path.stat().st_size:
            records = records_from_jobs(load_trace_csv(self.path))
        self.histories: dict[WorkflowKey, WorkflowHistory] = build_histories(records)

    def __len__(self) -> int:
        return sum(len(h) for h in self.histories.values())

    def append(self, record: ExecutionRecord) -> None:
        self.histories.setdefault(record.workflow, WorkflowHistory(record.workflow)).append(record)
        if self.path is None:
            return
        new = not self.path.exists() or self.path.stat().st_size == 0
        with open(self.path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(TRACE_HEADER)
            writer.writerow((record.workflow.repo, record.workflow.workflow_name,
                             format_instant(record.start), repr(float(record.duration))))


@dataclass(frozen=True)
class PendingJob:
    job_id: str
    workflow: WorkflowKey
    region: str
    start: float
    estimated_duration: float | None
    predicted_emissions: float | None


class DecisionLog:
    """JSON-lines log of scheduled and completed jobs; rebuilds the pending set on start."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.pending: dict[str, PendingJob] = {}
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["event"] == "scheduled":
                    self.pending[event["job_id"]] = PendingJob(
                        event["job_id"], WorkflowKey(event["repo"], event["workflow"]),
                        event["region"], parse_instant(event["start"]),
                        event["estimated_duration"], event["predicted_emissions_reu"],
                    )
                elif event["event"] == "completed":
                    self.pending.pop(event["job_id"], None)

    def _write(self, event: Mapping[str, object]) -> None:
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    def scheduled(self, job: PendingJob, response: ScheduleResponseMessage) -> None:
        self.pending[job.job_id] = job
        self._write({"event": "scheduled", "repo": job.workflow.repo,
                     "workflow": job.workflow.workflow_name, **response.model_dump(mode="json")})

    def completed(self, job_id: str, ack: CompletionAck) -> None:
        self.pending.pop(job_id, None)
        self._write({"event": "completed", **ack.model_dump(mode="json")})


# --- service -----------------------------------------------------------------

@dataclass(frozen=True)
class Snapshot:
    dataset: IntensityDataset
    regions: tuple[str, ...]


class SchedulingService:
    def __init__(
        self,
        dataset: IntensityDataset,
        *,
        regions: Sequence[str] | None = None,
        strategy: StrategyConfig | None = None,
        params: SchedulerParams | None = None,
        state_dir: str | Path | None = None,
        loader: Callable[[], IntensityDataset] | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.strategy = strategy or StrategyConfig(StrategyKind.LOCATION_TIME, buffer_hours=6.0)
        self.params = params or SchedulerParams()
        self.clock = clock
        self._loader = loader
        self._snapshot = self._make_snapshot(dataset, regions)
        self._lock = threading.Lock()
        self.rotation = RoundRobinState()
        state = Path(state_dir) if state_dir else None
        if state is not None:
            state.mkdir(parents=True, exist_ok=True)
        self.history = HistoryStore(state / "history.csv" if state else None)
        self.decisions = DecisionLog(state / "decisions.jsonl" if state else None)

    @staticmethod
    def _make_snapshot(dataset: IntensityDataset, regions: Sequence[str] | None) -> Snapshot:
        dataset.require_complete()
        regions = tuple(regions) if regions else dataset.regions
        for r in regions:
            dataset.series(r, Kind.FORECAST)
        return Snapshot(dataset, regions)

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def context(self) -> SchedulingContext:
        snap = self._snapshot
        return SchedulingContext(snap.regions, snap.dataset, self.history.histories,
                                 self.params, self.rotation)

    def context_copy(self) -> SchedulingContext:
        """Detached copy of the current decision state (for audits and tests)."""
        with self._lock:
            snap = self._snapshot
            return SchedulingContext(snap.regions, snap.dataset,
                                     copy.deepcopy(self.history.histories),
                                     self.params, copy.deepcopy(self.rotation))

    def strategy_for(self, msg: ScheduleRequestMessage) -> StrategyConfig:
        if not msg.strategy:
            return self.strategy
        try:
            kind = StrategyKind(msg.strategy)
        except ValueError:
            raise UnparseableDocument(f"unknown strategy {msg.strategy!r}") from None
        if kind is self.strategy.kind:
            return self.strategy
        buffer = None
        if kind is StrategyKind.LOCATION_TIME:
            buffer = self.strategy.buffer_hours or 6.0
        return StrategyConfig(kind, buffer, self.strategy.slot_s)

    def handle_schedule(self, msg: ScheduleRequestMessage | Mapping) -> ScheduleResponseMessage:
        if not isinstance(msg, ScheduleRequestMessage):
            msg = ScheduleRequestMessage.model_validate(msg)
        strategy = self.strategy_for(msg)
        request = request_from_message(msg, self.clock(), job_id=uuid.uuid4().hex)
        with self._lock:
            decision = decide(request, strategy, self.context())
            response = decision_to_message(decision)
            self.decisions.scheduled(
                PendingJob(request.job_id, request.workflow, decision.region, decision.start,
                           decision.estimated_duration, decision.predicted_emissions),
                response,
            )
        log.info("scheduled %s %s in %s at %s", request.job_id, request.workflow,
                 decision.region, response.start)
        return response

    def handle_report_completion(
        self, job_id: str, actual_duration: float, measured_energy: float | None = None
    ) -> CompletionAck:
        """Record a finished job and compare its actual emissions with the prediction.

        ``measured_energy`` (kWh) rescales the 1 kW convention to the job's
        measured average draw.
        """
        if not actual_duration > 0:
            raise BadDurationLiteral("actual_duration must be positive")
        if measured_energy is not None and measured_energy < 0:
            raise BadDurationLiteral("measured_energy must be non-negative")
        with self._lock:
            job = self.decisions.pending.get(job_id)
            if job is None:
                raise UnknownJob(f"unknown job id {job_id!r}")
            series = self._snapshot.dataset.series(job.region, Kind.ACTUAL)
            actual = series.integrate(job.start, actual_duration)
            if measured_energy is not None:
                actual *= measured_energy / (actual_duration / HOUR)
            self.history.append(ExecutionRecord(job.workflow, job.start, actual_duration))
            delta = None if job.predicted_emissions is None else actual - job.predicted_emissions
            ack = CompletionAck(job_id=job_id, actual_emissions_reu=actual,
                                predicted_emissions_reu=job.predicted_emissions, delta_reu=delta)
            self.decisions.completed(job_id, ack)
        return ack

    def refresh_intensity(self, dataset: IntensityDataset | None = None) -> Snapshot:
        """Swap in a new dataset; in-flight requests keep the snapshot they started with."""
        if dataset is None:
            if self._loader is None:
                raise InvalidConfig("no intensity loader configured")
            dataset = self._loader()
        snapshot = self._make_snapshot(dataset, self._snapshot.regions)
        self._snapshot = snapshot
        return snapshot

    def health(self) -> dict[str, object]:
        snap = self._snapshot
        start, end = snap.dataset.coverage
        return {
            "status": "ok",
            "strategy": self.strategy.label,
            "regions": list(snap.regions),
            "coverage": [format_instant(start), format_instant(end)],
            "pending_jobs": len(self.decisions.pending),
            "history_records": len(self.history),
        }


# --- HTTP --------------------------------------------------------------------

_STATUS = (
    ((BadDurationLiteral, UnknownRegionFormat, UnparseableDocument), 400),
    ((UnknownJob,), 404),
    ((InfeasibleDeadline, NoRegions, UnknownRegion), 422),
    ((OutOfCoverage,), 503),
    ((InvalidConfig,), 500),
)


def status_for(exc: Exception) -> int:
    for types, status in _STATUS:
        if isinstance(exc, types):
            return status
    return 500


def create_app(service: SchedulingService):
    from fastapi import FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse

    from .errors import CarbonCIError

    app = FastAPI(title="carbonci scheduler")

    @app.exception_handler(CarbonCIError)
    async def _domain_error(request: Request, exc: CarbonCIError):
        return JSONResponse({"error": type(exc).__name__, "detail": str(exc)},
                            status_code=status_for(exc))

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse({"error": "BadRequest", "detail": exc.errors()}, status_code=400)

    @app.post("/v1/schedule", response_model=ScheduleResponseMessage)
    def schedule(msg: ScheduleRequestMessage):
        return service.handle_schedule(msg)

    @app.post("/v1/complete", response_model=CompletionAck)
    def complete(msg: CompletionMessage):
        return service.handle_report_completion(msg.job_id, msg.actual_duration, msg.measured_energy)

    @app.post("/admin/refresh-intensity")
    def refresh():
        snap = service.refresh_intensity()
        start, end = snap.dataset.coverage
        return {"status": "refreshed", "coverage": [format_instant(start), format_instant(end)]}

    @app.get("/v1/health")
    def health():
        return service.health()

    return app
