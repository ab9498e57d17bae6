"""CI/CD jobs, execution traces and carbon-aware workflow annotations."""

from __future__ import annotations

import csv
import re
import textwrap
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .errors import (
    BadDurationLiteral,
    MalformedRow,
    NonPositiveDuration,
    UnknownRegionFormat,
    UnparseableDocument,
)
from .timeutil import DAY, HOUR, format_instant, parse_instant

TRACE_HEADER = ("repo", "workflow", "start", "duration_s")


@dataclass(frozen=True, order=True)
class WorkflowKey:
    repo: str
    workflow_name: str

    def __post_init__(self):
        if not self.repo or not self.workflow_name:
            raise ValueError("repo and workflow_name must be non-empty")

    def __str__(self) -> str:
        return f"{self.repo}:{self.workflow_name}"


@dataclass(frozen=True)
class ExecutionRecord:
    workflow: WorkflowKey
    start: float
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise NonPositiveDuration(f"{self.workflow}: duration must be > 0, got {self.duration}")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class Annotation:
    """User-supplied hints; every field optional.

    ``deadline_offset`` is relative to the request's arrival.
    ``allowed_regions`` of ``None`` means every region is allowed.
    """

    carbon_aware: bool = False
    duration_estimate: float | None = None
    deadline_offset: float | None = None
    allowed_regions: frozenset[str] | None = None

    def __post_init__(self):
        if self.duration_estimate is not None and not self.duration_estimate > 0:
            raise BadDurationLiteral("duration estimate must be positive")
        if self.deadline_offset is not None and not self.deadline_offset > 0:
            raise BadDurationLiteral("deadline must be positive")
        if self.allowed_regions is not None:
            regions = frozenset(self.allowed_regions)
            for r in regions:
                _check_region_token(r)
            object.__setattr__(self, "allowed_regions", regions)


@dataclass(frozen=True)
class JobRequest:
    workflow: WorkflowKey
    arrival: float
    annotation: Annotation = field(default_factory=Annotation)
    job_id: str = ""
    # Simulator ground truth only; strip with ``for_scheduler()`` before deciding.
    true_duration: float | None = None

    def __post_init__(self):
        if self.true_duration is not None and not self.true_duration > 0:
            raise NonPositiveDuration(f"true_duration must be > 0, got {self.true_duration}")

    def for_scheduler(self) -> "JobRequest":
        if self.true_duration is None:
            return self
        return replace(self, true_duration=None)


@dataclass
class WorkflowHistory:
    workflow: WorkflowKey
    records: list[ExecutionRecord] = field(default_factory=list)

    def __post_init__(self):
        self.records.sort(key=lambda r: r.start)

    def __len__(self) -> int:
        return len(self.records)

    def durations(self) -> list[float]:
        return [r.duration for r in self.records]

    def append(self, record: ExecutionRecord) -> None:
        if record.workflow != self.workflow:
            raise ValueError(f"record for {record.workflow} appended to history of {self.workflow}")
        self.records.append(record)
        if len(self.records) > 1 and self.records[-2].start > record.start:
            self.records.sort(key=lambda r: r.start)

    def before(self, t: float) -> "WorkflowHistory":
        """Runs that had finished by ``t``."""
        return WorkflowHistory(self.workflow, [r for r in self.records if r.end <= t])


def build_histories(records: Iterable[ExecutionRecord]) -> dict[WorkflowKey, WorkflowHistory]:
    out: dict[WorkflowKey, WorkflowHistory] = {}
    for rec in records:
        out.setdefault(rec.workflow, WorkflowHistory(rec.workflow)).records.append(rec)
    for hist in out.values():
        hist.records.sort(key=lambda r: r.start)
    return out


# --- trace CSV -------------------------------------------------------------

def _sort_key(job: JobRequest):
    return (job.arrival, job.workflow.repo, job.workflow.workflow_name)


def load_trace_csv(path: str | Path) -> list[JobRequest]:
    """Read ``repo,workflow,start,duration_s`` into arrival-ordered requests."""
    path = Path(path)
    rows: list[tuple[WorkflowKey, float, float]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(TRACE_HEADER) - set(reader.fieldnames):
            raise MalformedRow(f"{path}: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                key = WorkflowKey(row["repo"].strip(), row["workflow"].strip())
                start = parse_instant(row["start"])
                duration = float(row["duration_s"])
            except (AttributeError, TypeError, ValueError) as exc:
                raise MalformedRow(f"{path}:{lineno}: {exc}") from None
            if not duration > 0:
                raise NonPositiveDuration(f"{path}:{lineno}: duration must be > 0, got {duration}")
            rows.append((key, start, duration))
    jobs = [JobRequest(key, start, true_duration=d) for key, start, d in rows]
    jobs.sort(key=_sort_key)
    return [replace(j, job_id=f"job-{i:06d}") for i, j in enumerate(jobs)]


def write_trace_csv(jobs: Iterable[JobRequest], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for j in jobs:
            if j.true_duration is None:
                raise NonPositiveDuration(f"{j.job_id or j.workflow}: no duration to write")
            writer.writerow((j.workflow.repo, j.workflow.workflow_name,
                             format_instant(j.arrival), repr(float(j.true_duration))))


def records_from_jobs(jobs: Iterable[JobRequest]) -> list[ExecutionRecord]:
    return [ExecutionRecord(j.workflow, j.arrival, j.true_duration)
            for j in jobs if j.true_duration is not None]


def synthesize_trace(
    n_jobs: int,
    start: float,
    span_s: float,
    *,
    seed: int = 0,
    n_workflows: int = 8,
    nightly_fraction: float = 0.25,
    min_duration_s: int = 60,
    max_duration_s: int = 2 * 3600,
) -> list[JobRequest]:
    """Random CI trace: push-triggered jobs plus a few nightly workflows.

    Arrivals fall in ``[start, start + span_s)``; durations are integer
    seconds drawn log-uniformly from ``[min_duration_s, max_duration_s]``.
    """
    rng = np.random.default_rng(seed)
    keys = [WorkflowKey(f"org{i % 3}/repo{i}", f"ci-{i}") for i in range(n_workflows)]
    n_nightly = int(round(n_jobs * nightly_fraction))
    jobs: list[JobRequest] = []
    lo, hi = np.log(min_duration_s), np.log(max_duration_s)
    n_days = max(int(span_s // DAY), 1)
    for i in range(n_jobs):
        duration = float(int(np.exp(rng.uniform(lo, hi))))
        if i < n_nightly:
            w, day = divmod(i, n_days)
            # off-hours start times cycling 19:00 .. 07:00
            hour = ((19 + w % 13) % 24) * HOUR
            jitter = float(int(rng.integers(-300, 301)))
            arrival = start + day * DAY + hour + jitter
            arrival = min(max(arrival, start), start + span_s - 1)
            key = WorkflowKey("org-nightly/build", f"nightly-{w}")
        else:
            arrival = start + float(int(rng.integers(0, int(span_s))))
            key = keys[int(rng.integers(0, len(keys)))]
        jobs.append(JobRequest(key, arrival, true_duration=max(duration, float(min_duration_s))))
    jobs.sort(key=_sort_key)
    return [replace(j, job_id=f"job-{i:06d}") for i, j in enumerate(jobs)]


# --- annotations -----------------------------------------------------------

_DURATION_RE = re.compile(r"(\d+(?:\.\d+)?)\s*([hms])", re.IGNORECASE)
_UNIT = {"h": 3600.0, "m": 60.0, "s": 1.0}
_TRUE = {"yes", "true", "on", "y", "1"}
_FALSE = {"no", "false", "off", "n", "0"}


def parse_duration(value: Any) -> float:
    """``"1h30m"`` -> 5400.0.  Bare numbers are seconds."""
    if isinstance(value, bool):
        raise BadDurationLiteral(f"not a duration: {value!r}")
    if isinstance(value, (int, float)):
        seconds = float(value)
    else:
        text = str(value).strip().replace(" ", "")
        if not text:
            raise BadDurationLiteral("empty duration")
        try:
            seconds = float(text)
        except ValueError:
            pos, seconds = 0, 0.0
            for m in _DURATION_RE.finditer(text):
                if m.start() != pos:
                    raise BadDurationLiteral(f"bad duration literal {value!r}") from None
                seconds += float(m.group(1)) * _UNIT[m.group(2).lower()]
                pos = m.end()
            if pos != len(text):
                raise BadDurationLiteral(f"bad duration literal {value!r}") from None
    if not seconds > 0:
        raise BadDurationLiteral(f"duration must be positive: {value!r}")
    return seconds


def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise UnparseableDocument(f"carbon-aware must be yes/no, got {value!r}")


def _check_region_token(token: Any) -> str:
    if not isinstance(token, str) or not token or any(c.isspace() for c in token):
        raise UnknownRegionFormat(f"bad region token {token!r}")
    return token


def parse_regions(value: Any) -> frozenset[str]:
    if isinstance(value, str):
        tokens = [t.strip() for t in value.strip().strip("[]").split(",")]
    elif isinstance(value, (list, tuple, set, frozenset)):
        tokens = list(value)
    else:
        raise UnknownRegionFormat(f"allowed-regions must be a list, got {value!r}")
    return frozenset(_check_region_token(t) for t in tokens)


@dataclass
class _Hints:
    carbon_aware: bool | None = None
    duration: float | None = None
    deadline: float | None = None
    regions: frozenset[str] | None = None


def _read_hints(block: Mapping[str, Any]) -> _Hints:
    h = _Hints()
    if "carbon-aware" in block:
        h.carbon_aware = _parse_bool(block["carbon-aware"])
    if "duration" in block:
        h.duration = parse_duration(block["duration"])
    if "deadline" in block:
        h.deadline = parse_duration(block["deadline"])
    if "allowed-regions" in block:
        h.regions = parse_regions(block["allowed-regions"])
    return h


def _step_hints(steps: Any) -> list[_Hints]:
    out = []
    if not isinstance(steps, list):
        return out
    for step in steps:
        if not isinstance(step, Mapping):
            continue
        merged = _read_hints(step)
        with_block = step.get("with")
        if isinstance(with_block, Mapping):
            inner = _read_hints(with_block)
            for attr in ("carbon_aware", "duration", "deadline", "regions"):
                if getattr(inner, attr) is not None:
                    setattr(merged, attr, getattr(inner, attr))
        out.append(merged)
    return out


def _merge(workflow: _Hints, job: _Hints, steps: Sequence[_Hints]) -> Annotation:
    def pick(attr):
        for h in (job, workflow):
            if getattr(h, attr) is not None:
                return getattr(h, attr)
        return None

    step_durations = [s.duration for s in steps if s.duration is not None]
    step_deadlines = [s.deadline for s in steps if s.deadline is not None]
    step_regions = [s.regions for s in steps if s.regions is not None]
    step_aware = [s.carbon_aware for s in steps if s.carbon_aware is not None]

    duration = sum(step_durations) if step_durations else pick("duration")
    deadline = min(step_deadlines) if step_deadlines else pick("deadline")
    if step_regions:
        regions = frozenset.intersection(*step_regions)
        if not regions:
            raise UnknownRegionFormat("steps allow disjoint region sets")
    else:
        regions = pick("regions")
    aware = pick("carbon_aware")
    if aware is None and step_aware:
        aware = all(step_aware)
    return Annotation(bool(aware), duration, deadline, regions)


def _load_document(doc: str) -> Mapping[str, Any]:
    try:
        docs = [d for d in yaml.safe_load_all(textwrap.dedent(doc)) if d is not None]
    except yaml.YAMLError as exc:
        raise UnparseableDocument(f"invalid YAML: {exc}") from None
    if not docs:
        return {}
    if not isinstance(docs[0], Mapping):
        raise UnparseableDocument("workflow definition must be a mapping")
    return docs[0]


def parse_annotations(doc: str) -> dict[str, Annotation]:
    """Annotation for every job of a workflow definition, keyed by job id."""
    root = _load_document(doc)
    top = _read_hints(root)
    jobs = root.get("jobs") or {}
    if not isinstance(jobs, Mapping):
        raise UnparseableDocument("'jobs' must be a mapping")
    out = {}
    for name, body in jobs.items():
        if body is None:
            body = {}
        if not isinstance(body, Mapping):
            raise UnparseableDocument(f"job {name!r} must be a mapping")
        out[str(name)] = _merge(top, _read_hints(body), _step_hints(body.get("steps")))
    return out


def parse_annotation(doc: str, job: str | None = None) -> Annotation:
    """Carbon-aware hints of one job (default: the first job in the document).

    Step-level values win over job-level ones; step durations add up and the
    tightest step deadline applies.  Documents without hints give defaults.
    """
    per_job = parse_annotations(doc)
    if job is not None:
        if job not in per_job:
            raise UnparseableDocument(f"no job named {job!r}")
        return per_job[job]
    if not per_job:
        return _merge(_read_hints(_load_document(doc)), _Hints(), [])
    return next(iter(per_job.values()))


def sample_trace_path() -> Path:
    """The 50-job sample trace shipped with the package."""
    return Path(__file__).parent / "data" / "sample_trace.csv"
