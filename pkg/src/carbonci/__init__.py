"""Carbon-aware scheduling for CI/CD jobs and a trace-driven strategy simulator."""

from .carbon import (
    CarbonIntensitySeries,
    IntensityDataset,
    IntensityPoint,
    Kind,
    SynthConfig,
    integrate_emissions,
    intensity_at,
    load_intensity_csv,
    synthesize_dataset,
)
from .estimator import (
    DeadlineBasis,
    DependencyGuess,
    DurationEstimate,
    EstimatorParams,
    InferredDeadline,
    JobClass,
    classify_job,
    estimate_duration,
    infer_deadline,
    infer_dependencies,
)
from .scheduler import (
    PreprocessOutcome,
    PreprocessReason,
    RoundRobinState,
    ScheduleDecision,
    SchedulerParams,
    SchedulingContext,
    StrategyConfig,
    StrategyKind,
    decide,
    decide_location_shift,
    decide_location_time_shift,
    decide_round_robin,
    preprocess,
)
from .simulator import (
    BufferPolicy,
    EmissionsReport,
    ExecutedJob,
    SimulationConfig,
    forecast_error_report,
    run_simulation,
    running_jobs_at,
)
from .workflow import (
    Annotation,
    ExecutionRecord,
    JobRequest,
    WorkflowHistory,
    WorkflowKey,
    build_histories,
    load_trace_csv,
    parse_annotation,
    parse_annotations,
    synthesize_trace,
    write_trace_csv,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "BufferPolicy",
    "CarbonIntensitySeries",
    "DeadlineBasis",
    "DependencyGuess",
    "DurationEstimate",
    "EmissionsReport",
    "EstimatorParams",
    "ExecutedJob",
    "ExecutionRecord",
    "InferredDeadline",
    "IntensityDataset",
    "IntensityPoint",
    "JobClass",
    "JobRequest",
    "Kind",
    "PreprocessOutcome",
    "PreprocessReason",
    "RoundRobinState",
    "ScheduleDecision",
    "SchedulerParams",
    "SchedulingContext",
    "SimulationConfig",
    "StrategyConfig",
    "StrategyKind",
    "SynthConfig",
    "WorkflowHistory",
    "WorkflowKey",
    "build_histories",
    "classify_job",
    "decide",
    "decide_location_shift",
    "decide_location_time_shift",
    "decide_round_robin",
    "estimate_duration",
    "forecast_error_report",
    "infer_deadline",
    "infer_dependencies",
    "integrate_emissions",
    "intensity_at",
    "load_intensity_csv",
    "load_trace_csv",
    "parse_annotation",
    "parse_annotations",
    "preprocess",
    "run_simulation",
    "running_jobs_at",
    "synthesize_dataset",
    "synthesize_trace",
    "write_trace_csv",
]
