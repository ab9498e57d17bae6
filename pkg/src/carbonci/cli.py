"""Command-line entry point: ``carbonci <simulate|synth|parse-annotation|serve|report>``.

Every subcommand is a thin wrapper over library calls.  ``CARBONCI_CONFIG``
may name a key-value file whose keys mirror the long flags (dashes or
underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .carbon import IntensityDataset, Kind, SynthConfig, load_intensity_csv, synthesize_dataset
from .config import load_kv_config
from .errors import CarbonCIError, InvalidConfig
from .estimator import EstimatorParams
from .scheduler import SchedulerParams, StrategyConfig, StrategyKind
from .simulator import BufferPolicy, SimulationConfig, forecast_error_report, run_simulation
from .timeutil import parse_instant
from .workflow import load_trace_csv, parse_annotations, synthesize_trace, write_trace_csv

log = logging.getLogger("carbonci")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in _csv_list(text)]


def _truthy(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _load_dataset(args) -> IntensityDataset:
    if not args.intensity:
        raise InvalidConfig("--intensity is required")
    dataset = load_intensity_csv(args.intensity, Kind.ACTUAL)
    if getattr(args, "forecast", None):
        dataset = dataset.merged(load_intensity_csv(args.forecast, Kind.FORECAST))
    if args.perfect_forecast:
        dataset = dataset.with_perfect_forecast()
    return dataset.require_complete()


def _scheduler_params(args) -> SchedulerParams:
    estimator = EstimatorParams()
    if getattr(args, "estimator_config", None):
        estimator = EstimatorParams.from_file(args.estimator_config)
    return SchedulerParams(min_duration_s=float(args.min_duration_s), estimator=estimator)


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    if not args.trace:
        raise InvalidConfig("--trace is required")
    jobs = load_trace_csv(args.trace)
    dataset = _load_dataset(args)
    strategies = StrategyConfig.parse_list(
        _csv_list(args.strategies), _float_list(args.buffers), float(args.slot_s)
    )
    config = SimulationConfig(
        strategies=strategies,
        intensity=dataset,
        jobs=jobs,
        buffer_policy=BufferPolicy(args.policy),
        seed=int(args.seed),
        params=_scheduler_params(args),
    )
    report = run_simulation(config)
    print(report.format_table())
    for label, r in report.strategies.items():
        if r.coverage_gap_count:
            print(f"warning: {label}: {r.coverage_gap_count} jobs ran past the intensity data",
                  file=sys.stderr)
    if args.out_dir:
        for path in report.write(args.out_dir):
            log.info("wrote %s", path)
        with open(Path(args.out_dir) / "forecast_error.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("strategy", "mean_abs_error_reu", "mean_signed_error_reu", "jobs"))
            for label, r in report.strategies.items():
                err = forecast_error_report(r.executed)
                writer.writerow((label, repr(err.mean_absolute_error),
                                 repr(err.mean_signed_error), err.n_jobs))
    return 0


def cmd_synth(args) -> int:
    values = {}
    if args.config:
        values.update(load_kv_config(args.config))
    for key in SynthConfig.KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    config = SynthConfig.from_mapping(values)
    dataset = synthesize_dataset(config)
    if not args.out:
        raise InvalidConfig("--out is required")
    dataset.to_csv(args.out)
    print(f"wrote {args.out}: {len(dataset.regions)} regions x "
          f"{len(dataset.series(dataset.regions[0], Kind.ACTUAL))} points x 2 kinds")
    if args.jobs:
        if not args.trace_out:
            raise InvalidConfig("--jobs needs --trace-out")
        start, end = dataset.coverage
        # leave room for the longest job plus a 6 h buffer
        span = (end - start) - 8 * 3600
        if span <= 0:
            raise InvalidConfig("dataset too short to host a trace")
        jobs = synthesize_trace(int(args.jobs), start, span, seed=config.seed)
        write_trace_csv(jobs, args.trace_out)
        print(f"wrote {args.trace_out}: {len(jobs)} jobs")
    return 0


def cmd_parse_annotation(args) -> int:
    text = sys.stdin.read() if args.path == "-" else Path(args.path).read_text()
    per_job = parse_annotations(text)
    if args.job:
        if args.job not in per_job:
            raise InvalidConfig(f"no job named {args.job!r}")
        per_job = {args.job: per_job[args.job]}
    out = {
        name: {
            "carbon_aware": a.carbon_aware,
            "duration_estimate": a.duration_estimate,
            "deadline_offset": a.deadline_offset,
            "allowed_regions": sorted(a.allowed_regions) if a.allowed_regions is not None else None,
        }
        for name, a in per_job.items()
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import SchedulingService, create_app

    kind = StrategyKind(args.strategy)
    buffer = float(args.buffer_h) if kind is StrategyKind.LOCATION_TIME else None
    service = SchedulingService(
        _load_dataset(args),
        strategy=StrategyConfig(kind, buffer, float(args.slot_s)),
        params=_scheduler_params(args),
        state_dir=args.state_dir,
        loader=lambda: _load_dataset(args),
    )
    uvicorn.run(create_app(service), host=args.host, port=int(args.port))
    return 0


def cmd_report(args) -> int:
    summary = Path(args.out_dir) / "summary.csv"
    with open(summary, newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'strategy':<22}{'total_reu':>16}{'improvement':>13}{'fallbacks':>11}{'violations':>12}")
    for row in rows:
        print(f"{row['strategy']:<22}{float(row['total_reu']):>16.2f}"
              f"{float(row['improvement_pct']):>12.2f}%{row['fallbacks']:>11}{row['deadline_violations']:>12}")
    if args.plot:
        _plot(Path(args.out_dir), [r["strategy"] for r in rows], args.plot)
    return 0


def _plot(out_dir: Path, labels: list[str], target: str) -> None:
    """Running jobs and cumulative emissions per strategy (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(len(labels), 1, figsize=(10, 2.2 * len(labels)), sharex=True, squeeze=False)
    for ax, label in zip(axes[:, 0], labels):
        with open(out_dir / f"series_{label}.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        t = [(parse_instant(r["timestamp"]) - parse_instant(rows[0]["timestamp"])) / 3600 for r in rows]
        ax.fill_between(t, [int(r["running_jobs"]) for r in rows], step="post", alpha=0.4)
        ax.set_ylabel("jobs")
        twin = ax.twinx()
        twin.plot(t, [float(r["cumulative_emissions_reu"]) for r in rows], color="k")
        twin.set_ylabel("REU")
        ax.set_title(label, fontsize=9)
    axes[-1, 0].set_xlabel("hours since first sample")
    fig.tight_layout()
    fig.savefig(target)


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carbonci", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(sp):
        sp.add_argument("--intensity", help="intensity CSV (rows without a kind column are actual)")
        sp.add_argument("--forecast", help="separate forecast CSV")
        sp.add_argument("--perfect-forecast", action="store_true",
                        help="use the actual series as forecast")
        sp.add_argument("--slot-s", type=float, default=300.0)
        sp.add_argument("--min-duration-s", type=float, default=60.0)
        sp.add_argument("--estimator-config", help="key-value estimator config file")

    s = sub.add_parser("simulate", help="replay a trace under several strategies")
    s.add_argument("--trace")
    data_flags(s)
    s.add_argument("--strategies", default="round_robin,location,location_time")
    s.add_argument("--buffers", default="1,3,6", help="deadline buffers in hours for location_time")
    s.add_argument("--policy", default=BufferPolicy.PAPER_UNIFORM.value,
                   choices=[b.value for b in BufferPolicy])
    s.add_argument("--out-dir")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("synth", help="write a synthetic intensity CSV")
    s.add_argument("--config", help="generator config file")
    s.add_argument("--regions", type=int)
    s.add_argument("--days", type=float)
    s.add_argument("--resolution-s", dest="resolution_s", type=float)
    s.add_argument("--base", help="base level, or comma list per region")
    s.add_argument("--amplitude", type=float)
    s.add_argument("--period-h", dest="period_h", type=float)
    s.add_argument("--phase-step-h", dest="phase_step_h", type=float)
    s.add_argument("--noise", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--start")
    s.add_argument("--decimals", type=int)
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, help="also write a synthetic trace with this many jobs")
    s.add_argument("--trace-out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("parse-annotation", help="print carbon-aware hints of a workflow file")
    s.add_argument("path", help="workflow YAML, or - for stdin")
    s.add_argument("--job")
    s.set_defaults(func=cmd_parse_annotation)

    s = sub.add_parser("serve", help="run the HTTP scheduling service")
    data_flags(s)
    s.add_argument("--strategy", default=StrategyKind.LOCATION_TIME.value,
                   choices=[k.value for k in StrategyKind])
    s.add_argument("--buffer-h", type=float, default=6.0)
    s.add_argument("--state-dir")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("report", help="print (and optionally plot) a simulation summary")
    s.add_argument("--out-dir", required=False, default=".")
    s.add_argument("--plot", help="render a PNG of the series (requires matplotlib)")
    s.set_defaults(func=cmd_report)
    return p


def _apply_env_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    path = os.environ.get("CARBONCI_CONFIG")
    if not path:
        return
    values = load_kv_config(path)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in sub.choices.values():
        defaults = {}
        for action in sp._actions:
            if action.dest not in values:
                continue
            raw = values[action.dest]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[action.dest] = _truthy(raw)
            elif action.type is not None:
                defaults[action.dest] = action.type(raw)
            else:
                defaults[action.dest] = raw
        sp.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_env_config(parser, argv)
    except (CarbonCIError, ValueError) as exc:
        print(f"error: CARBONCI_CONFIG: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CarbonCIError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
