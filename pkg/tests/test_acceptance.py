"""Acceptance suite: one test per criterion, each reported as a PASS/FAIL line.

Golden numbers for the directional run were produced once by
``oracles.oracle_strategy_totals`` (exact rational arithmetic, explicit loops)
on the fixture below and frozen here.
"""

import random
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonci.carbon import CarbonIntensitySeries, IntensityDataset, Kind, SynthConfig, integrate_emissions, synthesize_dataset
from carbonci.errors import CarbonCIError
from carbonci.estimator import DurationEstimate, EstimatorParams, buffer_fraction, estimate_duration
from carbonci.scheduler import SchedulerParams, SchedulingContext, StrategyConfig, decide, decide_location_time_shift
from carbonci.service import ScheduleRequestMessage, SchedulingService, decision_to_message, request_from_message
from carbonci.simulator import SimulationConfig, run_simulation
from carbonci.timeutil import DAY, HOUR, format_instant
from carbonci.workflow import Annotation, ExecutionRecord, JobRequest, WorkflowHistory, WorkflowKey, parse_annotation, synthesize_trace

from .conftest import criterion
from .fixtures import ANNOTATED_WORKFLOW
from .helpers import T0, dataset
from .oracles import ExactSeries, brute_force_lts, riemann_integral

FIVE = StrategyConfig.parse_list(["round_robin", "location", "location_time"], [1, 3, 6])
ORDER = ["location_time_6h", "location_time_3h", "location_time_1h", "location", "round_robin"]


def dominance_holds(totals):
    return all(totals[a] <= totals[b] for a, b in zip(ORDER, ORDER[1:]))


def random_simulation(seed):
    """A randomized synthetic scenario with integer intensities and perfect forecast."""
    rng = random.Random(seed)
    n_regions = rng.randint(2, 6)
    days = rng.choice([1.5, 2, 3])
    cfg = SynthConfig(
        regions=n_regions,
        days=days,
        resolution_s=rng.choice([300, 900, 3600]),
        base=[rng.randint(100, 600) for _ in range(n_regions)],
        amplitude=rng.randint(0, 250),
        period_h=rng.choice([12, 24, 24, 36]),
        phase_step_h=rng.uniform(0, 6),
        noise=0,
        seed=seed,
    )
    ds = synthesize_dataset(cfg)
    if rng.random() < 0.3:
        # random-walk landscape instead of smooth sinusoids
        series = []
        for i, region in enumerate(ds.regions):
            s = ds.series(region, Kind.ACTUAL)
            steps = np.random.default_rng([seed, i]).integers(-40, 41, len(s))
            walk = np.abs(np.cumsum(steps) + 300)
            series.append(CarbonIntensitySeries(region, Kind.ACTUAL, s.start, s.resolution, walk.astype(float)))
        ds = IntensityDataset(series).with_perfect_forecast()
    jobs = synthesize_trace(rng.randint(20, 60), ds.coverage[0], days * DAY - 8 * HOUR, seed=seed,
                            n_workflows=rng.randint(2, 8))
    return run_simulation(SimulationConfig(FIVE, ds, jobs, seed=seed))


# --- 1 ---------------------------------------------------------------------

@criterion("strategy dominance on >=100 randomized traces, < 60 s")
def test_strategy_dominance():
    t0 = time.perf_counter()
    violations, violations_deadline = [], 0
    n = 120
    for seed in range(n):
        rep = random_simulation(seed)
        if not dominance_holds(rep.totals()):
            violations.append(seed)
        violations_deadline += sum(r.deadline_violation_count for r in rep.strategies.values())
    elapsed = time.perf_counter() - t0
    assert not violations, f"ordering broken for seeds {violations}"
    assert violations_deadline == 0
    assert elapsed < 60, f"took {elapsed:.1f}s"
    return f"{n} traces, 0 ordering violations"


# --- 2 ---------------------------------------------------------------------

@criterion("LTS equals brute-force enumeration on 1000 small instances, < 30 s")
def test_oracle_equivalence():
    rng = random.Random(2024)
    t0 = time.perf_counter()
    for case in range(1000):
        n_regions = rng.randint(1, 4)
        res = rng.choice([300, 600, 900, 3600])
        n_slots = rng.randint(1, 48)
        slot = rng.choice([res, res, 300, 60])
        values = {f"z{rng.randint(0, 99):02d}-{i}": [rng.randint(0, 12) for _ in range(n_slots)]
                  for i in range(n_regions)}
        span = n_slots * res
        arrival_off = rng.randint(0, span - 1)
        total = rng.randint(1, span - arrival_off)
        window = rng.randint(total, span - arrival_off)
        names = sorted(values)
        allowed = None
        if rng.random() < 0.3:
            allowed = frozenset(rng.sample(names, rng.randint(1, len(names))))
        ds = dataset(values, resolution=res)
        arrival = T0 + arrival_off
        req = JobRequest(WorkflowKey("o/r", "w"), arrival, Annotation(True, float(total), None, allowed))
        d = decide_location_time_shift(req, names, ds, DurationEstimate.exact(total), arrival + window, slot)

        exact = {k: ExactSeries(v, int(T0), res) for k, v in values.items() if allowed is None or k in allowed}
        start, region, value = brute_force_lts(exact, int(arrival), total, int(arrival) + window, slot)
        assert (d.start, d.region) == (start, region), f"case {case}"
        assert d.predicted_emissions == float(value), f"case {case}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 30, f"took {elapsed:.1f}s"
    return "1000 instances, exact agreement"


# --- 3 ---------------------------------------------------------------------

@criterion("integrate_emissions vs 1 s Riemann sum, 1e-6 relative, 1000 windows")
def test_emissions_integral():
    rng = np.random.default_rng(99)
    worst = 0.0
    for k in range(1000):
        res = int(rng.choice([60, 300, 900, 3600]))
        n = int(rng.integers(2, 200))
        values = rng.uniform(0, 900, n)
        region = f"r{k}"
        ds = IntensityDataset([CarbonIntensitySeries(region, Kind.FORECAST, T0, float(res), values)])
        span = n * res
        start = int(rng.integers(0, span - 1))
        duration = int(rng.integers(1, min(span - start, 40_000) + 1))
        got = integrate_emissions(ds, region, T0 + start, duration)
        want = riemann_integral(values, T0, res, T0 + start, duration)
        err = abs(got - want) / max(abs(want), 1e-300)
        worst = max(worst, err)
        assert err <= 1e-6, f"window {k}: {got} vs {want}"
    return f"max relative error {worst:.1e}"


# --- 4 ---------------------------------------------------------------------

@criterion("published annotated workflow parses to the expected hints")
def test_annotation_round_trip():
    a = parse_annotation(ANNOTATED_WORKFLOW)
    assert a.carbon_aware is True
    assert a.duration_estimate == 3600
    assert a.deadline_offset == 10800
    assert a.allowed_regions == frozenset({"eu-central-1"})
    return "carbon_aware, 3600 s, 10800 s, {eu-central-1}"


# --- 5 ---------------------------------------------------------------------

DIRECTIONAL_BASES = [420, 380, 350, 300, 260, 240, 330, 290, 410, 200, 370, 310]
DIRECTIONAL_GOLDEN = {
    "round_robin": Fraction(119094581, 1800),
    "location": Fraction(116965553, 3600),
    "location_time_1h": Fraction(56107717, 1800),
    "location_time_3h": Fraction(25908847, 900),
    "location_time_6h": Fraction(93442633, 3600),
}


def directional_fixture():
    cfg = SynthConfig(regions=12, days=4, resolution_s=300, base=DIRECTIONAL_BASES, amplitude=100,
                      period_h=24, phase_step_h=2, noise=0, seed=7)
    ds = synthesize_dataset(cfg)
    jobs = synthesize_trace(500, ds.coverage[0], 4 * DAY - 8 * HOUR, seed=7)
    return ds, jobs


@criterion("directional reproduction: 12 regions, 4 days, 5 min, 500 jobs")
def test_directional_reproduction():
    ds, jobs = directional_fixture()
    assert len(ds.regions) == 12 and len(jobs) == 500
    assert all(len(s) == 1152 for s in ds)
    rep = run_simulation(SimulationConfig(FIVE, ds, jobs, seed=7))
    totals = rep.totals()
    for label, golden in DIRECTIONAL_GOLDEN.items():
        assert totals[label] == pytest.approx(float(golden), rel=1e-9), label
    imp = {k: r.relative_improvement for k, r in rep.strategies.items()}
    golden_imp = {k: float(1 - v / DIRECTIONAL_GOLDEN["round_robin"]) for k, v in DIRECTIONAL_GOLDEN.items()}
    for label in imp:
        assert imp[label] == pytest.approx(golden_imp[label], abs=1e-9), label
    assert imp["location"] > 0
    assert imp["location_time_1h"] <= imp["location_time_3h"] <= imp["location_time_6h"]
    return ", ".join(f"{k} {100 * v:.2f}%" for k, v in imp.items() if k != "round_robin")


# --- 6 ---------------------------------------------------------------------

_safety_checked = []


@settings(max_examples=500, deadline=None)
@given(
    values=st.lists(st.lists(st.integers(0, 500), min_size=24, max_size=24), min_size=1, max_size=4),
    arrival_off=st.integers(0, 6 * 3600),
    duration=st.one_of(st.none(), st.integers(30, 4 * 3600)),
    deadline=st.integers(60, 12 * 3600),
    aware=st.sampled_from([True, True, True, False]),
    history=st.lists(st.integers(60, 3 * 3600), max_size=5),
    b=st.floats(0, 1),
    # only location_time decisions carry a deadline
    strategy=st.sampled_from(FIVE[2:]),
)
def _decisions_respect_deadlines(values, arrival_off, duration, deadline, aware, history, b, strategy):
    key = WorkflowKey("o/r", "w")
    ds = dataset({f"r{i}": v for i, v in enumerate(values)}, resolution=3600)
    hist = WorkflowHistory(key, [ExecutionRecord(key, T0 - DAY + i * HOUR, d) for i, d in enumerate(history)])
    params = EstimatorParams(b_max=b, b_min=min(b, 0.1))
    ctx = SchedulingContext(list(ds.regions), ds, {key: hist}, SchedulerParams(estimator=params))
    ann = Annotation(aware, None if duration is None else float(duration), float(deadline))
    req = JobRequest(key, T0 + arrival_off, ann)
    try:
        d = decide(req, strategy, ctx)
    except CarbonCIError:
        return  # infeasible or uncovered requests are rejected, not scheduled late
    assert d.start >= req.arrival
    if d.deadline is not None:
        assert d.start + d.estimated_duration <= d.deadline
        _safety_checked.append(1)


@criterion("deadline safety: zero violations with exact estimates; decisions meet deadlines")
def test_deadline_safety():
    violations = 0
    ds, jobs = directional_fixture()
    rep = run_simulation(SimulationConfig(FIVE, ds, jobs[:200]))
    violations += sum(r.deadline_violation_count for r in rep.strategies.values())
    for seed in range(1000, 1020):
        rep = random_simulation(seed)
        violations += sum(r.deadline_violation_count for r in rep.strategies.values())
        for r in rep.strategies.values():
            for e in r.executed:
                d = e.decision
                if d.deadline is not None:
                    assert d.start + d.estimated_duration <= d.deadline
    assert violations == 0
    _decisions_respect_deadlines()
    return f"0 simulated violations; {len(_safety_checked)} random deadline decisions checked"


# --- 7 ---------------------------------------------------------------------

@criterion("estimator algebra: worked examples exact, buffer fraction non-increasing")
def test_estimator_algebra():
    key = WorkflowKey("o/r", "w")

    def hist(durations):
        return WorkflowHistory(key, [ExecutionRecord(key, T0 + i * DAY, d) for i, d in enumerate(durations)])

    e = estimate_duration(Annotation(duration_estimate=3600), None)
    assert (e.expected, e.buffer, e.total) == (3600, 1800, 5400)
    e = estimate_duration(Annotation(), hist([600, 1200]))
    assert (e.expected, e.buffer, e.total) == (900, 150, 1050)
    e = estimate_duration(Annotation(duration_estimate=1000), hist([2000]))
    assert (e.expected, e.buffer) == (1500, 375)

    rng = random.Random(7)
    for _ in range(300):
        b_max = rng.uniform(0, 1)
        params = EstimatorParams(b_max=b_max, b_min=rng.uniform(0, b_max))
        durations = [rng.randint(1, 20_000) for _ in range(rng.randint(0, 40))]
        u = rng.choice([None, rng.randint(1, 20_000)])
        prev = None
        for n in range(len(durations) + 1):
            if u is None and n == 0:
                continue
            est = estimate_duration(Annotation(duration_estimate=u), hist(durations[:n]), params)
            frac = buffer_fraction(n, params)
            assert est.buffer == pytest.approx(frac * est.expected, rel=1e-12, abs=1e-12)
            assert prev is None or frac <= prev
            prev = frac
    return "3 examples exact; 300 random histories monotone"


# --- 8 ---------------------------------------------------------------------

@criterion("service responses equal direct library decisions for 100 requests")
def test_service_fidelity():
    ds = synthesize_dataset(SynthConfig(regions=5, days=2, noise=30, seed=11))
    regions = list(ds.regions)
    clock_now = ds.coverage[0] + 3 * HOUR
    svc = SchedulingService(ds, clock=lambda: clock_now)
    rng = random.Random(5)
    keys = [("org/a", "build"), ("org/a", "test"), ("org/b", "nightly"), ("org/c", "lint")]
    compared = errors = 0
    for i in range(100):
        repo, wf = rng.choice(keys)
        payload = {"repo": repo, "workflow": wf, "carbon_aware": rng.random() < 0.7}
        if rng.random() < 0.9:
            payload["arrival"] = format_instant(ds.coverage[0] + rng.randint(0, 50 * 3600))
        if rng.random() < 0.7:
            payload["duration"] = rng.choice(["20m", "1h", "1h30m", 45, 5400.0, "2h"])
        if rng.random() < 0.6:
            payload["deadline"] = rng.choice(["3h", "6h", "90m", 7200, "10h", "30m"])
        if rng.random() < 0.3:
            payload["allowed_regions"] = rng.sample(regions, rng.randint(1, 3))
        if rng.random() < 0.3:
            payload["strategy"] = rng.choice(["round_robin", "location", "location_time"])
        msg = ScheduleRequestMessage.model_validate(payload)

        ctx = svc.context_copy()
        try:
            resp = svc.handle_schedule(msg)
        except CarbonCIError as exc:
            with pytest.raises(type(exc)):
                decide(request_from_message(msg, clock_now), svc.strategy_for(msg), ctx)
            errors += 1
            continue
        request = request_from_message(msg, clock_now, job_id=resp.job_id)
        direct = decision_to_message(decide(request, svc.strategy_for(msg), ctx))
        assert resp.model_dump() == direct.model_dump(), f"request {i}"
        compared += 1
        if rng.random() < 0.6:
            svc.handle_report_completion(resp.job_id, rng.randint(300, 5000))
    assert compared + errors == 100
    return f"{compared} decisions identical, {errors} identical rejections"
