"""Per-region carbon-intensity series: ingest, synthesis and queries.

Intensity is treated as a zero-order-hold signal: a point's value applies
from its timestamp up to (not including) the next point.  Emissions are
reported in relative emission units (REU): grams CO2-eq per kW of constant
draw, i.e. the time integral of intensity in g/kWh x hours.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyFile,
    InvalidConfig,
    IrregularResolution,
    MalformedRow,
    NegativeIntensity,
    OutOfCoverage,
    UnknownRegion,
    ZeroOrNegativeDuration,
)
from .timeutil import DAY, HOUR, format_instant, parse_instant

DEFAULT_RESOLUTION_S = 300
JITTER_TOLERANCE_S = 1.0
CSV_HEADER = ("region", "timestamp", "intensity_g_per_kwh")


class Kind(str, Enum):
    ACTUAL = "actual"
    FORECAST = "forecast"

    @classmethod
    def parse(cls, value: "str | Kind") -> "Kind":
        if isinstance(value, Kind):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise MalformedRow(f"unknown series kind {value!r}") from None


@dataclass(frozen=True)
class IntensityPoint:
    timestamp: float
    value: float


@dataclass(frozen=True, eq=False)
class CarbonIntensitySeries:
    """Equally spaced intensity values for one region and kind."""

    region: str
    kind: Kind
    start: float
    resolution: float
    values: np.ndarray

    def __post_init__(self):
        if not self.region:
            raise UnknownRegion("region id must be non-empty")
        if self.resolution <= 0:
            raise IrregularResolution(f"resolution must be positive, got {self.resolution}")
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise EmptyFile(f"series {self.region}/{self.kind.value} has no points")
        if np.isnan(values).any():
            raise MalformedRow(f"series {self.region} contains NaN")
        if (values < 0).any():
            raise NegativeIntensity(f"series {self.region} contains negative intensity")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, CarbonIntensitySeries):
            return NotImplemented
        return (
            self.region == other.region
            and self.kind == other.kind
            and self.start == other.start
            and self.resolution == other.resolution
            and np.array_equal(self.values, other.values)
        )

    def __len__(self) -> int:
        return self.values.size

    @property
    def end(self) -> float:
        return self.start + self.values.size * self.resolution

    @property
    def coverage(self) -> tuple[float, float]:
        return self.start, self.end

    @property
    def points(self) -> list[IntensityPoint]:
        return [
            IntensityPoint(self.start + i * self.resolution, float(v))
            for i, v in enumerate(self.values)
        ]

    def timestamps(self) -> np.ndarray:
        return self.start + self.resolution * np.arange(self.values.size)

    def _check(self, a: float, b: float) -> None:
        if a < self.start or b > self.end:
            raise OutOfCoverage(
                f"{self.region}/{self.kind.value}: [{format_instant(a)}, {format_instant(b)}) "
                f"outside coverage [{format_instant(self.start)}, {format_instant(self.end)})"
            )

    def value_at(self, t: float) -> float:
        if not self.start <= t < self.end:
            raise OutOfCoverage(
                f"{self.region}/{self.kind.value}: {format_instant(t)} outside coverage"
            )
        return float(self.values[int((t - self.start) // self.resolution)])

    def integrate(self, start: float, duration: float) -> float:
        """Exact zero-order-hold integral over ``[start, start + duration)`` in REU."""
        if duration <= 0:
            raise ZeroOrNegativeDuration(f"duration must be positive, got {duration}")
        end = start + duration
        self._check(start, end)
        i0 = int((start - self.start) // self.resolution)
        i1 = min(int(math.ceil((end - self.start) / self.resolution)), self.values.size)
        edges = self.start + self.resolution * np.arange(i0, i1 + 1)
        overlap = np.minimum(end, edges[1:]) - np.maximum(start, edges[:-1])
        np.clip(overlap, 0.0, None, out=overlap)
        return math.fsum(self.values[i0:i1] * overlap) / HOUR

    def window_integrals(self, starts: np.ndarray, duration: float) -> np.ndarray:
        """Integrals for many equal-length windows at once (one per start)."""
        starts = np.asarray(starts, dtype=float)
        if duration <= 0:
            raise ZeroOrNegativeDuration(f"duration must be positive, got {duration}")
        if starts.size == 0:
            return np.empty(0)
        self._check(float(starts.min()), float(starts.max()) + duration)
        i0 = int((starts.min() - self.start) // self.resolution)
        i1 = min(
            int(math.ceil((starts.max() + duration - self.start) / self.resolution)),
            self.values.size,
        )
        edges = self.start + self.resolution * np.arange(i0, i1 + 1)
        ends = starts + duration
        overlap = np.minimum(ends[:, None], edges[None, 1:]) - np.maximum(
            starts[:, None], edges[None, :-1]
        )
        np.clip(overlap, 0.0, None, out=overlap)
        return (overlap @ self.values[i0:i1]) / HOUR

    def extended_to(self, t_end: float) -> "CarbonIntensitySeries":
        """Copy padded with the last value so that coverage reaches ``t_end``."""
        if t_end <= self.end:
            return self
        extra = int(math.ceil((t_end - self.end) / self.resolution))
        values = np.concatenate([self.values, np.full(extra, self.values[-1])])
        return CarbonIntensitySeries(self.region, self.kind, self.start, self.resolution, values)

    def scaled(self, k: float) -> "CarbonIntensitySeries":
        return CarbonIntensitySeries(
            self.region, self.kind, self.start, self.resolution, self.values * k
        )


class IntensityDataset:
    """Immutable collection of series keyed by ``(region, kind)``."""

    def __init__(self, series: Iterable[CarbonIntensitySeries]):
        table: dict[tuple[str, Kind], CarbonIntensitySeries] = {}
        for s in series:
            key = (s.region, s.kind)
            if key in table:
                raise MalformedRow(f"duplicate series for {s.region}/{s.kind.value}")
            table[key] = s
        if not table:
            raise EmptyFile("dataset contains no series")
        resolutions = {s.resolution for s in table.values()}
        if len(resolutions) > 1:
            raise IrregularResolution(
                f"regions disagree on resolution: {sorted(resolutions)}"
            )
        self._series: Mapping[tuple[str, Kind], CarbonIntensitySeries] = table
        self.resolution: float = resolutions.pop()
        self.regions: tuple[str, ...] = tuple(sorted({r for r, _ in table}))

    def __eq__(self, other):
        if not isinstance(other, IntensityDataset):
            return NotImplemented
        return dict(self._series) == dict(other._series)

    def __iter__(self) -> Iterator[CarbonIntensitySeries]:
        for key in sorted(self._series, key=lambda k: (k[0], k[1].value)):
            yield self._series[key]

    def __repr__(self) -> str:
        start, end = self.coverage
        return (
            f"IntensityDataset(regions={len(self.regions)}, resolution={self.resolution:g}s, "
            f"coverage={format_instant(start)}..{format_instant(end)})"
        )

    def kinds(self, region: str) -> set[Kind]:
        return {k for r, k in self._series if r == region}

    def series(self, region: str, kind: Kind | str = Kind.FORECAST) -> CarbonIntensitySeries:
        kind = Kind.parse(kind)
        try:
            return self._series[(region, kind)]
        except KeyError:
            if region not in self.regions:
                raise UnknownRegion(f"unknown region {region!r}") from None
            raise UnknownRegion(f"region {region!r} has no {kind.value} series") from None

    @property
    def coverage(self) -> tuple[float, float]:
        """Interval covered by every series in the dataset."""
        return (
            max(s.start for s in self._series.values()),
            min(s.end for s in self._series.values()),
        )

    def is_complete(self) -> bool:
        return all(self.kinds(r) == {Kind.ACTUAL, Kind.FORECAST} for r in self.regions)

    def require_complete(self) -> "IntensityDataset":
        missing = [
            f"{r}/{k.value}"
            for r in self.regions
            for k in Kind
            if (r, k) not in self._series
        ]
        if missing:
            raise UnknownRegion(f"dataset lacks series: {', '.join(missing)}")
        return self

    def with_perfect_forecast(self) -> "IntensityDataset":
        """Replace every forecast with the matching actual series."""
        out = []
        for r in self.regions:
            actual = self.series(r, Kind.ACTUAL)
            out.append(actual)
            out.append(
                CarbonIntensitySeries(r, Kind.FORECAST, actual.start, actual.resolution, actual.values)
            )
        return IntensityDataset(out)

    def merged(self, other: "IntensityDataset") -> "IntensityDataset":
        return IntensityDataset([*self, *other])

    def extended_to(self, t_end: float) -> "IntensityDataset":
        return IntensityDataset(s.extended_to(t_end) for s in self)

    def scaled(self, k: float) -> "IntensityDataset":
        return IntensityDataset(s.scaled(k) for s in self)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow((*CSV_HEADER, "kind"))
            for s in self:
                for t, v in zip(s.timestamps(), s.values):
                    writer.writerow((s.region, format_instant(float(t)), repr(float(v)), s.kind.value))


# --- queries ---------------------------------------------------------------

def intensity_at(dataset: IntensityDataset, region: str, t: float, kind: Kind | str = Kind.FORECAST) -> float:
    return dataset.series(region, kind).value_at(t)


def integrate_emissions(
    dataset: IntensityDataset,
    region: str,
    start: float,
    duration: float,
    kind: Kind | str = Kind.FORECAST,
) -> float:
    return dataset.series(region, kind).integrate(start, duration)


# --- ingest ----------------------------------------------------------------

def _build_series(region: str, kind: Kind, rows: list[tuple[float, float]]) -> CarbonIntensitySeries:
    rows.sort(key=lambda r: r[0])
    times = [t for t, _ in rows]
    if len(times) > 1:
        # median step, so a single jittered point cannot define the grid
        resolution = float(round(float(np.median(np.diff(times)))))
        if resolution <= 0 or len(set(times)) < len(times):
            raise IrregularResolution(f"{region}/{kind.value}: duplicate timestamps")
    else:
        resolution = float(DEFAULT_RESOLUTION_S)
    t0 = times[0]
    for i, t in enumerate(times):
        if abs(t - (t0 + i * resolution)) > JITTER_TOLERANCE_S:
            raise IrregularResolution(
                f"{region}/{kind.value}: point {format_instant(t)} breaks the "
                f"{resolution:g}s grid started at {format_instant(t0)}"
            )
    return CarbonIntensitySeries(region, kind, t0, resolution, np.array([v for _, v in rows]))


def load_intensity_csv(path: str | Path, kind: Kind | str | None = Kind.ACTUAL) -> IntensityDataset:
    """Read ``region,timestamp,intensity_g_per_kwh[,kind]`` rows.

    A ``kind`` column, when present, overrides the ``kind`` argument row by row.
    """
    path = Path(path)
    default_kind = Kind.parse(kind) if kind is not None else None
    groups: dict[tuple[str, Kind], list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path}: empty file")
        missing = set(CSV_HEADER) - set(reader.fieldnames)
        if missing:
            raise MalformedRow(f"{path}: missing columns {sorted(missing)}")
        has_kind = "kind" in reader.fieldnames
        for lineno, row in enumerate(reader, start=2):
            region = (row["region"] or "").strip()
            if not region:
                raise MalformedRow(f"{path}:{lineno}: empty region")
            try:
                t = parse_instant(row["timestamp"])
                value = float(row["intensity_g_per_kwh"])
            except (TypeError, ValueError) as exc:
                raise MalformedRow(f"{path}:{lineno}: {exc}") from None
            if math.isnan(value) or math.isinf(value):
                raise MalformedRow(f"{path}:{lineno}: non-finite intensity")
            if value < 0:
                raise NegativeIntensity(f"{path}:{lineno}: negative intensity {value}")
            if has_kind and row["kind"]:
                row_kind = Kind.parse(row["kind"])
            elif default_kind is not None:
                row_kind = default_kind
            else:
                raise MalformedRow(f"{path}:{lineno}: no kind given")
            groups.setdefault((region, row_kind), []).append((t, value))
    if not groups:
        raise EmptyFile(f"{path}: no data rows")
    return IntensityDataset(_build_series(r, k, rows) for (r, k), rows in groups.items())


# --- synthesis -------------------------------------------------------------

@dataclass
class SynthConfig:
    """Sinusoidal multi-region generator.

    Region ``i`` follows ``base_i + amplitude * sin(2*pi*(h - i*phase_step_h)/period_h)``
    (clipped at zero).  The forecast adds Gaussian noise of std ``noise``.
    Values are rounded to ``decimals`` places; the default of 0 yields integer
    g/kWh, which keeps every emission integral exact in float arithmetic.
    """

    regions: int = 12
    resolution_s: float = DEFAULT_RESOLUTION_S
    days: float = 4
    base: float | Sequence[float] = 300.0
    amplitude: float = 100.0
    period_h: float = 24.0
    phase_step_h: float = 2.0
    noise: float = 0.0
    seed: int = 0
    start: str = "2022-10-12T00:00:00Z"
    decimals: int = 0
    region_names: Sequence[str] | None = field(default=None)

    KEYS = (
        "regions", "resolution_s", "days", "base", "amplitude", "period_h",
        "phase_step_h", "noise", "seed", "start", "decimals",
    )

    @classmethod
    def from_mapping(cls, data: Mapping[str, object]) -> "SynthConfig":
        kw: dict[str, object] = {}
        try:
            for key, raw in data.items():
                if key not in cls.KEYS:
                    continue
                if key in ("regions", "seed", "decimals"):
                    kw[key] = int(raw)
                elif key == "start":
                    kw[key] = str(raw)
                elif key == "base":
                    if isinstance(raw, str) and "," in raw:
                        kw[key] = [float(x) for x in raw.split(",") if x.strip()]
                    elif isinstance(raw, (list, tuple)):
                        kw[key] = [float(x) for x in raw]
                    else:
                        kw[key] = float(raw)
                else:
                    kw[key] = float(raw)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad synthetic config value: {exc}") from None
        return cls(**kw)

    def names(self) -> list[str]:
        if self.region_names is not None:
            return list(self.region_names)
        return [f"region-{i:02d}" for i in range(self.regions)]


def synthesize_dataset(config: SynthConfig) -> IntensityDataset:
    if config.resolution_s <= 0:
        raise InvalidConfig("resolution_s must be positive")
    if config.days <= 0:
        raise InvalidConfig("days must be positive")
    if config.regions <= 0:
        raise InvalidConfig("regions must be positive")
    if config.period_h <= 0:
        raise InvalidConfig("period_h must be positive")
    if config.noise < 0:
        raise InvalidConfig("noise must be non-negative")
    names = config.names()
    if len(names) != config.regions or len(set(names)) != len(names):
        raise InvalidConfig("region_names must be unique and match the region count")
    if isinstance(config.base, (int, float)):
        bases = [float(config.base)] * config.regions
    else:
        bases = [float(b) for b in config.base]
        if len(bases) != config.regions:
            raise InvalidConfig(f"got {len(bases)} base levels for {config.regions} regions")

    n = int(round(config.days * DAY / config.resolution_s))
    if n <= 0:
        raise InvalidConfig("config yields no points")
    t0 = parse_instant(config.start)
    hours = (t0 % DAY + config.resolution_s * np.arange(n)) / HOUR
    rng = np.random.default_rng(config.seed)

    out = []
    for i, (name, base) in enumerate(zip(names, bases)):
        phase = i * config.phase_step_h
        actual = base + config.amplitude * np.sin(2 * np.pi * (hours - phase) / config.period_h)
        actual = np.round(np.clip(actual, 0.0, None), config.decimals)
        forecast = actual
        if config.noise > 0:
            forecast = np.round(
                np.clip(actual + rng.normal(0.0, config.noise, n), 0.0, None), config.decimals
            )
        out.append(CarbonIntensitySeries(name, Kind.ACTUAL, t0, float(config.resolution_s), actual))
        out.append(CarbonIntensitySeries(name, Kind.FORECAST, t0, float(config.resolution_s), forecast))
    return IntensityDataset(out)
