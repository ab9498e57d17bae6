import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonci.carbon import (
    CarbonIntensitySeries,
    IntensityDataset,
    Kind,
    SynthConfig,
    integrate_emissions,
    intensity_at,
    load_intensity_csv,
    synthesize_dataset,
)
from carbonci.errors import (
    EmptyFile,
    InvalidConfig,
    IrregularResolution,
    MalformedRow,
    NegativeIntensity,
    OutOfCoverage,
    UnknownRegion,
    ZeroOrNegativeDuration,
)
from carbonci.timeutil import parse_instant

from .oracles import riemann_integral

T0 = parse_instant("2022-10-12T00:00:00Z")


def two_point_dataset():
    s = CarbonIntensitySeries("r", Kind.FORECAST, T0, 3600.0, np.array([100.0, 50.0]))
    return IntensityDataset([s])


def write(tmp_path, text, name="i.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    CSV = (
        "region,timestamp,intensity_g_per_kwh\n"
        "a,2022-10-12T00:00:00Z,10\n"
        "a,2022-10-12T01:00:00Z,20\n"
        "a,2022-10-12T02:00:00Z,30\n"
        "b,2022-10-12T00:00:00Z,5\n"
        "b,2022-10-12T01:00:00Z,6\n"
        "b,2022-10-12T02:00:00Z,7\n"
    )

    def test_two_regions_hourly(self, tmp_path):
        ds = load_intensity_csv(write(tmp_path, self.CSV), Kind.ACTUAL)
        assert ds.regions == ("a", "b")
        assert ds.resolution == 3600
        assert list(ds.series("a", Kind.ACTUAL).values) == [10, 20, 30]
        assert ds.series("b", Kind.ACTUAL).coverage == (T0, T0 + 3 * 3600)

    def test_unsorted_rows_match_sorted(self, tmp_path):
        lines = self.CSV.strip().split("\n")
        shuffled = "\n".join([lines[0], *reversed(lines[1:])]) + "\n"
        a = load_intensity_csv(write(tmp_path, self.CSV, "a.csv"))
        b = load_intensity_csv(write(tmp_path, shuffled, "b.csv"))
        assert a == b

    def test_negative_value(self, tmp_path):
        bad = self.CSV.replace(",20\n", ",-5\n")
        with pytest.raises(NegativeIntensity):
            load_intensity_csv(write(tmp_path, bad))

    def test_gap_is_irregular(self, tmp_path):
        bad = self.CSV.replace("a,2022-10-12T02:00:00Z", "a,2022-10-12T03:00:00Z")
        with pytest.raises(IrregularResolution):
            load_intensity_csv(write(tmp_path, bad))

    def test_subsecond_jitter_accepted(self, tmp_path):
        ok = self.CSV.replace("a,2022-10-12T01:00:00Z", "a,2022-10-12T01:00:00.600Z")
        ds = load_intensity_csv(write(tmp_path, ok))
        assert ds.series("a", Kind.ACTUAL).resolution == 3600

    def test_jitter_over_one_second(self, tmp_path):
        bad = self.CSV.replace("a,2022-10-12T02:00:00Z", "a,2022-10-12T02:00:02Z")
        with pytest.raises(IrregularResolution):
            load_intensity_csv(write(tmp_path, bad))

    def test_regions_disagreeing_on_resolution(self, tmp_path):
        bad = self.CSV.replace("b,2022-10-12T01:00:00Z", "b,2022-10-12T00:30:00Z").replace(
            "b,2022-10-12T02:00:00Z", "b,2022-10-12T01:00:00Z")
        with pytest.raises(IrregularResolution):
            load_intensity_csv(write(tmp_path, bad))

    @pytest.mark.parametrize("cell", ["abc", "", "nan"])
    def test_malformed_number(self, tmp_path, cell):
        with pytest.raises(MalformedRow):
            load_intensity_csv(write(tmp_path, self.CSV.replace(",30\n", f",{cell}\n")))

    def test_malformed_timestamp(self, tmp_path):
        with pytest.raises(MalformedRow):
            load_intensity_csv(write(tmp_path, self.CSV.replace("2022-10-12T02:00:00Z", "yesterday", 1)))

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyFile):
            load_intensity_csv(write(tmp_path, ""))
        with pytest.raises(EmptyFile):
            load_intensity_csv(write(tmp_path, "region,timestamp,intensity_g_per_kwh\n"))

    def test_kind_column(self, tmp_path):
        text = (
            "region,timestamp,intensity_g_per_kwh,kind\n"
            "a,2022-10-12T00:00:00Z,10,actual\n"
            "a,2022-10-12T01:00:00Z,20,actual\n"
            "a,2022-10-12T00:00:00Z,11,forecast\n"
            "a,2022-10-12T01:00:00Z,19,forecast\n"
        )
        ds = load_intensity_csv(write(tmp_path, text))
        assert ds.is_complete()
        assert list(ds.series("a", Kind.FORECAST).values) == [11, 19]

    def test_csv_round_trip(self, tmp_path):
        ds = synthesize_dataset(SynthConfig(regions=3, days=0.5, noise=7, seed=3, decimals=2))
        path = tmp_path / "out.csv"
        ds.to_csv(path)
        assert load_intensity_csv(path) == ds


class TestIntensityAt:
    def test_zero_order_hold(self):
        assert intensity_at(two_point_dataset(), "r", T0 + 1800) == 100

    def test_on_point_is_left_closed(self):
        assert intensity_at(two_point_dataset(), "r", T0 + 3600) == 50

    def test_last_interval(self):
        assert intensity_at(two_point_dataset(), "r", T0 + 2 * 3600 - 1) == 50

    def test_out_of_coverage(self):
        with pytest.raises(OutOfCoverage):
            intensity_at(two_point_dataset(), "r", T0 + 2 * 3600)
        with pytest.raises(OutOfCoverage):
            intensity_at(two_point_dataset(), "r", T0 - 1)

    def test_unknown_region(self):
        with pytest.raises(UnknownRegion):
            intensity_at(two_point_dataset(), "nope", T0)


class TestIntegrate:
    def test_constant(self):
        s = CarbonIntensitySeries("r", Kind.FORECAST, T0, 300.0, np.full(48, 100.0))
        assert integrate_emissions(IntensityDataset([s]), "r", T0, 7200) == 200

    def test_two_piece(self):
        assert integrate_emissions(two_point_dataset(), "r", T0 + 1800, 3600) == 75

    def test_rejects_bad_duration(self):
        with pytest.raises(ZeroOrNegativeDuration):
            integrate_emissions(two_point_dataset(), "r", T0, 0)

    def test_rejects_window_past_coverage(self):
        with pytest.raises(OutOfCoverage):
            integrate_emissions(two_point_dataset(), "r", T0 + 3600, 3601)

    def test_matches_riemann_oracle(self):
        rng = np.random.default_rng(11)
        values = rng.uniform(0, 800, 288)
        s = CarbonIntensitySeries("r", Kind.FORECAST, T0, 300.0, values)
        for _ in range(50):
            start = T0 + int(rng.integers(0, 60000))
            dur = int(rng.integers(1, 20000))
            got = s.integrate(start, dur)
            want = riemann_integral(values, T0, 300, start, dur)
            assert got == pytest.approx(want, rel=1e-6)

    def test_window_integrals_agree_with_scalar(self):
        rng = np.random.default_rng(5)
        s = CarbonIntensitySeries("r", Kind.FORECAST, T0, 300.0, rng.integers(0, 500, 200).astype(float))
        starts = T0 + 17 + 300.0 * np.arange(40)
        vec = s.window_integrals(starts, 4000)
        assert list(vec) == [s.integrate(float(t), 4000) for t in starts]


series_values = st.lists(st.integers(0, 1000), min_size=4, max_size=60)


@settings(max_examples=200, deadline=None)
@given(values=series_values, data=st.data())
def test_additivity(values, data):
    s = CarbonIntensitySeries("r", Kind.FORECAST, T0, 300.0, np.array(values, dtype=float))
    span = 300 * len(values)
    start = data.draw(st.integers(0, span - 2))
    d1 = data.draw(st.integers(1, span - start - 1))
    d2 = data.draw(st.integers(1, span - start - d1))
    whole = s.integrate(T0 + start, d1 + d2)
    parts = s.integrate(T0 + start, d1) + s.integrate(T0 + start + d1, d2)
    # integer intensities and second offsets keep every sum exact
    assert whole == pytest.approx(parts, rel=1e-15, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(values=series_values, data=st.data())
def test_monotone_in_duration(values, data):
    s = CarbonIntensitySeries("r", Kind.FORECAST, T0, 300.0, np.array(values, dtype=float))
    span = 300 * len(values)
    start = data.draw(st.integers(0, span - 2))
    d1 = data.draw(st.integers(1, span - start - 1))
    d2 = data.draw(st.integers(d1, span - start))
    assert s.integrate(T0 + start, d1) <= s.integrate(T0 + start, d2)


@settings(max_examples=100, deadline=None)
@given(values=st.lists(st.floats(0, 1000), min_size=4, max_size=40),
       k=st.floats(0.01, 100), frac=st.floats(0, 0.9))
def test_scale_equivariance(values, k, frac):
    ds = IntensityDataset([CarbonIntensitySeries("r", Kind.FORECAST, T0, 300.0, np.array(values))])
    span = 300 * len(values)
    start = T0 + int(frac * span)
    dur = T0 + span - start
    base = integrate_emissions(ds, "r", start, dur)
    assert integrate_emissions(ds.scaled(k), "r", start, dur) == pytest.approx(k * base, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(values=series_values, data=st.data())
def test_zero_order_hold_constant_within_interval(values, data):
    s = CarbonIntensitySeries("r", Kind.FORECAST, T0, 300.0, np.array(values, dtype=float))
    i = data.draw(st.integers(0, len(values) - 1))
    off = data.draw(st.floats(0, 299.999))
    assert s.value_at(T0 + 300 * i + off) == s.value_at(T0 + 300 * i) == values[i]


class TestSynthesize:
    def test_flat_when_amplitude_zero(self):
        ds = synthesize_dataset(SynthConfig(regions=2, amplitude=0, base=100, days=1))
        for s in ds:
            assert (s.values == 100).all()

    def test_deterministic(self, tmp_path):
        cfg = SynthConfig(regions=3, days=1, noise=20, seed=42)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        synthesize_dataset(cfg).to_csv(a)
        synthesize_dataset(cfg).to_csv(b)
        assert a.read_bytes() == b.read_bytes()

    def test_point_count(self):
        ds = synthesize_dataset(SynthConfig(regions=12, days=4, resolution_s=300))
        # 4 days x 24 h x 12 points per hour
        assert len(ds.regions) == 12
        for s in ds:
            assert len(s) == 4 * 24 * 12 == 1152

    def test_perfect_forecast_when_noise_zero(self):
        ds = synthesize_dataset(SynthConfig(regions=2, days=1, noise=0))
        for r in ds.regions:
            assert ds.series(r, Kind.ACTUAL) == ds.series(r, Kind.FORECAST).__class__(
                r, Kind.ACTUAL, *ds.series(r, Kind.FORECAST).coverage[:1], 300.0,
                ds.series(r, Kind.FORECAST).values)

    def test_noise_changes_forecast_only(self):
        clean = synthesize_dataset(SynthConfig(regions=2, days=1, noise=0, seed=1))
        noisy = synthesize_dataset(SynthConfig(regions=2, days=1, noise=25, seed=1))
        for r in clean.regions:
            assert clean.series(r, Kind.ACTUAL) == noisy.series(r, Kind.ACTUAL)
            assert clean.series(r, Kind.FORECAST) != noisy.series(r, Kind.FORECAST)

    @pytest.mark.parametrize("field,value", [("resolution_s", 0), ("days", -1), ("regions", 0)])
    def test_invalid(self, field, value):
        with pytest.raises(InvalidConfig):
            synthesize_dataset(SynthConfig(**{field: value}))

    def test_from_mapping_parses_strings(self):
        cfg = SynthConfig.from_mapping({"regions": "3", "base": "100,200,300", "noise": "1.5", "ignored": "x"})
        assert cfg.regions == 3 and cfg.base == [100, 200, 300] and cfg.noise == 1.5


def test_dataset_extension_holds_last_value():
    ds = two_point_dataset().extended_to(T0 + 5 * 3600)
    assert ds.coverage == (T0, T0 + 5 * 3600)
    assert intensity_at(ds, "r", T0 + 4 * 3600) == 50
