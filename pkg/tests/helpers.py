"""Small builders shared by the test modules."""

import numpy as np

from carbonci.carbon import CarbonIntensitySeries, IntensityDataset, Kind
from carbonci.timeutil import parse_instant

T0 = parse_instant("2022-10-12T00:00:00Z")


def dataset(values_by_region, resolution=300.0, start=T0, actual=None):
    """Forecast (and actual) series from plain lists; actual defaults to the forecast."""
    series = []
    for region, values in values_by_region.items():
        series.append(CarbonIntensitySeries(region, Kind.FORECAST, start, resolution,
                                            np.asarray(values, dtype=float)))
        real = values if actual is None else actual[region]
        series.append(CarbonIntensitySeries(region, Kind.ACTUAL, start, resolution,
                                            np.asarray(real, dtype=float)))
    return IntensityDataset(series)
