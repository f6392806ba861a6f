"""Forecast accuracy metrics."""
import csv
from dataclasses import dataclass

import numpy as np

from cryptoforecast._io import atomic_write
from cryptoforecast.market_data import format_float

# MAPE below this many percent is conventionally read as a highly accurate forecast.
HIGH_ACCURACY_MAPE = 10.0


def _paired(predicted, actual):
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: {p.shape} predicted vs {a.shape} actual")
    if len(p) == 0:
        raise ValueError("need at least one point")
    return p, a


def mape(predicted, actual):
    """Mean absolute percentage error, in percent."""
    p, a = _paired(predicted, actual)
    if np.any(a == 0):
        raise ValueError("MAPE undefined: an actual value is zero")
    return float(100.0 * np.mean(np.abs(p - a) / np.abs(a)))


def rmse(predicted, actual):
    p, a = _paired(predicted, actual)
    return float(np.sqrt(np.mean((p - a) ** 2)))


@dataclass(frozen=True)
class MetricReport:
    mape: float
    rmse: float
    n: int

    @property
    def highly_accurate(self):
        return self.mape < HIGH_ACCURACY_MAPE

    def summary(self):
        return f"MAPE: {self.mape:.2f}%, RMSE: {self.rmse:.2f} (n={self.n})"


def evaluate(predicted, actual):
    return MetricReport(mape(predicted, actual), rmse(predicted, actual), len(actual))


def write_metrics(report, path):
    with atomic_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mape", "rmse", "n"])
        writer.writerow([format_float(report.mape), format_float(report.rmse), report.n])
