"""Pearson, Spearman and Kendall tau-b coefficients and coin cross-tables."""
import csv
from dataclasses import dataclass

import numpy as np

from cryptoforecast._io import atomic_write
from cryptoforecast.errors import DatasetError, UndefinedCoefficientError
from cryptoforecast.market_data import PriceMatrix, format_float

METHODS = ("pearson", "kendall", "spearman")
WINDOWS = ("daily", "weekly", "monthly")


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"series shapes differ: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise ValueError("need at least 2 observations")
    return x, y


def pearson(x, y):
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCoefficientError("pearson undefined for a constant series")
    r = np.dot(dx, dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def average_ranks(x):
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y):
    x, y = _pair(x, y)
    try:
        return pearson(average_ranks(x), average_ranks(y))
    except UndefinedCoefficientError:
        raise UndefinedCoefficientError("spearman undefined for a constant series") from None


def kendall_tau_b(x, y):
    x, y = _pair(x, y)
    n = len(x)
    iu = np.triu_indices(n, k=1)
    sx = np.sign(x[:, None] - x[None, :])[iu]
    sy = np.sign(y[:, None] - y[None, :])[iu]
    prod = sx * sy
    concordant = int(np.count_nonzero(prod > 0))
    discordant = int(np.count_nonzero(prod < 0))
    n0 = n * (n - 1) // 2
    ties_x = int(np.count_nonzero(sx == 0))
    ties_y = int(np.count_nonzero(sy == 0))
    denom = (n0 - ties_x) * (n0 - ties_y)
    if denom == 0:
        raise UndefinedCoefficientError("kendall tau-b undefined: every pair tied in one series")
    return (concordant - discordant) / np.sqrt(float(denom))


COEFFICIENTS = {"pearson": pearson, "kendall": kendall_tau_b, "spearman": spearman}


def resample(matrix, window):
    """Average rows into ISO-week or calendar-month buckets.

    Each bucket is dated by the last day present in it. ``daily`` returns
    the input unchanged.
    """
    if window not in WINDOWS:
        raise DatasetError(f"unknown window {window!r}; choose from {WINDOWS}")
    if len(matrix) == 0:
        raise DatasetError("empty matrix")
    if window == "daily":
        out = matrix
    else:
        if window == "weekly":
            key = lambda d: tuple(d.isocalendar())[:2]  # noqa: E731
        else:
            key = lambda d: (d.year, d.month)  # noqa: E731
        buckets = {}
        for i, day in enumerate(matrix.dates):
            buckets.setdefault(key(day), []).append(i)
        dates, rows = [], []
        for idx in buckets.values():
            dates.append(matrix.dates[idx[-1]])
            rows.append(matrix.values[idx].mean(axis=0))
        out = PriceMatrix(dates, matrix.coins, np.array(rows), matrix.variable)
    if len(out) < 2:
        raise DatasetError(f"{window} resampling leaves {len(out)} row(s); correlation needs 2")
    return out


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    coins: tuple
    method: str
    window: str
    values: np.ndarray

    def get(self, a, b):
        return float(self.values[self.coins.index(a), self.coins.index(b)])

    def above(self, coin, threshold):
        """Other coins whose coefficient against ``coin`` exceeds ``threshold``."""
        return [c for c in self.coins if c != coin and self.get(coin, c) > threshold]


def correlation_matrix(matrix, method="pearson", window="daily"):
    if method not in COEFFICIENTS:
        raise DatasetError(f"unknown method {method!r}; choose from {METHODS}")
    if len(matrix.coins) < 2:
        raise DatasetError("correlation needs at least 2 coins")
    series = resample(matrix, window)
    coef = COEFFICIENTS[method]
    k = len(series.coins)
    values = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            a, b = series.coins[i], series.coins[j]
            try:
                r = coef(series.values[:, i], series.values[:, j])
            except UndefinedCoefficientError as exc:
                raise UndefinedCoefficientError(f"{a} vs {b}: {exc}") from None
            values[i, j] = values[j, i] = r
    return CorrelationMatrix(series.coins, method, window, values)


def write_correlations(corr, path):
    with atomic_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["coin", *corr.coins])
        for coin, row in zip(corr.coins, corr.values):
            writer.writerow([coin, *(format_float(v) for v in row)])


def read_correlations(path, method="pearson", window="daily"):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    coins = tuple(rows[0][1:])
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return CorrelationMatrix(coins, method, window, values)
