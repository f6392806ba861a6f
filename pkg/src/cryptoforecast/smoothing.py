"""Holt (level + trend) exponential smoothing with a grid-searched fit."""
import datetime as dt
from dataclasses import dataclass

import numpy as np

from cryptoforecast.errors import DatasetError
from cryptoforecast.market_data import PriceMatrix

GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))
PRICE_FLOOR = 1e-8


@dataclass(frozen=True)
class HoltModel:
    alpha: float
    beta: float
    level: float
    trend: float
    sse: float


def holt_run(series, alpha, beta):
    """Run the recursions at fixed weights.

    Returns ``(levels, trends, sse)`` with ``levels[0] = y[0]`` and
    ``trends[0] = y[1] - y[0]``. The updates are written in error-correction
    form, which is algebraically the usual weighted-average form but keeps
    exact one-step forecasts exact in floating point.
    """
    y = np.asarray(series, dtype=np.float64)
    n = len(y)
    levels = np.empty(n)
    trends = np.empty(n)
    levels[0] = y[0]
    trends[0] = y[1] - y[0]
    sse = 0.0
    for t in range(1, n):
        forecast = levels[t - 1] + trends[t - 1]
        err = y[t] - forecast
        sse += err * err
        levels[t] = forecast + alpha * err
        trends[t] = trends[t - 1] + beta * (levels[t] - levels[t - 1] - trends[t - 1])
    return levels, trends, sse


def holt_fit(series, grid=GRID):
    """Pick (alpha, beta) on the grid minimising one-step-ahead SSE.

    Ties go to the smaller alpha, then the smaller beta.
    """
    y = np.asarray(series, dtype=np.float64)
    if y.ndim != 1 or len(y) < 3:
        raise DatasetError(f"Holt smoothing needs at least 3 observations, got {len(y)}")
    best = None
    for alpha in grid:
        for beta in grid:
            levels, trends, sse = holt_run(y, alpha, beta)
            if best is None or sse < best.sse:
                best = HoltModel(alpha, beta, float(levels[-1]), float(trends[-1]), float(sse))
    return best


def holt_forecast(model, horizon, floor=PRICE_FLOOR):
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    steps = np.arange(1, horizon + 1, dtype=np.float64)
    return np.maximum(model.level + steps * model.trend, floor)


def forecast_features(valid, features, horizon):
    """Extrapolate each feature column ``horizon`` days past the last valid date."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    missing = [f for f in features if f not in valid.coins]
    if missing:
        raise DatasetError(f"features missing from validation set: {missing}")
    columns = [holt_forecast(holt_fit(valid.column(f)), horizon) for f in features]
    last = valid.dates[-1]
    dates = [last + dt.timedelta(days=k) for k in range(1, horizon + 1)]
    return PriceMatrix(dates, features, np.column_stack(columns), valid.variable)
