import datetime as dt

import numpy as np
import pytest

from cryptoforecast.errors import DatasetError
from cryptoforecast.smoothing import GRID, HoltModel, forecast_features, holt_fit, holt_forecast, holt_run

from conftest import make_matrix
from oracles import holt_transcript

SERIES = [10.0, 12.0, 13.0, 15.0, 14.0]
# hand recursion at alpha = beta = 0.5, l1 = 10, b1 = 2
HAND_LEVELS = [10.0, 12.0, 13.5, 15.125, 15.40625]
HAND_TRENDS = [2.0, 2.0, 1.75, 1.6875, 0.984375]
HAND_SSE = 0.0 + 1.0 + 0.0625 + 7.91015625


def grid_scan(y):
    """Exhaustive scan over the 19 x 19 grid using the independent transcript."""
    alphas = [k / 20 for k in range(1, 20)]
    table = {(a, b): holt_transcript(y, a, b)[2] for a in alphas for b in alphas}
    best = min(table.values())
    return table, best, min(k for k, v in table.items() if v == best)


def test_grid_values():
    assert len(GRID) == 19 and GRID[0] == 0.05 and GRID[-1] == 0.95


def test_hand_transcript():
    levels, trends, sse = holt_run(SERIES, 0.5, 0.5)
    np.testing.assert_allclose(levels, HAND_LEVELS, rtol=0, atol=1e-12)
    np.testing.assert_allclose(trends, HAND_TRENDS, rtol=0, atol=1e-12)
    assert sse == pytest.approx(HAND_SSE, abs=1e-12)
    model = HoltModel(0.5, 0.5, levels[-1], trends[-1], sse)
    np.testing.assert_allclose(
        holt_forecast(model, 3), [15.40625 + 0.984375 * k for k in (1, 2, 3)], rtol=0, atol=1e-12
    )


def test_hand_series_grid_selection():
    table, best, (a, b) = grid_scan(SERIES)
    fit = holt_fit(SERIES)
    assert (fit.alpha, fit.beta) == (a, b)
    assert fit.sse == pytest.approx(best, rel=1e-12)


def test_constant_series():
    fit = holt_fit([4.2] * 10)
    assert (fit.alpha, fit.beta) == (0.05, 0.05)
    assert (fit.level, fit.trend, fit.sse) == (4.2, 0.0, 0.0)
    assert holt_forecast(fit, 5).tolist() == [4.2] * 5


def test_exact_line():
    y = [3.0 + 2.0 * t for t in range(12)]
    for a in GRID:
        for b in GRID:
            _, _, sse = holt_run(y, a, b)
            assert sse == 0.0
    fit = holt_fit(y)
    assert (fit.level, fit.trend, fit.sse) == (y[-1], 2.0, 0.0)
    assert holt_forecast(fit, 4).tolist() == [y[-1] + 2.0 * k for k in (1, 2, 3, 4)]


def test_short_series():
    with pytest.raises(DatasetError):
        holt_fit([1.0, 2.0])


def test_forecast_floor_and_horizon():
    model = HoltModel(0.5, 0.5, 1.0, -2.0, 0.0)
    assert holt_forecast(model, 3).tolist() == [1e-8, 1e-8, 1e-8]
    with pytest.raises(ValueError):
        holt_forecast(model, 0)


@pytest.mark.parametrize("seed", range(10))
def test_grid_optimality_and_equivariance(seed):
    rng = np.random.default_rng(seed)
    y = 100 + np.cumsum(rng.normal(0, 2, 18))
    fit = holt_fit(y)
    table, best, key = grid_scan(list(y))
    assert (fit.alpha, fit.beta) == key
    assert all(fit.sse <= v * (1 + 1e-12) for v in table.values())

    shifted = holt_fit(y + 250.0)
    assert (shifted.alpha, shifted.beta) == (fit.alpha, fit.beta)
    assert shifted.level == pytest.approx(fit.level + 250.0, rel=1e-12)
    assert shifted.trend == pytest.approx(fit.trend, rel=1e-8, abs=1e-9)
    assert shifted.sse == pytest.approx(fit.sse, rel=1e-8)

    scaled = holt_fit(3.0 * y)
    assert (scaled.alpha, scaled.beta) == (fit.alpha, fit.beta)
    assert scaled.level == pytest.approx(3 * fit.level, rel=1e-12)
    assert scaled.trend == pytest.approx(3 * fit.trend, rel=1e-10)
    assert scaled.sse == pytest.approx(9 * fit.sse, rel=1e-10)

    steps = np.diff(holt_forecast(fit, 6, floor=-np.inf))
    np.testing.assert_allclose(steps, fit.trend, rtol=1e-9, atol=1e-9)


def test_forecast_features_dates(fixture_split):
    out = forecast_features(fixture_split.valid, ["eth", "xrp", "doge", "ada"], 7)
    assert out.dates[0] == dt.date(2023, 11, 16)
    assert out.dates[-1] == dt.date(2023, 11, 22)
    assert out.coins == ("eth", "xrp", "doge", "ada")
    assert out.values.shape == (7, 4)


def test_forecast_features_columnwise():
    rng = np.random.default_rng(2)
    a = 50 + np.cumsum(rng.normal(size=12))
    b = 20 + np.cumsum(rng.normal(size=12))
    valid = make_matrix(np.column_stack([a, b]), ["a", "b"])
    out = forecast_features(valid, ["b", "a"], 4)
    assert np.array_equal(out.column("a"), holt_forecast(holt_fit(a), 4))
    assert np.array_equal(out.column("b"), holt_forecast(holt_fit(b), 4))


def test_forecast_features_constant():
    out = forecast_features(make_matrix(np.full(5, 3.0), ["x"]), ["x"], 7)
    assert out.values[:, 0].tolist() == [3.0] * 7


def test_forecast_features_missing():
    with pytest.raises(DatasetError, match="zzz"):
        forecast_features(make_matrix(np.arange(1.0, 6.0), ["x"]), ["zzz"], 2)
