import datetime as dt
import shutil
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from cryptoforecast.market_data import (
    PriceMatrix,
    chronological_split,
    fetch_ohlc,
    record_coins,
    to_price_matrix,
)
from cryptoforecast.sources import FixtureSource

DATA = Path(__file__).parent / "data"
PAPER_COINS = ["btc", "eth", "usdt", "usdc", "xrp", "busd", "ada", "doge"]
FEATURES = ["eth", "xrp", "doge", "ada"]


def daily(start, n):
    return [start + dt.timedelta(days=i) for i in range(n)]


def make_matrix(values, coins=None, start=dt.date(2023, 1, 1)):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    coins = coins or [f"c{i}" for i in range(values.shape[1])]
    return PriceMatrix(daily(start, len(values)), coins, values)


@pytest.fixture(scope="session")
def fixture_records():
    return fetch_ohlc(PAPER_COINS, "15-08-2023", "15-11-2023", FixtureSource())


@pytest.fixture(scope="session")
def fixture_matrix(fixture_records):
    return to_price_matrix(fixture_records, "avg_ohlc", record_coins(fixture_records))


@pytest.fixture(scope="session")
def fixture_split(fixture_matrix):
    return chronological_split(fixture_matrix, 0.8, 0.2)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """Temp cwd holding examples/{coins,features,config_*}.json, fixture source selected."""
    examples = tmp_path / "examples"
    examples.mkdir()
    bundled = resources.files("cryptoforecast") / "data" / "examples"
    for name in ("coins.json", "features.json", "config_nn.json", "config_gbm.json"):
        shutil.copyfile(str(bundled / name), examples / name)
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("CRYPTOFORECAST_SOURCE", "fixture")
    return tmp_path
