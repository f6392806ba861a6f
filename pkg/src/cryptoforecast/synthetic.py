"""Seeded synthetic OHLC markets with a shared log-price factor.

Used to record the bundled offline fixture and to build datasets with a
known generative process for quality checks.
"""
import datetime as dt
from dataclasses import dataclass

import numpy as np

from cryptoforecast.market_data import OhlcRecord


@dataclass(frozen=True)
class CoinSpec:
    coin: str
    price: float  # close on day 0
    beta: float  # loading on the market factor, log space
    idio: float  # daily sd of the idiosyncratic log component
    wick: float = 0.01  # typical high/low excursion beyond the candle body
    stable: bool = False  # pegged around ``price``; ignores the factor


PAPER_COINS = (
    CoinSpec("btc", 29200.0, 1.0, 0.004, 0.012),
    CoinSpec("eth", 1840.0, 0.95, 0.010, 0.015),
    CoinSpec("usdt", 1.0, 0.0, 0.0004, 0.0008, stable=True),
    CoinSpec("usdc", 1.0, 0.0, 0.0003, 0.0006, stable=True),
    CoinSpec("xrp", 0.62, 1.1, 0.030, 0.025),
    CoinSpec("busd", 1.0, 0.0, 0.0006, 0.0010, stable=True),
    CoinSpec("ada", 0.28, 1.05, 0.020, 0.020),
    CoinSpec("doge", 0.068, 1.1, 0.022, 0.025),
)

# Rough shape of the BTC path over 15-08-2023 .. 15-11-2023, as (day offset, price).
PAPER_ANCHORS = (
    (0, 29200.0), (2, 29100.0), (3, 26600.0), (20, 25900.0), (30, 26500.0),
    (45, 26900.0), (55, 27600.0), (60, 26850.0), (66, 30000.0), (70, 33900.0),
    (80, 34700.0), (86, 36700.0), (88, 37200.0), (92, 36500.0),
)


def factor_path(days, rng, anchors=None, vol=0.012, phi=0.8):
    """Log market factor relative to day 0.

    With ``anchors`` the factor follows the log-linear interpolation of the
    anchor prices plus AR(1) noise; without, it is a driftless random walk.
    """
    shocks = rng.normal(0.0, vol, days)
    if anchors is None:
        path = np.cumsum(shocks)
        return path - path[0]
    offsets, prices = zip(*anchors)
    base = np.interp(np.arange(days), offsets, np.log(prices))
    noise = np.zeros(days)
    for t in range(1, days):
        noise[t] = phi * noise[t - 1] + shocks[t]
    path = base + noise
    return path - path[0]


def _sig(x, digits=8):
    return float(f"{x:.{digits}g}")


def synthesize(start, days, seed, coins=PAPER_COINS, anchors=None, vol=0.012):
    """Daily OHLC records for every coin, ordered by coin then date."""
    rng = np.random.default_rng(seed)
    start = start if isinstance(start, dt.date) else dt.date.fromisoformat(start)
    factor = factor_path(days, rng, anchors, vol)
    records = []
    for spec in coins:
        idio = np.zeros(days)
        eps = rng.normal(0.0, spec.idio, days)
        for t in range(1, days):
            idio[t] = 0.9 * idio[t - 1] + eps[t]
        if spec.stable:
            close = spec.price * (1.0 + eps)
        else:
            close = spec.price * np.exp(spec.beta * factor + idio)
        opens = np.concatenate([[close[0] * (1.0 + rng.normal(0.0, spec.wick / 4))], close[:-1]])
        up = np.abs(rng.normal(0.0, spec.wick, days))
        down = np.abs(rng.normal(0.0, spec.wick, days))
        for t in range(days):
            o, c = _sig(opens[t]), _sig(close[t])
            h = _sig(max(o, c) * (1.0 + up[t]))
            lo = _sig(min(o, c) * (1.0 - min(down[t], 0.5)))
            records.append(OhlcRecord(start + dt.timedelta(days=t), spec.coin, o, max(h, o, c), min(lo, o, c), c))
    return records


def to_payload(records, coin):
    """Render one coin's records in the source payload schema."""
    quotes = [
        {
            "timeOpen": f"{r.date.isoformat()}T00:00:00.000Z",
            "quote": {"open": r.open, "high": r.high, "low": r.low, "close": r.close},
        }
        for r in records
        if r.coin == coin
    ]
    return {"data": {"symbol": coin.upper(), "quotes": quotes}}
