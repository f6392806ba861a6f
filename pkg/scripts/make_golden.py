"""Regenerate the golden model files and prediction vectors under tests/data.

Models are trained on the bundled fixture (avg_ohlc, 0.8/0.2 split); the
predictions are taken on the validation rows.
"""
from pathlib import Path

import numpy as np

from cryptoforecast.config import GbmConfig, RnnConfig
from cryptoforecast.gbtree import gbm_predict, gbm_serialize, gbm_train
from cryptoforecast.market_data import chronological_split, fetch_ohlc, record_coins, to_price_matrix
from cryptoforecast.recurrent import rnn_predict_array, rnn_serialize, rnn_train
from cryptoforecast.sources import FixtureSource

OUT = Path(__file__).resolve().parents[1] / "tests" / "data"
COINS = ["btc", "eth", "usdt", "usdc", "xrp", "busd", "ada", "doge"]
FEATURES = ["eth", "xrp", "doge", "ada"]


def golden_split():
    records = fetch_ohlc(COINS, "15-08-2023", "15-11-2023", FixtureSource())
    return chronological_split(to_price_matrix(records, "avg_ohlc", record_coins(records)), 0.8, 0.2)


def rnn_inputs(valid, window):
    values = valid.select(FEATURES).values
    return np.stack([values[t - window:t] for t in range(window, len(valid) + 1)])


def write_vector(path, values):
    path.write_text("".join(f"{float(v)!r}\n" for v in values), encoding="utf-8")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    split = golden_split()
    gbm = gbm_train(split.train, split.valid, "btc", FEATURES, GbmConfig(60, 0.2, 10, 7), "xgboost")
    gbm_serialize(gbm, OUT / "golden_gbm.txt")
    write_vector(OUT / "golden_gbm_predictions.txt", gbm_predict(gbm, split.valid))

    rnn = rnn_train(split.train, split.valid, "btc", FEATURES, RnnConfig("gru", 1, 4, 15, 8, 0.02, 5, 7, window=5))
    rnn_serialize(rnn, OUT / "golden_rnn.pth")
    write_vector(OUT / "golden_rnn_predictions.txt", rnn_predict_array(rnn, rnn_inputs(split.valid, 5)))


if __name__ == "__main__":
    main()
