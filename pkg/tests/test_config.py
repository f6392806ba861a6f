import json

import pytest

from cryptoforecast.config import GbmConfig, RnnConfig, config_from_dict, parse_config, read_ticker_list
from cryptoforecast.errors import ConfigError

MIN_RNN = {"layers": 1, "hidden": 8, "epochs": 3, "batch_size": 4, "seed": 0, "learning_rate": 0.01, "patience": 2}
MIN_GBM = {"rounds": 10, "seed": 0, "learning_rate": 0.1, "patience": 3}


def test_minimal_rnn_defaults():
    cfg = config_from_dict(MIN_RNN, "gru")
    assert cfg == RnnConfig("gru", 1, 8, 3, 4, 0.01, 2, 0, window=7)


def test_minimal_gbm_defaults():
    cfg = config_from_dict(MIN_GBM, "catboost")
    assert (cfg.max_depth, cfg.min_samples_leaf, cfg.reg_lambda) == (3, 2, 1.0)
    assert cfg.to_json()["lambda"] == 1.0


@pytest.mark.parametrize(
    "model,data,field",
    [
        ("lstm", {**MIN_RNN, "patience": 0}, "patience"),
        ("lstm", {k: v for k, v in MIN_RNN.items() if k != "hidden"}, "hidden"),
        ("lstm", {**MIN_RNN, "layers": 1.5}, "layers"),
        ("xgboost", {**MIN_GBM, "learning_rate": 0.0}, "learning_rate"),
        ("xgboost", {**MIN_GBM, "lambda": -1}, "lambda"),
        ("lightgbm", {**MIN_GBM, "rounds": 0}, "rounds"),
        ("gru", {**MIN_RNN, "cell": "lstm"}, "cell"),
    ],
)
def test_field_errors_name_the_field(model, data, field):
    with pytest.raises(ConfigError) as err:
        config_from_dict(data, model)
    assert err.value.field == field
    assert field in str(err.value)


def test_gbm_config_for_rnn_lists_unexpected():
    with pytest.raises(ConfigError, match="rounds") as err:
        config_from_dict({**MIN_GBM, "max_depth": 2}, "lstm")
    assert "max_depth" in str(err.value)


def test_unknown_model():
    with pytest.raises(ConfigError):
        config_from_dict(MIN_GBM, "prophet")


def test_bundled_config_round_trip(workdir):
    cfg = parse_config("examples/config_nn.json", "lstm")
    assert (cfg.layers, cfg.hidden, cfg.window) == (1, 16, 7)
    again = workdir / "again.json"
    again.write_text(json.dumps(cfg.to_json()))
    assert parse_config(again, "lstm") == cfg
    gbm = parse_config("examples/config_gbm.json", "xgboost")
    again.write_text(json.dumps(gbm.to_json()))
    assert parse_config(again, "xgboost") == gbm
    assert isinstance(gbm, GbmConfig)


def test_bad_files(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(p, "lstm")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json", "lstm")
    p.write_text('{"btc": 1}')
    with pytest.raises(ConfigError):
        read_ticker_list(p)
    p.write_text('["BTC", " Eth "]')
    assert read_ticker_list(p) == ["btc", "eth"]
