"""Experiment configuration records and their JSON form."""
import json
import math
from dataclasses import asdict, dataclass

from cryptoforecast.errors import ConfigError

RNN_MODELS = ("lstm", "gru")
GBM_MODELS = ("xgboost", "lightgbm", "catboost")
MODELS = RNN_MODELS + GBM_MODELS


@dataclass(frozen=True)
class GbmConfig:
    rounds: int
    learning_rate: float
    patience: int
    seed: int
    max_depth: int = 3
    min_samples_leaf: int = 2
    reg_lambda: float = 1.0

    def __post_init__(self):
        _check_int(self, "rounds", 1)
        _check_int(self, "patience", 1)
        _check_int(self, "max_depth", 1)
        _check_int(self, "min_samples_leaf", 1)
        _check_int(self, "seed", None)
        lr = _check_real(self, "learning_rate")
        if not 0 < lr <= 1:
            raise ConfigError("learning_rate", f"must be in (0, 1], got {lr}")
        if _check_real(self, "reg_lambda", "lambda") < 0:
            raise ConfigError("lambda", f"must be >= 0, got {self.reg_lambda}")

    def to_json(self):
        d = asdict(self)
        d["lambda"] = d.pop("reg_lambda")
        return d


@dataclass(frozen=True)
class RnnConfig:
    cell: str
    layers: int
    hidden: int
    epochs: int
    batch_size: int
    learning_rate: float
    patience: int
    seed: int
    window: int = 7

    def __post_init__(self):
        if self.cell not in RNN_MODELS:
            raise ConfigError("cell", f"must be one of {RNN_MODELS}, got {self.cell!r}")
        for name in ("layers", "hidden", "epochs", "batch_size", "patience", "window"):
            _check_int(self, name, 1)
        _check_int(self, "seed", None)
        if _check_real(self, "learning_rate") < 0:
            raise ConfigError("learning_rate", f"must be >= 0, got {self.learning_rate}")

    def to_json(self):
        return asdict(self)


def _check_int(cfg, name, minimum):
    value = getattr(cfg, name)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value


def _check_real(cfg, name, label=None):
    value = getattr(cfg, name)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(label or name, f"must be a finite number, got {value!r}")
    return float(value)


COMMON_FIELDS = ("seed", "learning_rate", "patience")
GBM_FIELDS = {"required": ("rounds",) + COMMON_FIELDS, "optional": ("max_depth", "min_samples_leaf", "lambda")}
RNN_FIELDS = {"required": ("layers", "hidden", "epochs", "batch_size") + COMMON_FIELDS, "optional": ("window", "cell")}


def config_from_dict(data, model):
    """Validate a decoded config object for ``model`` and fill defaults."""
    if model not in MODELS:
        raise ConfigError("model", f"unknown model {model!r}; choose from {MODELS}")
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    fields = RNN_FIELDS if model in RNN_MODELS else GBM_FIELDS
    allowed = set(fields["required"]) | set(fields["optional"])
    unexpected = sorted(set(data) - allowed)
    if unexpected:
        raise ConfigError(unexpected[0], f"unexpected field(s) for {model}: {', '.join(unexpected)}")
    for name in fields["required"]:
        if name not in data:
            raise ConfigError(name, f"required for {model}")
    if model in RNN_MODELS:
        cell = data.get("cell", model)
        if cell != model:
            raise ConfigError("cell", f"{cell!r} contradicts model {model!r}")
        kwargs = {k: v for k, v in data.items() if k != "cell"}
        return RnnConfig(cell=model, **kwargs)
    kwargs = dict(data)
    if "lambda" in kwargs:
        kwargs["reg_lambda"] = kwargs.pop("lambda")
    return GbmConfig(**kwargs)


def parse_config(path, model):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(data, model)


def read_ticker_list(path):
    """Load a JSON array of tickers (coins.json / features.json)."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError("<file>", f"cannot load ticker list {path}: {exc}") from exc
    if not isinstance(data, list) or not data or not all(isinstance(t, str) for t in data):
        raise ConfigError("<root>", f"{path} must hold a non-empty JSON array of ticker strings")
    return [t.strip().lower() for t in data]
