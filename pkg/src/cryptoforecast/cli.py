"""Command-line entry point: data-pull, data-split, correlation-analysis,
model-pretrain and model-forecast.

Exit codes: 0 on success, 2 on usage errors, 1 on data or model errors.
Each output file gets a ``<file>.meta.json`` sidecar recording the command
and arguments that produced it (model files embed the same record).
"""
import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from cryptoforecast import correlation, evaluation, market_data, smoothing
from cryptoforecast._io import atomic_write
from cryptoforecast.config import GBM_MODELS, MODELS, RNN_MODELS, parse_config, read_ticker_list
from cryptoforecast.errors import DatasetError, ForecastError, ModelFormatError
from cryptoforecast.gbtree import gbm_deserialize, gbm_predict, gbm_serialize, gbm_train
from cryptoforecast.market_data import format_date, format_float
from cryptoforecast.recurrent import rnn_deserialize, rnn_predict_array, rnn_serialize, rnn_train
from cryptoforecast.sources import resolve_source

logger = logging.getLogger("cryptoforecast")

RNN_EXT = ".pth"
GBM_EXT = ".txt"


def _out_path(outdir, name, ext):
    if not name.endswith(ext):
        name += ext
    return os.path.join(outdir, name)


def _echo(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


def write_sidecar(path, args, **extra):
    record = {"command": args.command, "args": _echo(args), **extra}
    with atomic_write(path + ".meta.json") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- subcommands -------------------------------------------------------------


def cmd_data_pull(args):
    coins = read_ticker_list(args.coins)
    start, end = market_data.parse_date(args.start), market_data.parse_date(args.end)
    if start > end:
        raise DatasetError(f"--start {args.start} is after --end {args.end}")
    source = resolve_source(args.source)
    records = market_data.fetch_ohlc(coins, start, end, source)
    path = _out_path(args.outdir, args.filename, ".csv")
    market_data.write_dataset(records, path)
    write_sidecar(path, args, source=repr(source), records=len(records))
    print(f"wrote {len(records)} records for {len(coins)} coins to {path}")


def _load_matrix(path, variable):
    records = market_data.read_dataset(path)
    return market_data.to_price_matrix(records, variable, market_data.record_coins(records))


def cmd_data_split(args):
    matrix = _load_matrix(args.data, args.variable)
    split = market_data.chronological_split(matrix, args.train, args.valid)
    names = args.filenames
    for part, name in ((split.train, names[0]), (split.valid, names[1])):
        path = _out_path(args.outdir, name, ".csv")
        market_data.write_price_matrix(part, path)
        write_sidecar(path, args, variable=args.variable, rows=len(part),
                      first=format_date(part.dates[0]), last=format_date(part.dates[-1]))
        print(f"wrote {path}: {len(part)} rows, {format_date(part.dates[0])} to {format_date(part.dates[-1])}")


def cmd_correlation_analysis(args):
    matrix = _load_matrix(args.data, args.variable)
    corr = correlation.correlation_matrix(matrix, args.method, args.window)
    path = _out_path(args.outdir, args.filename, ".csv")
    correlation.write_correlations(corr, path)
    write_sidecar(path, args)
    print(f"wrote {args.method}/{args.window} cross-table for {len(corr.coins)} coins to {path}")


def cmd_model_pretrain(args):
    features = read_ticker_list(args.features)
    if args.target in features:
        raise DatasetError(f"target {args.target!r} is also listed in {args.features}")
    config = parse_config(args.config, args.model)
    train = market_data.read_price_matrix(args.train)
    valid = market_data.read_price_matrix(args.valid)
    record = {"model": args.model, "target": args.target, "features": features, "args": _echo(args)}
    if args.model in RNN_MODELS:
        model = rnn_train(train, valid, args.target, features, config)
        model.meta.update(record)
        path = _out_path(args.outdir, args.filename, RNN_EXT)
        rnn_serialize(model, path)
        summary = f"best epoch {model.meta['best_epoch']}, validation MSE {model.meta['best_valid_mse']:.6g}"
    else:
        model = gbm_train(train, valid, args.target, features, config, args.model)
        model.meta.update(record)
        path = _out_path(args.outdir, args.filename, GBM_EXT)
        gbm_serialize(model, path)
        summary = f"{len(model.trees)} trees, best round {model.best_round}"
    print(f"wrote {args.model} model to {path} ({summary})")


def load_model(path, model_name):
    if model_name in RNN_MODELS:
        return rnn_deserialize(path)
    return gbm_deserialize(path)


def check_model_matches(model, model_name, target, features):
    meta = model.meta
    mismatches = []
    if meta.get("model") != model_name:
        mismatches.append(f"model {meta.get('model')!r} != {model_name!r}")
    if meta.get("target") != target:
        mismatches.append(f"target {meta.get('target')!r} != {target!r}")
    if list(model.features) != list(features):
        mismatches.append(f"features {list(model.features)} != {list(features)}")
    if mismatches:
        raise ModelFormatError(
            "arguments must be the same used for pretraining: " + "; ".join(mismatches)
        )


def forecast_prices(model, model_name, valid, features, horizon):
    """Holt-extrapolate features over the horizon and run the pretrained model.

    Recurrent models see windows sliding over the validation tail followed
    by the extrapolated rows, so every horizon day has a full window.
    """
    future = smoothing.forecast_features(valid, features, horizon)
    if model_name in GBM_MODELS:
        return future.dates, gbm_predict(model, future)
    need = model.window - 1
    if len(valid) < need:
        raise DatasetError(f"validation set has {len(valid)} rows; window {model.window} needs {need}")
    history = valid.select(features).values[len(valid) - need:]
    joined = np.vstack([history, future.values])
    windows = np.stack([joined[k:k + model.window] for k in range(horizon)])
    return future.dates, rnn_predict_array(model, windows)


def read_actuals(path, target, dates):
    """Actual prices for ``dates``: a Date,<coin>... CSV or one number per line."""
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines and lines[0].startswith("Date"):
        rows = list(csv.reader(lines))
        header = [h.strip().lower() for h in rows[0]]
        if target not in header:
            raise DatasetError(f"{path} has no {target!r} column")
        col = header.index(target)
        table = {market_data.parse_date(r[0]): float(r[col]) for r in rows[1:]}
        missing = [format_date(d) for d in dates if d not in table]
        if missing:
            raise DatasetError(f"{path} lacks actuals for {', '.join(missing)}")
        return np.array([table[d] for d in dates])
    try:
        values = [float(ln.split(":")[-1]) for ln in lines]
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    if len(values) != len(dates):
        raise DatasetError(f"{path} holds {len(values)} actuals for a {len(dates)}-day horizon")
    return np.array(values)


def format_predictions(predicted, actual=None):
    if actual is None:
        return "".join(f"Predicted: {format_float(p)}\n" for p in predicted)
    return "".join(f"Predicted: {format_float(p)}, Real: {format_float(r)}\n" for p, r in zip(predicted, actual))


def cmd_model_forecast(args):
    if args.horizon < 1:
        raise DatasetError(f"--horizon must be >= 1, got {args.horizon}")
    features = read_ticker_list(args.features)
    model = load_model(args.pretrained, args.model)
    check_model_matches(model, args.model, args.target, features)
    valid = market_data.read_price_matrix(args.valid)
    dates, predicted = forecast_prices(model, args.model, valid, features, args.horizon)
    actual = read_actuals(args.actuals, args.target, dates) if args.actuals else None
    path = _out_path(args.outdir, args.filename, ".txt")
    extra = {"dates": [format_date(d) for d in dates]}
    report = None
    if actual is not None:
        report = evaluation.evaluate(predicted, actual)
        extra["metrics"] = {"mape": report.mape, "rmse": report.rmse, "n": report.n}
    with atomic_write(path) as fh:
        fh.write(format_predictions(predicted, actual))
    write_sidecar(path, args, **extra)
    if report is not None:
        evaluation.write_metrics(report, _out_path(args.outdir, args.filename + "_metrics", ".csv"))
    print(f"wrote {args.horizon} {args.target} predictions ({extra['dates'][0]} to {extra['dates'][-1]}) to {path}")
    for day, p in zip(dates, predicted):
        print(f"  {format_date(day)}  {p:.2f}")
    if report is not None:
        print(report.summary())


# -- parser ----------------------------------------------------------------


def _ratio(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="cryptoforecast", description="Cryptocurrency price forecasting pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--outdir", default=".", help="destination directory (default: cwd)")
        p.set_defaults(func=func)
        return p

    p = command("data-pull", cmd_data_pull, "pull a daily OHLC dataset")
    p.add_argument("--filename", default="dataset", help="output name, .csv appended")
    p.add_argument("--coins", required=True, help="JSON array of tickers")
    p.add_argument("--start", required=True, help="first day, dd-mm-YYYY")
    p.add_argument("--end", required=True, help="last day, dd-mm-YYYY")
    p.add_argument("--source", default=None,
                   help="fixture | fixture:<dir> | live | <url> (default: $CRYPTOFORECAST_SOURCE or live)")

    p = command("data-split", cmd_data_split, "chronological train/validation split")
    p.add_argument("--filenames", nargs=2, default=["train", "valid"], metavar=("TRAIN", "VALID"))
    p.add_argument("--data", required=True, help="dataset CSV from data-pull")
    p.add_argument("--variable", default="avg_ohlc", choices=market_data.VARIABLES)
    p.add_argument("--train", type=_ratio, default=0.8)
    p.add_argument("--valid", type=_ratio, default=0.2)

    p = command("correlation-analysis", cmd_correlation_analysis, "coin cross-correlation table")
    p.add_argument("--filename", default="correlations")
    p.add_argument("--data", required=True, help="dataset CSV from data-pull")
    p.add_argument("--variable", default="avg_ohlc", choices=market_data.VARIABLES)
    p.add_argument("--window", default="daily", choices=correlation.WINDOWS)
    p.add_argument("--method", default="pearson", choices=correlation.METHODS)

    p = command("model-pretrain", cmd_model_pretrain, "train a forecasting model")
    p.add_argument("--filename", required=True, help=f"output name; {RNN_EXT} or {GBM_EXT} appended")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--target", required=True, type=str.lower)
    p.add_argument("--features", required=True, help="JSON array of feature tickers")
    p.add_argument("--model", required=True, choices=MODELS, type=str.lower)
    p.add_argument("--config", required=True, help="JSON experiment configuration")

    p = command("model-forecast", cmd_model_forecast, "forecast the target over a horizon")
    p.add_argument("--filename", default="predictions", help="output name, .txt appended")
    p.add_argument("--valid", required=True)
    p.add_argument("--horizon", required=True, type=int, help="number of future days")
    p.add_argument("--pretrained", required=True)
    p.add_argument("--target", required=True, type=str.lower)
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True, choices=MODELS, type=str.lower)
    p.add_argument("--actuals", default=None,
                   help="observed prices (Date,<coin> CSV or one per line) to add Real values and metrics")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ForecastError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
