"""OHLC records, the dataset CSV, date-aligned price matrices and the
chronological train/validation split."""
import csv
import datetime as dt
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from cryptoforecast._io import atomic_write
from cryptoforecast.errors import DatasetError, SourceError

logger = logging.getLogger(__name__)

DATE_FORMAT = "%d-%m-%Y"
DATASET_HEADER = ["Date", "Open", "High", "Low", "Close", "Coin"]
VARIABLES = ("avg_ohlc", "close")


def parse_date(value):
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    try:
        return dt.datetime.strptime(value, DATE_FORMAT).date()
    except (TypeError, ValueError):
        raise DatasetError(f"invalid date {value!r}, expected day-month-year like 15-08-2023") from None


def format_date(day):
    return day.strftime(DATE_FORMAT)


def format_float(x):
    # repr is the shortest string that round-trips and ignores locale
    return repr(float(x))


@dataclass(frozen=True)
class OhlcRecord:
    date: dt.date
    coin: str
    open: float
    high: float
    low: float
    close: float

    def validate(self):
        """Raise ``DatasetError`` unless the candle is internally consistent."""
        values = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(v) for v in values):
            raise DatasetError(f"{self.coin} {format_date(self.date)}: non-finite price")
        if not self.high >= self.low > 0:
            raise DatasetError(
                f"{self.coin} {format_date(self.date)}: need high >= low > 0, "
                f"got high={self.high!r} low={self.low!r}"
            )
        for name in ("open", "close"):
            v = getattr(self, name)
            if not self.low <= v <= self.high:
                raise DatasetError(
                    f"{self.coin} {format_date(self.date)}: {name}={v!r} outside [low, high]"
                )
        return self


@dataclass(frozen=True, eq=False)
class PriceMatrix:
    """One scalar price per coin per day; rows are strictly increasing dates."""

    dates: tuple
    coins: tuple
    values: np.ndarray
    variable: str = "avg_ohlc"

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "coins", tuple(self.coins))
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape != (len(self.dates), len(self.coins)):
            raise DatasetError(
                f"values shape {values.shape} does not match {len(self.dates)} dates x {len(self.coins)} coins"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.variable not in VARIABLES:
            raise DatasetError(f"unknown price variable {self.variable!r}")
        if len(set(self.coins)) != len(self.coins):
            raise DatasetError(f"duplicate coins in {self.coins}")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DatasetError("dates must be strictly increasing")
        if values.size and not (np.all(np.isfinite(values)) and np.all(values > 0)):
            raise DatasetError("all prices must be finite and positive")

    def __len__(self):
        return len(self.dates)

    def __eq__(self, other):
        if not isinstance(other, PriceMatrix):
            return NotImplemented
        return (
            self.dates == other.dates
            and self.coins == other.coins
            and self.variable == other.variable
            and np.array_equal(self.values, other.values)
        )

    def column(self, coin):
        try:
            return self.values[:, self.coins.index(coin)]
        except ValueError:
            raise DatasetError(f"coin {coin!r} not in matrix columns {list(self.coins)}") from None

    def select(self, coins):
        cols = [self.column(c) for c in coins]
        values = np.column_stack(cols) if cols else np.empty((len(self.dates), 0))
        return PriceMatrix(self.dates, coins, values, self.variable)

    def rows(self, start=None, stop=None):
        sl = slice(start, stop)
        return PriceMatrix(self.dates[sl], self.coins, self.values[sl], self.variable)


@dataclass(frozen=True)
class SplitPair:
    train: PriceMatrix
    valid: PriceMatrix


# -- fetching ---------------------------------------------------------------


def fetch_ohlc(coins, start, end, source, max_workers=4):
    """Fetch daily candles for ``coins`` over the inclusive window [start, end].

    ``source`` is any object with ``fetch_quotes(coin, start, end)`` returning
    a parsed list of ``OhlcRecord`` (see :mod:`cryptoforecast.sources`).
    Output is ordered by coin (as given) then date, whatever order the
    per-coin requests finish in.
    """
    start, end = parse_date(start), parse_date(end)
    if start > end:
        raise DatasetError(f"start {format_date(start)} is after end {format_date(end)}")
    coins = [c.strip().lower() for c in coins]
    if not coins:
        raise DatasetError("coin list is empty")

    def one(coin):
        records = [r for r in source.fetch_quotes(coin, start, end) if start <= r.date <= end]
        if not records:
            raise SourceError(f"no {coin} quotes between {format_date(start)} and {format_date(end)}")
        by_date = {}
        for r in records:
            r.validate()
            if r.date in by_date and by_date[r.date] != r:
                raise SourceError(f"conflicting {coin} quotes for {format_date(r.date)}")
            by_date[r.date] = r
        return [by_date[d] for d in sorted(by_date)]

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        per_coin = list(pool.map(one, coins))
    return [r for recs in per_coin for r in recs]


# -- dataset CSV ------------------------------------------------------------


def write_dataset(records, path):
    records = list(records)
    if not records:
        raise DatasetError("refusing to write an empty dataset")
    with atomic_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DATASET_HEADER)
        for r in records:
            writer.writerow(
                [format_date(r.date), format_float(r.open), format_float(r.high),
                 format_float(r.low), format_float(r.close), r.coin]
            )


def read_dataset(path):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    records = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DATASET_HEADER:
            raise DatasetError(f"{path}: expected header {','.join(DATASET_HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 6:
                raise DatasetError(f"{path} row {line}: expected 6 fields, got {len(row)}")
            try:
                day = dt.datetime.strptime(row[0], DATE_FORMAT).date()
                o, h, lo, c = (float(x) for x in row[1:5])
            except ValueError as exc:
                raise DatasetError(f"{path} row {line}: {exc}") from None
            rec = OhlcRecord(day, row[5].strip().lower(), o, h, lo, c)
            try:
                rec.validate()
            except DatasetError as exc:
                raise DatasetError(f"{path} row {line}: {exc}") from None
            records.append(rec)
    if not records:
        raise DatasetError(f"{path}: no data rows")
    return records


def record_coins(records):
    """Tickers in order of first appearance."""
    return list(dict.fromkeys(r.coin for r in records))


def to_price_matrix(records, variable="avg_ohlc", coins=None):
    """Collapse candles to one price per coin-day.

    ``avg_ohlc`` is the plain (O+H+L+C)/4. Only dates present for every coin
    are kept; dropped dates are logged. Without ``coins`` the columns are the
    sorted tickers, so the result does not depend on record order.
    """
    if variable not in VARIABLES:
        raise DatasetError(f"unknown price variable {variable!r}; choose from {VARIABLES}")
    records = list(records)
    if not records:
        raise DatasetError("no records")
    table = {}
    for r in records:
        if variable == "avg_ohlc":
            price = (r.open + r.high + r.low + r.close) / 4.0
        else:
            price = r.close
        table.setdefault(r.coin, {})[r.date] = price
    coins = sorted(table) if coins is None else [c.lower() for c in coins]
    missing = [c for c in coins if c not in table]
    if missing:
        raise DatasetError(f"coins not in dataset: {missing}")
    all_dates = set().union(*(table[c].keys() for c in coins))
    common = set.intersection(*(set(table[c]) for c in coins))
    if not common:
        raise DatasetError("no date is shared by all coins")
    dropped = sorted(all_dates - common)
    if dropped:
        logger.warning(
            "dropped %d date(s) not present for every coin: %s",
            len(dropped), ", ".join(format_date(d) for d in dropped),
        )
    dates = sorted(common)
    values = np.array([[table[c][d] for c in coins] for d in dates], dtype=np.float64)
    return PriceMatrix(dates, coins, values, variable)


def chronological_split(matrix, train_ratio, valid_ratio):
    """Leading rows to train, trailing ``floor(n * valid_ratio)`` rows to valid."""
    if not (train_ratio > 0 and valid_ratio > 0):
        raise DatasetError(f"ratios must be positive, got {train_ratio}/{valid_ratio}")
    if abs(train_ratio + valid_ratio - 1.0) > 1e-9:
        raise DatasetError(f"ratios must sum to 1, got {train_ratio} + {valid_ratio}")
    n = len(matrix)
    if n < 2:
        raise DatasetError(f"need at least 2 rows to split, got {n}")
    # the epsilon absorbs products like 100 * 0.29 = 28.999999999999996
    n_valid = math.floor(n * valid_ratio + 1e-9)
    n_train = n - n_valid
    if n_valid < 1 or n_train < 1:
        raise DatasetError(f"split of {n} rows at {train_ratio}/{valid_ratio} leaves an empty side")
    return SplitPair(matrix.rows(0, n_train), matrix.rows(n_train, n))


# -- split CSV (Date + one column per coin) ---------------------------------


def write_price_matrix(matrix, path):
    with atomic_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["Date", *matrix.coins])
        for day, row in zip(matrix.dates, matrix.values):
            writer.writerow([format_date(day), *(format_float(v) for v in row)])


def read_price_matrix(path, variable="avg_ohlc"):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "Date" or len(header) < 2:
            raise DatasetError(f"{path}: expected header Date,<coin>,...")
        coins = [c.strip().lower() for c in header[1:]]
        dates, rows = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path} row {reader.line_num}: expected {len(header)} fields")
            try:
                dates.append(dt.datetime.strptime(row[0], DATE_FORMAT).date())
                rows.append([float(x) for x in row[1:]])
            except ValueError as exc:
                raise DatasetError(f"{path} row {reader.line_num}: {exc}") from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return PriceMatrix(dates, coins, np.array(rows), variable)
