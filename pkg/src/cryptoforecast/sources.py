"""Quote sources for :func:`cryptoforecast.market_data.fetch_ohlc`.

Both sources speak the same payload schema, modelled on the CoinMarketCap
historical-quotes response::

    {"data": {"symbol": "BTC",
              "quotes": [{"timeOpen": "2023-08-15T00:00:00.000Z",
                          "quote": {"open": 29283.3, "high": 29660.3,
                                    "low": 29088.9, "close": 29408.4}}, ...]}}

The HTTP source issues ``GET <base>?symbol=BTC&timeStart=<unix>&timeEnd=<unix>``
and expects that document back; the fixture source reads ``<dir>/<coin>.json``.
"""
import calendar
import datetime as dt
import json
import os
import urllib.error
import urllib.parse
import urllib.request
from importlib import resources
from pathlib import Path

from cryptoforecast.errors import SourceError, UnknownTickerError
from cryptoforecast.market_data import OhlcRecord

SOURCE_ENV = "CRYPTOFORECAST_SOURCE"
API_KEY_ENV = "CRYPTOFORECAST_API_KEY"
DEFAULT_ENDPOINT = "https://api.coinmarketcap.com/data-api/v3/cryptocurrency/historical"


def parse_payload(payload, coin):
    try:
        data = payload["data"]
        symbol = str(data.get("symbol", coin)).lower()
        quotes = data["quotes"]
    except (KeyError, TypeError, AttributeError):
        raise SourceError(f"malformed payload for {coin}: missing data.quotes") from None
    if symbol != coin:
        raise SourceError(f"payload for {coin} carries symbol {symbol!r}")
    records = []
    for i, q in enumerate(quotes):
        try:
            day = dt.date.fromisoformat(q["timeOpen"][:10])
            ohlc = q["quote"]
            rec = OhlcRecord(day, coin, float(ohlc["open"]), float(ohlc["high"]),
                             float(ohlc["low"]), float(ohlc["close"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SourceError(f"malformed {coin} quote #{i}: {exc!r}") from None
        records.append(rec)
    return records


class FixtureSource:
    """Replays recorded payloads from ``<directory>/<coin>.json``."""

    def __init__(self, directory=None):
        if directory is None:
            directory = resources.files("cryptoforecast") / "data" / "fixture"
        self.directory = Path(str(directory))

    def fetch_quotes(self, coin, start, end):
        path = self.directory / f"{coin}.json"
        if not path.is_file():
            raise UnknownTickerError(coin)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise SourceError(f"malformed fixture {path}: {exc}") from None
        return parse_payload(payload, coin)

    def __repr__(self):
        return f"FixtureSource({str(self.directory)!r})"


class HttpSource:
    def __init__(self, endpoint=DEFAULT_ENDPOINT, api_key=None, timeout=30.0):
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout

    def url_for(self, coin, start, end):
        def unix(day):
            return calendar.timegm(day.timetuple())

        query = urllib.parse.urlencode(
            {"symbol": coin.upper(), "timeStart": unix(start), "timeEnd": unix(end) + 86399}
        )
        sep = "&" if "?" in self.endpoint else "?"
        return f"{self.endpoint}{sep}{query}"

    def fetch_quotes(self, coin, start, end):
        req = urllib.request.Request(self.url_for(coin, start, end), headers={"Accept": "application/json"})
        if self.api_key:
            req.add_header("X-CMC_PRO_API_KEY", self.api_key)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code in (400, 404):
                raise UnknownTickerError(coin) from None
            raise SourceError(f"{self.endpoint} answered HTTP {exc.code} for {coin}") from None
        except (urllib.error.URLError, OSError) as exc:
            raise SourceError(f"cannot reach {self.endpoint}: {exc}") from None
        try:
            payload = json.loads(body)
        except ValueError:
            raise SourceError(f"non-JSON response for {coin} from {self.endpoint}") from None
        return parse_payload(payload, coin)

    def __repr__(self):
        return f"HttpSource({self.endpoint!r})"


def resolve_source(descriptor=None):
    """Map a descriptor to a source.

    ``fixture`` uses the bundled recording, ``fixture:<dir>`` a local
    directory, ``live`` the default endpoint, and anything starting with
    ``http://`` or ``https://`` that URL. ``None`` falls back to the
    ``CRYPTOFORECAST_SOURCE`` environment variable, then ``live``.
    """
    if descriptor is None:
        descriptor = os.environ.get(SOURCE_ENV) or "live"
    if descriptor == "fixture":
        return FixtureSource()
    if descriptor.startswith("fixture:"):
        return FixtureSource(descriptor.split(":", 1)[1])
    if descriptor == "live":
        return HttpSource()
    if descriptor.startswith(("http://", "https://")):
        return HttpSource(descriptor)
    raise SourceError(f"unrecognised source descriptor {descriptor!r}")
