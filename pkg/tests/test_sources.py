import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from cryptoforecast.errors import SourceError, UnknownTickerError
from cryptoforecast.market_data import fetch_ohlc
from cryptoforecast.sources import FixtureSource, HttpSource, resolve_source


@pytest.fixture
def server():
    """Local endpoint serving the bundled fixture payloads over HTTP."""
    fixture = FixtureSource().directory
    seen = []

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            query = parse_qs(urlparse(self.path).query)
            seen.append(query)
            symbol = query["symbol"][0].lower()
            if symbol == "garbage":
                body, code = b"<html>nope</html>", 200
            elif (fixture / f"{symbol}.json").is_file():
                body, code = (fixture / f"{symbol}.json").read_bytes(), 200
            else:
                body, code = b'{"status": "not found"}', 404
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    httpd = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_port}/historical", seen
    httpd.shutdown()


def test_http_matches_fixture(server):
    url, seen = server
    via_http = fetch_ohlc(["btc", "eth"], "15-08-2023", "20-08-2023", HttpSource(url))
    via_fixture = fetch_ohlc(["btc", "eth"], "15-08-2023", "20-08-2023", FixtureSource())
    assert via_http == via_fixture
    assert len(via_http) == 12
    assert {q["symbol"][0] for q in seen} == {"BTC", "ETH"}
    assert seen[0]["timeStart"] == ["1692057600"]


def test_http_errors(server):
    url, _ = server
    with pytest.raises(UnknownTickerError, match="nope"):
        fetch_ohlc(["nope"], "15-08-2023", "16-08-2023", HttpSource(url))
    with pytest.raises(SourceError, match="non-JSON"):
        fetch_ohlc(["garbage"], "15-08-2023", "16-08-2023", HttpSource(url))
    with pytest.raises(SourceError, match="cannot reach"):
        fetch_ohlc(["btc"], "15-08-2023", "16-08-2023", HttpSource("http://127.0.0.1:9/x", timeout=2))


def test_resolve_source(monkeypatch, tmp_path):
    monkeypatch.delenv("CRYPTOFORECAST_SOURCE", raising=False)
    assert isinstance(resolve_source(), HttpSource)
    monkeypatch.setenv("CRYPTOFORECAST_SOURCE", "fixture")
    assert isinstance(resolve_source(), FixtureSource)
    assert resolve_source(f"fixture:{tmp_path}").directory == tmp_path
    assert resolve_source("http://example.invalid/api").endpoint == "http://example.invalid/api"
    with pytest.raises(SourceError):
        resolve_source("ftp://x")


def test_payload_schema_on_disk():
    payload = json.loads((FixtureSource().directory / "btc.json").read_text())
    quote = payload["data"]["quotes"][0]
    assert payload["data"]["symbol"] == "BTC"
    assert quote["timeOpen"].startswith("2023-08-15")
    assert set(quote["quote"]) == {"open", "high", "low", "close"}
    assert len(payload["data"]["quotes"]) == 93
