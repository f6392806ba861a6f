"""Record the bundled offline payloads (one JSON file per coin).

Run once; the output is committed under src/cryptoforecast/data/fixture.
"""
import datetime as dt
import json
from pathlib import Path

from cryptoforecast.synthetic import PAPER_ANCHORS, PAPER_COINS, synthesize, to_payload

OUT = Path(__file__).resolve().parents[1] / "src" / "cryptoforecast" / "data" / "fixture"
START = dt.date(2023, 8, 15)
DAYS = 93
SEED = 20231115


def main():
    records = synthesize(START, DAYS, SEED, PAPER_COINS, PAPER_ANCHORS)
    OUT.mkdir(parents=True, exist_ok=True)
    for spec in PAPER_COINS:
        path = OUT / f"{spec.coin}.json"
        path.write_text(json.dumps(to_payload(records, spec.coin), indent=1) + "\n", encoding="utf-8")
        print("wrote", path)


if __name__ == "__main__":
    main()
