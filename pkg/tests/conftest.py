import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

from stockcast import synthetic
from stockcast.market_data import PriceBar, PriceSeries

FIXTURES = Path(__file__).parent / "fixtures"


def series_from_closes(closes, start=dt.date(2021, 1, 4), spread=0.0):
    """Weekday series whose open equals close and whose high/low hug it by ``spread``."""
    dates = synthetic.trading_calendar(start, len(closes))
    bars = [PriceBar(d, float(c), float(c) + spread, float(c) - spread, float(c), float(c), 1000)
            for d, c in zip(dates, closes)]
    return PriceSeries(tuple(bars))


def random_series(rng, n, start=dt.date(2019, 1, 1)):
    dates = synthetic.trading_calendar(start, n)
    close = 100 + np.cumsum(rng.normal(0, 1, n))
    bars = []
    for d, c in zip(dates, close):
        o = c + rng.normal(0, 0.5)
        hi = max(o, c) + abs(rng.normal(0, 0.5))
        lo = min(o, c) - abs(rng.normal(0, 0.5))
        bars.append(PriceBar(d, float(o), float(hi), float(lo), float(c), float(c), int(rng.integers(1, 10**7))))
    return PriceSeries(tuple(bars))


@pytest.fixture(scope="session")
def synth():
    return synthetic.generate(300, seed=0)


@pytest.fixture(scope="session")
def synth_files(tmp_path_factory, synth):
    root = tmp_path_factory.mktemp("synth")
    synthetic.write_dataset(synth, root / "prices.csv", root / "posts.jsonl")
    return root


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
