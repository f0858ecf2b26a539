"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""
import dataclasses
import datetime as dt
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import collector_sim as sim  # noqa: E402
from conftest import FIXTURES, random_series  # noqa: E402
from gradcheck import max_relative_error  # noqa: E402
from stockcast import cli, neural, pipeline, synthetic, trainer  # noqa: E402
from stockcast import features as ft  # noqa: E402
from stockcast import indicators as ind  # noqa: E402
from stockcast.market_data import PriceSeries  # noqa: E402
from stockcast.sentiment import Analyzer  # noqa: E402
from stockcast.tweet_store import TweetRecord  # noqa: E402


# filled by report(); conftest prints these in the terminal summary
RESULTS = {}


def report(number, title, ok, detail, seconds, limit):
    ok = ok and seconds < limit
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}: {detail} ({seconds:.2f} s, limit {limit:g} s)"
    RESULTS[number] = line
    print(line)
    assert ok, line


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# -- 1 ------------------------------------------------------------------------

def test_criterion_1_gradients():
    with Timer() as t:
        errors = [max_relative_error(seed, hidden=4, window=3, n_price=3, n_tweet=3, eps=1e-5)
                  for seed in range(20)]
    worst = max(errors)
    report(1, "gradient check, 20 seeds", worst <= 1e-4, f"max relative error {worst:.2e} <= 1e-4",
           t.seconds, 10)


# -- 2 ------------------------------------------------------------------------

def brute_sma(x, n):
    return np.array([math.fsum(x[t - n + 1:t + 1]) / n for t in range(n - 1, len(x))])


def brute_pstd(x, n):
    out = []
    for t in range(n - 1, len(x)):
        w = x[t - n + 1:t + 1]
        mu = math.fsum(w) / n
        out.append(math.sqrt(math.fsum((v - mu) ** 2 for v in w) / n))
    return np.array(out)


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-12)))


def test_criterion_2_indicators():
    worst = 0.0
    with Timer() as t:
        for seed in range(3):
            s = random_series(np.random.default_rng(seed), 300)
            close = list(s.column("close"))
            tp = [(b.high + b.low + b.close) / 3.0 for b in s.bars]
            for n in (5, 20, 30):
                worst = max(worst, rel_err(ind.sma(s, n).values[n - 1:], brute_sma(close, n)))
                mid, up, low = ind.bollinger(s, n, 2.0)
                mu, sig = brute_sma(tp, n), brute_pstd(tp, n)
                worst = max(worst, rel_err(mid.values[n - 1:], brute_sma(close, n)),
                            rel_err(up.values[n - 1:], mu + 2 * sig),
                            rel_err(low.values[n - 1:], mu - 2 * sig))
    report(2, "SMA and Bollinger vs brute force", worst <= 1e-9, f"max relative error {worst:.2e} <= 1e-9",
           t.seconds, 1)


# -- 3 ------------------------------------------------------------------------

def test_criterion_3_sentiment():
    ref = json.loads((FIXTURES / "sentiment_reference.json").read_text())
    with Timer() as t:
        analyzer = Analyzer()
        diffs, sign_ok, n_signed = [], 0, 0
        for item in ref:
            c = analyzer.compound(item["text"])
            diffs.append(abs(c - item["compound"]))
            if abs(item["compound"]) >= 0.05:
                n_signed += 1
                sign_ok += math.copysign(1, c) == math.copysign(1, item["compound"]) and abs(c) >= 0.05
    worst = max(diffs)
    ok = worst <= 0.05 and sign_ok == n_signed and len(ref) == 20
    report(3, "sentiment fixture corpus", ok,
           f"max |diff| {worst:.1e} <= 0.05, sign agreement {sign_ok}/{n_signed}", t.seconds, 1)


# -- 4 ------------------------------------------------------------------------

def blank_table(rows):
    dates = synthetic.trading_calendar(dt.date(2020, 1, 1), rows + 1)
    cols = {"close": np.arange(rows, dtype=float), "mean_compound": np.zeros(rows)}
    return ft.FeatureTable(list(dates[:rows]), cols, np.arange(rows, dtype=float) + 1, list(dates[1:]),
                           ("close",), ("mean_compound",))


def test_criterion_4_windowing_and_split():
    rng = np.random.default_rng(4)
    bad = 0
    with Timer() as t:
        for _ in range(200):
            W = int(rng.integers(1, 15))
            stride = int(rng.integers(1, 6))
            rows = int(rng.integers(W, 120))
            # enumerate window starts directly
            starts = [s for s in range(rows) if s % stride == 0 and s + W <= rows]
            made = ft.make_windows(blank_table(rows), W, stride)
            expected = (rows - W) // stride + 1
            bad += not (len(made) == len(starts) == expected == ft.window_count(rows, W, stride))
        ex = ft.make_windows(blank_table(106), 7, 1)
        train, val, test = ft.split(ex, (0.63, 0.07, 0.30))
        sizes = (len(train), len(val), len(test))
        ordered = max(e.date for e in train) < min(e.date for e in test)
    ok = bad == 0 and sizes == (63, 7, 30) and ordered and len(ex) == 100
    report(4, "window counts and 63/7/30 split", ok,
           f"{200 - bad}/200 triples match, blocks {sizes[0]}/{sizes[1]}/{sizes[2]}, "
           f"train before test: {ordered}", t.seconds, 1)


# -- 5 ------------------------------------------------------------------------

SIGNAL_WIDTH = 16
SIGNAL_EPOCHS = 60
SIGNAL_LR = 0.05


def signal_run(table, seed):
    prep = pipeline.prepare(table, seed=seed)
    params = neural.init_params(len(table.price_columns), len(table.tweet_columns),
                                hidden=SIGNAL_WIDTH, dense=SIGNAL_WIDTH, seed=seed)
    cfg = trainer.TrainConfig(epochs=SIGNAL_EPOCHS, learning_rate=SIGNAL_LR, seed=seed)
    best, _ = trainer.train(cfg, params, prep.train, prep.val)
    return trainer.evaluate(best, prep.test)[0]


def test_criterion_5_synthetic_signal(synth):
    with Timer() as t:
        on = pipeline.build_table(synth.prices, synth.posts)
        off = pipeline.build_table(synth.prices, synth.posts, tweet_features=False)
        mse_on = [signal_run(on, s) for s in range(10)]
        mse_off = [signal_run(off, s) for s in range(10)]
    m_on, m_off = float(np.median(mse_on)), float(np.median(mse_off))
    margin = (m_off - m_on) / m_off
    report(5, "tweet features help on the synthetic signal", margin >= 0.05,
           f"median test MSE {m_on:.4f} with tweets vs {m_off:.4f} without, margin {100 * margin:.1f}% >= 5%",
           t.seconds, 300)


# -- 6 ------------------------------------------------------------------------

def test_criterion_6_overfit(synth):
    table = pipeline.build_table(synth.prices, synth.posts)
    with Timer() as t:
        prep = pipeline.prepare(table)
        finals = []
        for seed in range(10):
            pick = np.sort(np.random.default_rng(seed).choice(len(prep.train), 10, replace=False))
            subset = [prep.train[i] for i in pick]
            params = neural.init_params(len(table.price_columns), len(table.tweet_columns),
                                        hidden=16, dense=16, seed=seed)
            cfg = trainer.TrainConfig(epochs=200, learning_rate=0.05, decay=1.0, dropout_p=0.0, seed=seed)
            _, recs = trainer.train(cfg, params, subset)
            finals.append(recs[-1].train_mse)
    fitted = sum(f < 1e-3 for f in finals)
    report(6, "overfit 10 examples in 200 epochs", fitted >= 9,
           f"{fitted}/10 seeds below 1e-3 (worst {max(finals):.2e})", t.seconds, 120)


# -- 7 ------------------------------------------------------------------------

def test_criterion_7_rate_limit_and_replay():
    with Timer() as t:
        peaks = [sim.max_in_window(sim.rate_schedule(seed), 900.0) for seed in range(10)]
        worst_lost, worst_dup_pages = 0, 0
        for seed in range(20):
            records, _, pages, _ = sim.crash_restart_run(seed, crashes=1)
            lost, _, dup_pages = sim.replay_stats(records, pages)
            worst_lost = max(worst_lost, lost)
            worst_dup_pages = max(worst_dup_pages, dup_pages)
    ok = max(peaks) <= 180 and worst_lost == 0 and worst_dup_pages <= 1
    report(7, "rate-limit window and crash replay", ok,
           f"peak {max(peaks)} fetches per 900 s window over 10 schedules, "
           f"lost {worst_lost}, duplicated pages {worst_dup_pages}", t.seconds, 5)


# -- 8 ------------------------------------------------------------------------

def full_run(root, config):
    assert cli.main(["--config", str(config), "--out", str(root), "train"]) == 0
    run = next(p for p in root.iterdir() if p.is_dir())
    assert cli.main(["evaluate", "--run", str(run)]) == 0
    return run


def test_criterion_8_determinism(synth_files, tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text(f"prices = {synth_files / 'prices.csv'}\ntweets = {synth_files / 'posts.jsonl'}\n"
                      "epochs = 20\nseed = 7\n")
    with Timer() as t:
        a = full_run(tmp_path / "a", config)
        b = full_run(tmp_path / "b", config)
    capsys.readouterr()
    names = (cli.CURVE_FILE, cli.PREDICTIONS_FILE, cli.CHECKPOINT_FILE)
    same = [(a / n).read_bytes() == (b / n).read_bytes() for n in names]
    report(8, "byte-identical reruns", all(same),
           ", ".join(f"{n} {'identical' if s else 'DIFFERS'}" for n, s in zip(names, same)), t.seconds, 120)


# -- 9 ------------------------------------------------------------------------

def mutations(prices, posts, cut):
    """Yield (name, prices, posts) variants that only touch data dated on or after ``cut``."""
    late = [i for i, b in enumerate(prices.bars) if b.date >= cut]

    def bars_with(fn):
        bars = list(prices.bars)
        for i in late:
            bars[i] = fn(bars[i])
        return PriceSeries(tuple(bars))

    def scale(b, k):
        return dataclasses.replace(b, open=b.open * k, high=b.high * k, low=b.low * k,
                                   close=b.close * k, adj_close=b.adj_close * k, volume=b.volume * 3)

    yield "prices x3", bars_with(lambda b: scale(b, 3.0)), posts
    yield "prices x0.5", bars_with(lambda b: scale(b, 0.5)), posts
    flipped = [dataclasses.replace(p, text="terrible awful horrible", favorite_count=p.favorite_count + 50,
                                   verified=not p.verified)
               if p.created_at.date() >= cut else p for p in posts]
    yield "posts rewritten", prices, flipped
    yield "posts dropped", prices, [p for p in posts if p.created_at.date() < cut]
    extra = [TweetRecord(dt.datetime.combine(prices.bars[i].date, dt.time(12), dt.timezone.utc),
                         "best day ever!!!", 1000, 10**6, 500, True) for i in late]
    yield "posts added", prices, sorted(posts + extra, key=lambda p: p.created_at)


def test_criterion_9_scaler_sentinel(synth):
    with Timer() as t:
        table = pipeline.build_table(synth.prices, synth.posts)
        rows = ft.train_rows(len(table))
        cut = table.dates[rows.stop]
        before = pipeline.fit_for_table(table).to_text()
        changed = []
        for name, prices, posts in mutations(synth.prices, synth.posts, cut):
            mutated = pipeline.build_table(prices, posts)
            if pipeline.fit_for_table(mutated).to_text() != before:
                changed.append(name)
    report(9, "scaler ignores test-region inputs", not changed,
           f"5 mutations after {cut}, scaler.params changed for: {changed or 'none'}", t.seconds, 1)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
