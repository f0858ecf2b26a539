"""Synthetic price and post data with a known sentiment-to-price link.

Each calendar day gets a latent mood; posts are built from positive or
negative phrases in proportion to it. After scoring and aligning the posts
to trading days, the next-day close is set to a slow price cycle plus a
short smoothing of recent daily mean compounds plus noise. Without the
tweet columns the current day's sentiment is invisible, so a model that
uses them should beat one that does not.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .market_data import PriceBar, PriceSeries
from .sentiment import Analyzer
from .tweet_store import TweetRecord, aggregate_daily, align_to_trading_days

POSITIVE = [
    "great rally today", "love this stock", "strong earnings, very happy",
    "excellent deliveries", "bullish and confident", "amazing growth",
]
NEGATIVE = [
    "terrible guidance", "awful week for holders", "hate this drop",
    "bad news again", "worried about losses", "horrible quarter",
]
NEUTRAL = ["stock moved today", "watching the chart", "earnings call on thursday"]

# weights of today's, yesterday's and the day before's mean compound
SMOOTHING = (0.6, 0.3, 0.1)


@dataclass
class SyntheticData:
    prices: PriceSeries
    posts: list[TweetRecord]
    daily_compound: np.ndarray


def trading_calendar(start: dt.date, n: int) -> list[dt.date]:
    out = []
    d = start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def generate(
    n_days: int = 300,
    seed: int = 0,
    start: dt.date = dt.date(2019, 5, 23),
    effect: float = 30.0,
    noise: float = 0.5,
    posts_per_day: tuple[int, int] = (6, 14),
    analyzer: Analyzer | None = None,
) -> SyntheticData:
    """Generate ``n_days`` trading days of prices plus posts for every calendar day."""
    rng = np.random.default_rng(seed)
    analyzer = analyzer or Analyzer()
    calendar = trading_calendar(start, n_days)
    posts: list[TweetRecord] = []
    day = start - dt.timedelta(days=3)
    while day <= calendar[-1]:
        mood = rng.uniform(-0.9, 0.9)
        for _ in range(rng.integers(posts_per_day[0], posts_per_day[1] + 1)):
            u = rng.random()
            if u < 0.15:
                text = NEUTRAL[rng.integers(len(NEUTRAL))]
            elif u < 0.15 + 0.85 * (1 + mood) / 2:
                text = POSITIVE[rng.integers(len(POSITIVE))]
            else:
                text = NEGATIVE[rng.integers(len(NEGATIVE))]
            ts = dt.datetime.combine(day, dt.time(), dt.timezone.utc) + dt.timedelta(
                seconds=int(rng.integers(0, 86400)))
            posts.append(TweetRecord(
                ts, text,
                favorite_count=int(rng.poisson(3)),
                follower_count=int(rng.lognormal(5, 1.5)),
                retweet_count=int(rng.poisson(1)),
                verified=bool(rng.random() < 0.05),
            ))
        day += dt.timedelta(days=1)

    posts.sort(key=lambda r: r.created_at)
    scores = [analyzer.compound(p.text) for p in posts]
    aligned = align_to_trading_days(aggregate_daily(posts, scores), calendar)
    m = np.array([a.mean_compound for a in aligned])

    t = np.arange(n_days)
    cycle = 100.0 + 8.0 * np.sin(2 * np.pi * t / 90.0) + 0.02 * t
    close = np.empty(n_days)
    close[0] = cycle[0]
    for k in range(1, n_days):
        signal = sum(w * m[k - 1 - j] for j, w in enumerate(SMOOTHING) if k - 1 - j >= 0)
        close[k] = cycle[k] + effect * signal + rng.normal(0, noise)

    bars = []
    prev = close[0]
    for k, d in enumerate(calendar):
        o = max(1.0, prev + rng.normal(0, 0.4))
        c = close[k]
        hi = max(o, c) + abs(rng.normal(0, 0.6))
        lo = max(0.5, min(o, c) - abs(rng.normal(0, 0.6)))
        o, hi, lo, c = (round(float(v), 4) for v in (o, hi, lo, c))
        bars.append(PriceBar(d, o, hi, lo, c, c,
                             int(rng.integers(5_000_000, 20_000_000))))
        prev = c
    return SyntheticData(PriceSeries(tuple(bars)), posts, m)


def write_dataset(data: SyntheticData, price_path, posts_path) -> None:
    from .market_data import serialize_price_csv

    with open(price_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_price_csv(data.prices))
    with open(posts_path, "w", encoding="utf-8", newline="\n") as fh:
        for p in data.posts:
            fh.write(p.to_json() + "\n")
