"""Simulated collection runs for the rate-limit and crash-restart checks."""
import datetime as dt
from collections import Counter

import numpy as np

from stockcast.collector import (
    CollectorState,
    MemorySink,
    RateBudget,
    ScriptedTransport,
    SearchPage,
    SimulatedClock,
    collect,
)
from stockcast.tweet_store import TweetRecord

UTC = dt.timezone.utc


def make_pages(n_pages, per_page=20, seed=0):
    rng = np.random.default_rng(seed)
    base = dt.datetime(2020, 6, 1, tzinfo=UTC)
    pages = []
    for k in range(n_pages):
        recs = [TweetRecord(base + dt.timedelta(minutes=int(rng.integers(0, 10**5))), f"p{k} r{j}",
                            int(rng.integers(0, 9)), int(rng.integers(0, 999)), int(rng.integers(0, 5)),
                            bool(rng.random() < 0.1))
                for j in range(per_page)]
        pages.append(SearchPage(recs, f"c{k + 1}" if k < n_pages - 1 else None))
    return pages


class TimedTransport:
    """Wraps a transport: records fetch times and advances the clock by a latency draw."""

    def __init__(self, inner, clock, rng, latency=(0.0, 3.0)):
        self.inner = inner
        self.clock = clock
        self.rng = rng
        self.latency = latency
        self.fetch_times = []

    def fetch(self, query, cursor):
        self.fetch_times.append(self.clock())
        self.clock.advance(float(self.rng.uniform(*self.latency)))
        return self.inner.fetch(query, cursor)


def max_in_window(times, window):
    """Largest number of times inside any half-open interval of length ``window``.

    Checking intervals that start at each recorded time is exhaustive: any
    window can slide right to its first member without losing one.
    """
    times = sorted(times)
    best = 0
    j = 0
    for i, s in enumerate(times):
        while j < len(times) and times[j] < s + window:
            j += 1
        best = max(best, j - i)
    return best


def max_in_window_naive(times, window):
    return max((sum(1 for t in times if s <= t < s + window) for s in times), default=0)


def rate_schedule(seed, n_pages=700, limit=180, window=900.0):
    """Collect ``n_pages`` pages on a simulated clock; return the fetch times."""
    rng = np.random.default_rng(seed)
    clock = SimulatedClock(float(rng.uniform(0, 1000)))
    lo = float(rng.choice([0.0, 0.5, 2.0]))
    transport = TimedTransport(ScriptedTransport(make_pages(n_pages, 2, seed)), clock, rng, (0.0, lo + 1.0))
    budget = RateBudget(limit, window)

    def sleep(s):
        # oversleep sometimes, as real schedulers do
        clock.sleep(s + float(rng.exponential(0.5)) * (rng.random() < 0.3))

    state = collect(transport, "q", CollectorState("q"), budget, MemorySink(), None, clock, sleep)
    assert state.done and state.pages_fetched == n_pages
    return transport.fetch_times


class Crash(Exception):
    pass


def crash_restart_run(seed, n_pages=12, crashes=4):
    """Crash between sink write and state save at random pages, restart from the saved state.

    Returns (sink records, transport, number of crashes).
    """
    rng = np.random.default_rng(seed)
    pages = make_pages(n_pages, 20, seed)
    errors = {}
    for k in rng.choice(n_pages, size=2, replace=False):
        errors["" if k == 0 else pages[k - 1].continuation] = int(rng.integers(1, 3))
    transport = ScriptedTransport(pages, errors)
    crash_at = set(int(x) for x in rng.choice(np.arange(1, n_pages * 2), size=crashes, replace=False))
    sink = MemorySink()
    saved = {"state": CollectorState("q")}
    clock = SimulatedClock()
    saves = {"n": 0}

    def persist(state):
        saves["n"] += 1
        if saves["n"] in crash_at:
            crash_at.discard(saves["n"])
            raise Crash()
        saved["state"] = state

    n_crashes = 0
    while True:
        try:
            state = collect(transport, "q", saved["state"], RateBudget(), sink, persist, clock, clock.sleep)
        except Crash:
            n_crashes += 1
            continue
        if state.done:
            break
    return sink.records, transport, pages, n_crashes


def replay_stats(records, pages):
    """(lost record count, duplicated record count, duplicated page count)."""
    want = Counter(r for p in pages for r in p.records)
    got = Counter(records)
    lost = sum((want - got).values())
    dup = sum((got - want).values())
    dup_pages = sum(1 for p in pages if p.records and all(got[r] > 1 for r in p.records))
    return lost, dup, dup_pages
