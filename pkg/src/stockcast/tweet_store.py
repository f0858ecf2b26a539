"""Post records: JSON-lines ingest, per-day aggregation, trading-day alignment."""
from __future__ import annotations

import bisect
import datetime as dt
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence, TextIO

from .errors import LengthMismatch, MalformedLine, MissingField, NegativeCount

log = logging.getLogger(__name__)

MAX_TEXT_LENGTH = 10_000
COUNT_FIELDS = ("favorite_count", "follower_count", "retweet_count")
FIELDS = ("created_at", "text", *COUNT_FIELDS, "verified")


@dataclass(frozen=True)
class TweetRecord:
    created_at: dt.datetime
    text: str
    favorite_count: int
    follower_count: int
    retweet_count: int
    verified: bool

    @property
    def date(self) -> dt.date:
        return self.created_at.date()

    def to_json(self) -> str:
        d = asdict(self)
        d["created_at"] = self.created_at.isoformat().replace("+00:00", "Z")
        return json.dumps(d, ensure_ascii=False, sort_keys=True)


@dataclass(frozen=True)
class DailyAggregate:
    date: dt.date
    tweet_count: int = 0
    mean_compound: float = 0.0
    sum_favorites: int = 0
    sum_followers: int = 0
    sum_retweets: int = 0
    verified_ratio: float = 0.0
    missing: bool = False

    @classmethod
    def zero(cls, date: dt.date, missing: bool = False) -> "DailyAggregate":
        return cls(date, missing=missing)


def parse_timestamp(value: str) -> dt.datetime:
    """ISO-8601 timestamp as an aware UTC datetime; naive input is taken as UTC."""
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    ts = dt.datetime.fromisoformat(value)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=dt.timezone.utc)
    return ts.astimezone(dt.timezone.utc)


def record_from_obj(obj: dict, line: int) -> TweetRecord | None:
    for name in FIELDS:
        if name not in obj:
            raise MissingField(name, line)
    try:
        created = parse_timestamp(obj["created_at"])
    except (TypeError, ValueError):
        raise MalformedLine(line, f"bad created_at {obj['created_at']!r}") from None
    text = obj["text"]
    if not isinstance(text, str):
        raise MalformedLine(line, "text must be a string")
    counts = {}
    for name in COUNT_FIELDS:
        v = obj[name]
        if isinstance(v, bool) or not isinstance(v, int):
            raise MalformedLine(line, f"{name} must be an integer")
        if v < 0:
            raise NegativeCount(name, line)
        counts[name] = v
    if not isinstance(obj["verified"], bool):
        raise MalformedLine(line, "verified must be true or false")
    if not text.strip():
        log.debug("line %d: empty text, record rejected", line)
        return None
    if len(text) > MAX_TEXT_LENGTH:
        raise MalformedLine(line, f"text longer than {MAX_TEXT_LENGTH} code points")
    return TweetRecord(created, text, verified=obj["verified"], **counts)


def parse_tweet_jsonl(source: str | TextIO) -> list[TweetRecord]:
    """Parse one JSON object per line. Unknown keys are ignored.

    Records whose text is empty after trimming are dropped; structural
    problems raise with the 1-based line number.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    records = []
    for line_no, raw in enumerate(source, 1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError:
            raise MalformedLine(line_no) from None
        if not isinstance(obj, dict):
            raise MalformedLine(line_no)
        rec = record_from_obj(obj, line_no)
        if rec is not None:
            records.append(rec)
    return records


def read_tweet_jsonl(path) -> list[TweetRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_tweet_jsonl(fh)


def dedup_exact(records: Iterable[TweetRecord]) -> list[TweetRecord]:
    """Drop records identical in every field to an earlier one, keeping order."""
    seen = set()
    out = []
    for r in records:
        if r not in seen:
            seen.add(r)
            out.append(r)
    return out


def aggregate_daily(records: Sequence[TweetRecord], scores: Sequence[float]) -> list[DailyAggregate]:
    """Reduce records to one aggregate per UTC calendar date, sorted by date."""
    if len(records) != len(scores):
        raise LengthMismatch(f"{len(records)} records but {len(scores)} scores")
    groups: dict[dt.date, list[int]] = {}
    for idx, rec in enumerate(records):
        groups.setdefault(rec.date, []).append(idx)
    out = []
    for day in sorted(groups):
        idx = groups[day]
        n = len(idx)
        recs = [records[i] for i in idx]
        out.append(DailyAggregate(
            date=day,
            tweet_count=n,
            mean_compound=math.fsum(scores[i] for i in idx) / n,
            sum_favorites=sum(r.favorite_count for r in recs),
            sum_followers=sum(r.follower_count for r in recs),
            sum_retweets=sum(r.retweet_count for r in recs),
            verified_ratio=sum(r.verified for r in recs) / n,
        ))
    return out


def merge_aggregates(date: dt.date, aggs: Sequence[DailyAggregate]) -> DailyAggregate:
    """Combine aggregates into one dated ``date``; means are count-weighted."""
    total = sum(a.tweet_count for a in aggs)
    if total == 0:
        return DailyAggregate.zero(date, missing=True)
    compound = math.fsum(a.tweet_count * a.mean_compound for a in aggs) / total
    ratio = math.fsum(a.tweet_count * a.verified_ratio for a in aggs) / total
    return DailyAggregate(
        date=date,
        tweet_count=total,
        mean_compound=min(1.0, max(-1.0, compound)),
        sum_favorites=sum(a.sum_favorites for a in aggs),
        sum_followers=sum(a.sum_followers for a in aggs),
        sum_retweets=sum(a.sum_retweets for a in aggs),
        verified_ratio=min(1.0, max(0.0, ratio)),
    )


def align_to_trading_days(
    aggs: Sequence[DailyAggregate], trading_dates: Sequence[dt.date]
) -> list[DailyAggregate]:
    """One aggregate per trading date.

    Aggregates on non-trading days fold forward into the next trading date.
    Trading dates that end up with no posts get a zero aggregate with
    ``missing=True``. Aggregates dated after the last trading date have no
    trading day to land on and are dropped.
    """
    trading_dates = list(trading_dates)
    if any(b <= a for a, b in zip(trading_dates, trading_dates[1:])):
        raise ValueError("trading dates must be strictly increasing")
    buckets: list[list[DailyAggregate]] = [[] for _ in trading_dates]
    dropped = 0
    for a in aggs:
        k = bisect.bisect_left(trading_dates, a.date)
        if k == len(trading_dates):
            dropped += a.tweet_count
            continue
        buckets[k].append(a)
    if dropped:
        log.warning("%d posts dated after the last trading day were dropped", dropped)
    out = []
    for day, bucket in zip(trading_dates, buckets):
        if len(bucket) == 1 and bucket[0].date == day and bucket[0].tweet_count > 0:
            out.append(replace(bucket[0], missing=False))
        else:
            out.append(merge_aggregates(day, bucket))
    return out
