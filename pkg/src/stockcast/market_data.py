"""Daily OHLCV history in the Yahoo Finance CSV export layout."""
from __future__ import annotations

import csv
import datetime as dt
import io
import re
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import DuplicateDate, EmptyRange, MalformedHeader, MalformedRow, OhlcViolation

HEADER = ("Date", "Open", "High", "Low", "Close", "Adj Close", "Volume")

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_PRICE_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_VOLUME_RE = re.compile(r"^\d+$")


@dataclass(frozen=True)
class PriceBar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    adj_close: float
    volume: int

    def __post_init__(self):
        prices = (self.open, self.high, self.low, self.close, self.adj_close)
        if any(not np.isfinite(p) or p <= 0 for p in prices):
            raise OhlcViolation(self.date, "prices must be finite and positive")
        if self.volume < 0:
            raise OhlcViolation(self.date, "negative volume")
        if not (self.low <= min(self.open, self.close) and self.high >= max(self.open, self.close)):
            raise OhlcViolation(self.date)


@dataclass(frozen=True)
class PriceSeries:
    bars: tuple[PriceBar, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bars", tuple(self.bars))
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date == prev.date:
                raise DuplicateDate(cur.date)
            if cur.date < prev.date:
                raise ValueError("bars must be in strictly increasing date order")

    def __len__(self):
        return len(self.bars)

    def __iter__(self):
        return iter(self.bars)

    def __getitem__(self, i):
        return self.bars[i]

    @property
    def dates(self) -> list[dt.date]:
        return [b.date for b in self.bars]

    def column(self, name: str) -> np.ndarray:
        """Field values as a float64 array, e.g. ``series.column("close")``."""
        return np.array([getattr(b, name) for b in self.bars], dtype=np.float64)

    @classmethod
    def from_bars(cls, bars: Iterable[PriceBar]) -> "PriceSeries":
        """Sort bars by date and reject duplicates."""
        ordered = sorted(bars, key=lambda b: b.date)
        return cls(tuple(ordered))


def _parse_price(text: str, line: int, field: str) -> float:
    if not _PRICE_RE.match(text):
        raise MalformedRow(line, f"{field}: not a plain decimal number: {text!r}")
    return float(text)


def parse_price_csv(source: str | TextIO) -> PriceSeries:
    """Parse a Yahoo Finance daily CSV into a date-sorted ``PriceSeries``.

    Accepts a string or a text stream. Thousands separators, currency signs,
    ``null`` placeholders and non-ISO dates are rejected with the offending
    line number.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedHeader("empty input") from None
    if header and header[0].startswith("﻿"):
        header[0] = header[0][1:]
    if tuple(h.strip() for h in header) != HEADER:
        raise MalformedHeader(f"expected {','.join(HEADER)!r}, got {','.join(header)!r}")

    bars: dict[dt.date, PriceBar] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(HEADER):
            raise MalformedRow(line, f"expected {len(HEADER)} fields, got {len(row)}")
        cells = [c.strip() for c in row]
        if not _DATE_RE.match(cells[0]):
            raise MalformedRow(line, f"date must be YYYY-MM-DD: {cells[0]!r}")
        try:
            date = dt.date.fromisoformat(cells[0])
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
        o, h, lo, c, adj = (_parse_price(v, line, f) for v, f in zip(cells[1:6], HEADER[1:6]))
        if not _VOLUME_RE.match(cells[6]):
            raise MalformedRow(line, f"Volume: not a non-negative integer: {cells[6]!r}")
        if date in bars:
            raise DuplicateDate(date)
        bars[date] = PriceBar(date, o, h, lo, c, adj, int(cells[6]))
    return PriceSeries.from_bars(bars.values())


def serialize_price_csv(series: PriceSeries) -> str:
    out = io.StringIO()
    out.write(",".join(HEADER) + "\n")
    for b in series:
        out.write(
            f"{b.date.isoformat()},{float(b.open)!r},{float(b.high)!r},{float(b.low)!r},"
            f"{float(b.close)!r},{float(b.adj_close)!r},{int(b.volume)}\n"
        )
    return out.getvalue()


def read_price_csv(path) -> PriceSeries:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_price_csv(fh)


def slice_by_date(series: PriceSeries, start: dt.date, end: dt.date) -> PriceSeries:
    if start > end:
        raise ValueError(f"start {start} is after end {end}")
    kept = tuple(b for b in series if start <= b.date <= end)
    if not kept:
        raise EmptyRange(f"no bars between {start} and {end}")
    return PriceSeries(kept)
