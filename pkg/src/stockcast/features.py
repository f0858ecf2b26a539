"""Feature table assembly, column scaling, sliding windows and chronological split."""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    CalendarMismatch,
    EmptySplit,
    TooFewRows,
    UnfittedScaler,
    ValidationError,
)
from .indicators import IndicatorColumn
from .market_data import PriceSeries
from .tweet_store import DailyAggregate, merge_aggregates

PRICE_COLUMNS = ("open", "high", "low", "close", "volume")
SENTIMENT_COLUMN = "mean_compound"
ATTRIBUTE_COLUMNS = ("tweet_count", "sum_favorites", "sum_followers", "sum_retweets", "verified_ratio")
TARGET = "target"

DEFAULT_WINDOW = 7
DEFAULT_STRIDE = 1
DEFAULT_FRACTIONS = (0.63, 0.07, 0.30)

SCALE_KINDS = ("minmax", "standard", "sigmoid-log", "passthrough")


@dataclass
class FeatureTable:
    """Per-trading-day feature matrix with a next-day close target.

    ``price_columns`` feed the price branch of the network and
    ``tweet_columns`` the tweet branch; ``columns`` holds both, in that order.
    """

    dates: list[dt.date]
    columns: dict[str, np.ndarray]
    target: np.ndarray
    target_dates: list[dt.date | None]
    price_columns: tuple[str, ...]
    tweet_columns: tuple[str, ...]

    def __post_init__(self):
        n = len(self.dates)
        if len(self.target) != n or len(self.target_dates) != n:
            raise ValidationError("target length differs from row count")
        for name, col in self.columns.items():
            if len(col) != n:
                raise ValidationError(f"column {name!r} has {len(col)} rows, expected {n}")
        if set(self.columns) != set(self.price_columns) | set(self.tweet_columns):
            raise ValidationError("column groups do not cover the column set")

    def __len__(self):
        return len(self.dates)

    @property
    def column_names(self) -> tuple[str, ...]:
        return self.price_columns + self.tweet_columns

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        if not names:
            return np.zeros((len(self), 0))
        return np.column_stack([self.columns[c] for c in names])

    def with_columns(self, columns: Mapping[str, np.ndarray], target: np.ndarray) -> "FeatureTable":
        return FeatureTable(list(self.dates), dict(columns), np.asarray(target, dtype=np.float64),
                            list(self.target_dates), self.price_columns, self.tweet_columns)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["date", *self.column_names, TARGET, "target_date"])
        for i, d in enumerate(self.dates):
            td = self.target_dates[i]
            w.writerow([d.isoformat(), *(repr(float(self.columns[c][i])) for c in self.column_names),
                        repr(float(self.target[i])), td.isoformat() if td else ""])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str, tweet_columns: Sequence[str] | None = None) -> "FeatureTable":
        """Read ``to_csv`` output. Tweet columns are recognized by name unless given."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][0] != "date" or rows[0][-2:] != [TARGET, "target_date"]:
            raise ValidationError("not a feature table CSV")
        names = rows[0][1:-2]
        if tweet_columns is None:
            tweet_set = {SENTIMENT_COLUMN, *ATTRIBUTE_COLUMNS}
            tweet_columns = [c for c in names if c in tweet_set]
        price_columns = tuple(c for c in names if c not in tweet_columns)
        body = rows[1:]
        cols = {c: np.array([float(r[j + 1]) for r in body]) for j, c in enumerate(names)}
        return cls(
            [dt.date.fromisoformat(r[0]) for r in body],
            cols,
            np.array([float(r[-2]) for r in body]),
            [dt.date.fromisoformat(r[-1]) if r[-1] else None for r in body],
            price_columns,
            tuple(tweet_columns),
        )


def tweet_column_names(tweet_features: bool = True, attribute_features: bool = True) -> tuple[str, ...]:
    if not tweet_features:
        return ()
    return (SENTIMENT_COLUMN, *ATTRIBUTE_COLUMNS) if attribute_features else (SENTIMENT_COLUMN,)


def assemble(
    prices: PriceSeries,
    indicators: Sequence[IndicatorColumn],
    aggs: Sequence[DailyAggregate] | None,
    *,
    tweet_features: bool = True,
    attribute_features: bool = True,
    lookback: int = 1,
    keep_last: bool = False,
) -> FeatureTable:
    """Join prices, indicators and aligned daily aggregates into a FeatureTable.

    Row ``t`` carries the tweet aggregate for trading day ``t`` (posts up to
    and including day ``t``, i.e. the day before the predicted session) and
    the target ``close[t+1]``. Rows inside the indicator warmup are dropped.
    With ``lookback > 1`` the tweet columns pool the last ``lookback``
    trading days. ``keep_last`` keeps the final row with a NaN target, for
    forecasting past the end of the data.
    """
    T = len(prices)
    dates = prices.dates
    if aggs is None:
        aggs = [DailyAggregate.zero(d) for d in dates]
    if len(aggs) != T or any(a.date != d for a, d in zip(aggs, dates)):
        raise CalendarMismatch("daily aggregates are not aligned to the price calendar")
    for ind in indicators:
        if len(ind) != T:
            raise CalendarMismatch(f"indicator {ind.name!r} length {len(ind)} != {T}")
    if lookback < 1:
        raise ValidationError("lookback must be >= 1")

    start = max([ind.warmup for ind in indicators] + [lookback - 1])
    stop = T if keep_last else T - 1
    if stop - start < 1:
        raise TooFewRows(f"{T} trading days leave no usable rows after warmup {start}")
    rows = range(start, stop)

    price_cols = PRICE_COLUMNS + tuple(ind.name for ind in indicators)
    tweet_cols = tweet_column_names(tweet_features, attribute_features)
    columns: dict[str, np.ndarray] = {}
    for name in PRICE_COLUMNS:
        columns[name] = prices.column(name)[start:stop]
    for ind in indicators:
        columns[ind.name] = np.asarray(ind.values[start:stop], dtype=np.float64)

    if tweet_cols:
        pooled = [aggs[t] if lookback == 1 else merge_aggregates(dates[t], aggs[t - lookback + 1:t + 1])
                  for t in rows]
        attr = {
            SENTIMENT_COLUMN: "mean_compound",
            "tweet_count": "tweet_count",
            "sum_favorites": "sum_favorites",
            "sum_followers": "sum_followers",
            "sum_retweets": "sum_retweets",
            "verified_ratio": "verified_ratio",
        }
        for name in tweet_cols:
            columns[name] = np.array([float(getattr(a, attr[name])) for a in pooled])

    close = prices.column("close")
    target = np.array([close[t + 1] if t + 1 < T else np.nan for t in rows])
    target_dates = [dates[t + 1] if t + 1 < T else None for t in rows]
    return FeatureTable([dates[t] for t in rows], columns, target, target_dates, price_cols, tweet_cols)


# -- scaling -----------------------------------------------------------------

@dataclass(frozen=True)
class ColumnScale:
    kind: str
    a: float = 0.0
    b: float = 1.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "passthrough":
            return x.copy()
        if self.kind == "minmax":
            if self.b == self.a:
                return np.full_like(x, 0.5)
            return (x - self.a) / (self.b - self.a)
        if self.kind == "standard":
            return (x - self.a) / self.b if self.b > 0 else x - self.a
        if self.kind == "sigmoid-log":
            u = np.log1p(x) - self.a
            if self.b > 0:
                u = u / self.b
            return 1.0 / (1.0 + np.exp(-u))
        raise ValueError(f"unknown scale kind {self.kind!r}")

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "passthrough":
            return y.copy()
        if self.kind == "minmax":
            if self.b == self.a:
                return np.full_like(y, self.a)
            return y * (self.b - self.a) + self.a
        if self.kind == "standard":
            return y * self.b + self.a if self.b > 0 else y + self.a
        if self.kind == "sigmoid-log":
            u = np.log(y) - np.log1p(-y)
            if self.b > 0:
                u = u * self.b
            return np.expm1(u + self.a)
        raise ValueError(f"unknown scale kind {self.kind!r}")


def _fit_column(kind: str, x: np.ndarray) -> ColumnScale:
    if kind == "passthrough":
        return ColumnScale(kind)
    if kind == "minmax":
        return ColumnScale(kind, float(x.min()), float(x.max()))
    if kind == "standard":
        return ColumnScale(kind, float(x.mean()), float(x.std()))
    if kind == "sigmoid-log":
        if (x < 0).any():
            raise ValidationError("sigmoid-log scaling needs non-negative values")
        u = np.log1p(x)
        return ColumnScale(kind, float(u.mean()), float(u.std()))
    raise ValidationError(f"unknown scale kind {kind!r}; expected one of {SCALE_KINDS}")


@dataclass(frozen=True)
class Scaler:
    """Fitted per-column scales; the target shares the close column's scale."""

    columns: Mapping[str, ColumnScale] = field(default_factory=dict)
    target: ColumnScale | None = None

    @property
    def fitted(self) -> bool:
        return self.target is not None

    def to_text(self) -> str:
        lines = ["# stockcast scaler v1"]
        for name, cs in [*self.columns.items(), (TARGET, self.target)]:
            lines += [f"{name}.kind = {cs.kind}", f"{name}.a = {cs.a!r}", f"{name}.b = {cs.b!r}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Scaler":
        raw: dict[str, dict[str, str]] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            name, _, attr = key.strip().rpartition(".")
            raw.setdefault(name, {})[attr] = value.strip()
        scales = {n: ColumnScale(d["kind"], float(d["a"]), float(d["b"])) for n, d in raw.items()}
        target = scales.pop(TARGET, None)
        if target is None:
            raise ValidationError("scaler file has no target entry")
        return cls(scales, target)


def fit_scaler(
    table: FeatureTable,
    train_rows: range | slice | tuple[int, int],
    kinds: Mapping[str, str] | None = None,
    default: str = "standard",
) -> Scaler:
    """Fit every column on ``train_rows`` only.

    The sentiment column is always passed through unscaled.
    """
    if isinstance(train_rows, tuple):
        train_rows = range(*train_rows)
    idx = np.arange(len(table))[train_rows]
    if idx.size == 0:
        raise EmptySplit("no training rows to fit the scaler on")
    kinds = dict(kinds or {})
    cols = {}
    for name in table.column_names:
        kind = "passthrough" if name == SENTIMENT_COLUMN else kinds.get(name, default)
        cols[name] = _fit_column(kind, table.columns[name][idx])
    return Scaler(cols, cols["close"])


def transform(scaler: Scaler, table: FeatureTable) -> FeatureTable:
    if not scaler.fitted:
        raise UnfittedScaler("scaler has not been fitted")
    missing = set(table.column_names) - set(scaler.columns)
    if missing:
        raise UnfittedScaler(f"scaler has no parameters for {sorted(missing)}")
    cols = {n: scaler.columns[n].forward(table.columns[n]) for n in table.column_names}
    return table.with_columns(cols, scaler.target.forward(table.target))


def inverse_transform(scaler: Scaler, table: FeatureTable) -> FeatureTable:
    if not scaler.fitted:
        raise UnfittedScaler("scaler has not been fitted")
    cols = {n: scaler.columns[n].inverse(table.columns[n]) for n in table.column_names}
    return table.with_columns(cols, scaler.target.inverse(table.target))


# -- windows and split -------------------------------------------------------

@dataclass(frozen=True)
class Example:
    x_price: np.ndarray
    x_tweet: np.ndarray
    y: float
    row: int
    date: dt.date
    target_date: dt.date | None


def window_count(rows: int, W: int, stride: int) -> int:
    return (rows - W) // stride + 1


def make_windows(table: FeatureTable, W: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE) -> list[Example]:
    """Sliding windows of ``W`` rows every ``stride`` rows.

    The label is the target of the window's last row (the next day's close).
    """
    if W < 1 or stride < 1:
        raise ValidationError("window length and stride must be >= 1")
    if len(table) < W:
        raise TooFewRows(f"{len(table)} rows cannot fill a window of {W}")
    xp = table.matrix(table.price_columns)
    xt = table.matrix(table.tweet_columns)
    out = []
    for k in range(window_count(len(table), W, stride)):
        lo = k * stride
        hi = lo + W
        last = hi - 1
        out.append(Example(xp[lo:hi].copy(), xt[lo:hi].copy(), float(table.target[last]),
                           last, table.dates[last], table.target_dates[last]))
    return out


def split_sizes(n: int, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> tuple[int, int, int]:
    """Block sizes for a train/validation/test split of ``n`` items.

    Validation and test sizes are rounded half-up; training takes the rest.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must be three positive numbers summing to 1: {fractions}")
    n_val = math.floor(n * fractions[1] + 0.5 + 1e-9)
    n_test = math.floor(n * fractions[2] + 0.5 + 1e-9)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) <= 0:
        raise EmptySplit(f"{n} examples cannot fill every block of a {fractions} split")
    return n_train, n_val, n_test


def split(examples: Sequence, fractions: Sequence[float] = DEFAULT_FRACTIONS, seed: int | None = None):
    """Contiguous chronological split into (train, validation, test).

    The test block is the most recent. With a seed, train and validation are
    shuffled; the test block keeps chronological order.
    """
    n_train, n_val, _ = split_sizes(len(examples), fractions)
    train = list(examples[:n_train])
    val = list(examples[n_train:n_train + n_val])
    test = list(examples[n_train + n_val:])
    if seed is not None:
        rng = np.random.default_rng(seed)
        train = [train[i] for i in rng.permutation(len(train))]
        val = [val[i] for i in rng.permutation(len(val))]
    return train, val, test


def train_rows(n_rows: int, W: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE,
               fractions: Sequence[float] = DEFAULT_FRACTIONS) -> range:
    """Table rows covered by the training windows; the scaler is fitted on these."""
    if n_rows < W:
        raise TooFewRows(f"{n_rows} rows cannot fill a window of {W}")
    n_train, _, _ = split_sizes(window_count(n_rows, W, stride), fractions)
    return range(0, (n_train - 1) * stride + W)
