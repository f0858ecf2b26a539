"""Technical indicators over a ``PriceSeries``: SMA, typical price, Bollinger Bands."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidWindow, SeriesTooShort
from .market_data import PriceBar, PriceSeries

DEFAULT_BOLLINGER_N = 20
DEFAULT_BOLLINGER_M = 2.0


@dataclass(frozen=True)
class IndicatorColumn:
    """Per-day indicator values aligned to the series dates.

    The first ``warmup`` entries are undefined and stored as NaN.
    """

    name: str
    values: np.ndarray
    warmup: int

    def __len__(self):
        return len(self.values)

    @property
    def defined(self) -> np.ndarray:
        mask = np.ones(len(self.values), dtype=bool)
        mask[: self.warmup] = False
        return mask


def _check(series: PriceSeries, n: int, min_n: int = 1):
    if not isinstance(n, (int, np.integer)) or n < min_n:
        raise InvalidWindow(f"window length must be an integer >= {min_n}, got {n!r}")
    if len(series) < n:
        raise SeriesTooShort(f"series has {len(series)} bars, window needs {n}")


def sma(series: PriceSeries, n: int, name: str | None = None) -> IndicatorColumn:
    """Simple moving average of closes over the trailing ``n`` days."""
    _check(series, n)
    mean, _ = kernels.rolling_mean_std(series.column("close"), n)
    return IndicatorColumn(name or f"sma{n}", mean, n - 1)


def typical_price(bar: PriceBar) -> float:
    return (bar.high + bar.low + bar.close) / 3.0


def typical_prices(series: PriceSeries) -> np.ndarray:
    return (series.column("high") + series.column("low") + series.column("close")) / 3.0


def bollinger(
    series: PriceSeries, n: int = DEFAULT_BOLLINGER_N, m: float = DEFAULT_BOLLINGER_M
) -> tuple[IndicatorColumn, IndicatorColumn, IndicatorColumn]:
    """Bollinger Bands as ``(mid, upper, lower)``.

    The middle band is the n-day SMA of closes. Upper and lower bands are the
    n-day SMA of the typical price plus/minus ``m`` population standard
    deviations of the typical price over the same window.
    """
    _check(series, n, min_n=2)
    if not m > 0:
        raise InvalidWindow(f"stddev multiplier must be positive, got {m!r}")
    mid, _ = kernels.rolling_mean_std(series.column("close"), n)
    tp_mean, tp_std = kernels.rolling_mean_std(typical_prices(series), n)
    upper = tp_mean + m * tp_std
    lower = tp_mean - m * tp_std
    w = n - 1
    return (
        IndicatorColumn("boll_mid", mid, w),
        IndicatorColumn("boll_up", upper, w),
        IndicatorColumn("boll_low", lower, w),
    )


def standard_indicators(
    series: PriceSeries,
    sma_n: int = 5,
    boll_n: int = DEFAULT_BOLLINGER_N,
    boll_m: float = DEFAULT_BOLLINGER_M,
) -> list[IndicatorColumn]:
    """The feature-table indicator set: one SMA (``sma5`` by default) plus the three bands."""
    return [sma(series, sma_n), *bollinger(series, boll_n, boll_m)]
