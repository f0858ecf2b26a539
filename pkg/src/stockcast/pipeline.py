"""Glue between the stages: raw inputs -> feature table -> scaled, split examples."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from . import features as ft
from .indicators import standard_indicators
from .market_data import PriceSeries
from .sentiment import Analyzer
from .tweet_store import TweetRecord, aggregate_daily, align_to_trading_days, dedup_exact


@dataclass
class Prepared:
    scaler: ft.Scaler
    table: ft.FeatureTable
    train: list[ft.Example]
    val: list[ft.Example]
    test: list[ft.Example]


def build_table(
    prices: PriceSeries,
    posts: Sequence[TweetRecord] | None,
    analyzer: Analyzer | None = None,
    *,
    sma_n: int = 5,
    boll_n: int = 20,
    boll_m: float = 2.0,
    tweet_features: bool = True,
    attribute_features: bool = True,
    lookback: int = 1,
    keep_last: bool = False,
) -> ft.FeatureTable:
    """Score posts, align them to the price calendar and assemble the unscaled table."""
    aggs = None
    if posts:
        posts = dedup_exact(posts)
        analyzer = analyzer or Analyzer()
        scores = [analyzer.compound(p.text) for p in posts]
        aggs = align_to_trading_days(aggregate_daily(posts, scores), prices.dates)
    return ft.assemble(
        prices,
        standard_indicators(prices, sma_n, boll_n, boll_m),
        aggs,
        tweet_features=tweet_features,
        attribute_features=attribute_features,
        lookback=lookback,
        keep_last=keep_last,
    )


def fit_for_table(
    table: ft.FeatureTable,
    window: int = ft.DEFAULT_WINDOW,
    stride: int = ft.DEFAULT_STRIDE,
    fractions: Sequence[float] = ft.DEFAULT_FRACTIONS,
    scale_kinds: Mapping[str, str] | None = None,
    default_kind: str = "standard",
) -> ft.Scaler:
    return ft.fit_scaler(table, ft.train_rows(len(table), window, stride, fractions), scale_kinds, default_kind)


def prepare(
    table: ft.FeatureTable,
    window: int = ft.DEFAULT_WINDOW,
    stride: int = ft.DEFAULT_STRIDE,
    fractions: Sequence[float] = ft.DEFAULT_FRACTIONS,
    scale_kinds: Mapping[str, str] | None = None,
    default_kind: str = "standard",
    seed: int | None = None,
    scaler: ft.Scaler | None = None,
) -> Prepared:
    if scaler is None:
        scaler = fit_for_table(table, window, stride, fractions, scale_kinds, default_kind)
    scaled = ft.transform(scaler, table)
    examples = ft.make_windows(scaled, window, stride)
    train, val, test = ft.split(examples, fractions, seed)
    return Prepared(scaler, scaled, train, val, test)
