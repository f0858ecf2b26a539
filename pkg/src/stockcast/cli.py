"""Command-line entry point.

Every command reads a flat ``key = value`` config file (``--config``) and
applies ``--set KEY=VALUE`` and ``--seed`` overrides on top. Relative paths
in the file resolve against the file's directory.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import features as ft
from . import neural, pipeline, trainer
from .collector import (
    CollectorState,
    HttpTransport,
    JsonlSink,
    RateBudget,
    ScriptedTransport,
    SimulatedClock,
    StateFile,
    collect,
    supervise,
)
from .errors import Diverged, StockcastError, ValidationError
from .market_data import read_price_csv, slice_by_date
from .sentiment import Analyzer, load_lexicon
from .tweet_store import read_tweet_jsonl

log = logging.getLogger("stockcast")

FEATURES_FILE = "features.csv"
SCALER_FILE = "scaler.params"
MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.txt"
CHECKPOINT_FILE = "checkpoint.txt"
CURVE_FILE = "curve.csv"
PREDICTIONS_FILE = "predictions.csv"
PREDICTIONS_SCALED_FILE = "predictions_scaled.csv"
EVALUATION_FILE = "evaluation.txt"
PREDICTION_FILE = "prediction.txt"

PATH_KEYS = ("prices", "tweets", "lexicon", "out", "script", "sink", "state")


class MissingRun(ValidationError):
    pass


@dataclass
class RunConfig:
    # inputs and outputs
    prices: str | None = None
    tweets: str | None = None
    lexicon: str | None = None
    out: str = "runs"
    start: str | None = None
    end: str | None = None
    # features
    sma_n: int = 5
    boll_n: int = 20
    boll_m: float = 2.0
    window: int = ft.DEFAULT_WINDOW
    stride: int = ft.DEFAULT_STRIDE
    split: tuple = ft.DEFAULT_FRACTIONS
    tweet_features: bool = True
    attribute_features: bool = True
    lookback: int = 1
    scale: str = "standard"
    scale_kinds: dict = field(default_factory=dict)
    # network and training
    hidden: int = neural.DEFAULT_HIDDEN
    dense: int = neural.DEFAULT_DENSE
    epochs: int = 100
    learning_rate: float = neural.DEFAULT_LEARNING_RATE
    decay: float = 0.97
    batch_size: int = 1
    seed: int = 0
    dropout_p: float = neural.DEFAULT_DROPOUT
    clip_norm: float = neural.DEFAULT_CLIP_NORM
    # collection
    query: str | None = None
    script: str | None = None
    url: str | None = None
    sink: str | None = None
    state: str | None = None
    rate_limit: int = 180
    rate_window: float = 900.0
    max_restarts: int = 5
    backoff: float = 1.0

    def train_config(self) -> trainer.TrainConfig:
        return trainer.TrainConfig(
            epochs=self.epochs, learning_rate=self.learning_rate, decay=self.decay,
            batch_size=self.batch_size, seed=self.seed, dropout_p=self.dropout_p,
            window=self.window, clip_norm=self.clip_norm if self.clip_norm > 0 else None,
        )

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "scale_kinds":
                lines += [f"scale.{k} = {kind}" for k, kind in sorted(v.items())]
            elif v is not None:
                lines.append(f"{f.name} = {_format_value(v)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            return tuple(float(x) for x in raw.split(","))
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None
    return raw or None


def parse_config(text: str, base_dir: Path | None = None, into: RunConfig | None = None) -> RunConfig:
    """Apply ``key = value`` lines to a RunConfig. ``#`` starts a comment."""
    cfg = dataclasses.replace(into) if into is not None else RunConfig()
    cfg.scale_kinds = dict(cfg.scale_kinds)
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {n}: expected key = value")
        key, _, value = line.partition("=")
        apply_setting(cfg, key.strip(), value.strip(), base_dir)
    return cfg


def apply_setting(cfg: RunConfig, key: str, value: str, base_dir: Path | None = None) -> None:
    if key.startswith("scale."):
        kind = value.strip()
        if kind not in ft.SCALE_KINDS:
            raise ValidationError(f"{key}: unknown scale kind {kind!r}")
        cfg.scale_kinds[key[len("scale."):]] = kind
        return
    if key not in _FIELD_TYPES or key == "scale_kinds":
        raise ValidationError(f"unknown config key {key!r}")
    v = _convert(key, value)
    if key in PATH_KEYS and v is not None and base_dir is not None and not os.path.isabs(v):
        v = str(base_dir / v)
    setattr(cfg, key, v)


def validate(cfg: RunConfig, need_prices: bool = True) -> None:
    if need_prices:
        if not cfg.prices:
            raise ValidationError("no price file configured (key 'prices')")
        if not os.path.isfile(cfg.prices):
            raise ValidationError(f"price file not found: {cfg.prices}")
    for key in ("tweets", "lexicon"):
        path = getattr(cfg, key)
        if path and not os.path.isfile(path):
            raise ValidationError(f"{key} file not found: {path}")
    if cfg.scale not in ft.SCALE_KINDS:
        raise ValidationError(f"unknown scale kind {cfg.scale!r}")
    if cfg.hidden < 1 or cfg.dense < 1:
        raise ValidationError("hidden and dense must be >= 1")
    ft.split_sizes(100, cfg.split)
    cfg.train_config()


# -- run directories ---------------------------------------------------------

def new_run_dir(root: str | os.PathLike) -> Path:
    """Create a fresh ``run-<UTC timestamp>`` directory; never reuse one."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    stamp = dt.datetime.now(dt.timezone.utc).strftime("run-%Y%m%dT%H%M%S")
    path = root / stamp
    k = 1
    while True:
        try:
            path.mkdir()
            return path
        except FileExistsError:
            k += 1
            path = root / f"{stamp}-{k}"


def git_blob_hash(path) -> str:
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read_manifest(run: Path) -> dict:
    p = run / MANIFEST_FILE
    return json.loads(p.read_text()) if p.exists() else {}


def _update_manifest(run: Path, **entries) -> None:
    m = _read_manifest(run)
    m.update(entries)
    _write(run / MANIFEST_FILE, json.dumps(m, indent=2, sort_keys=True) + "\n")


def _require_run(run: str | None, *files: str) -> Path:
    if not run:
        raise MissingRun("this command needs --run DIR")
    path = Path(run)
    if not path.is_dir():
        raise MissingRun(f"run directory not found: {run}")
    for name in files:
        if not (path / name).is_file():
            raise MissingRun(f"{path / name} is missing")
    return path


# -- pipeline stages -----------------------------------------------------------

def _load_inputs(cfg: RunConfig):
    try:
        prices = read_price_csv(cfg.prices)
    except ValidationError as exc:
        raise ValidationError(f"{cfg.prices}: {exc}") from exc
    if cfg.start or cfg.end:
        lo = dt.date.fromisoformat(cfg.start) if cfg.start else prices.dates[0]
        hi = dt.date.fromisoformat(cfg.end) if cfg.end else prices.dates[-1]
        prices = slice_by_date(prices, lo, hi)
    posts = None
    if cfg.tweets and cfg.tweet_features:
        try:
            posts = read_tweet_jsonl(cfg.tweets)
        except ValidationError as exc:
            raise ValidationError(f"{cfg.tweets}: {exc}") from exc
    analyzer = Analyzer(load_lexicon(cfg.lexicon)) if cfg.lexicon else None
    return prices, posts, analyzer


def build_table(cfg: RunConfig, keep_last: bool = False) -> ft.FeatureTable:
    prices, posts, analyzer = _load_inputs(cfg)
    return pipeline.build_table(
        prices, posts, analyzer,
        sma_n=cfg.sma_n, boll_n=cfg.boll_n, boll_m=cfg.boll_m,
        tweet_features=cfg.tweet_features, attribute_features=cfg.attribute_features,
        lookback=cfg.lookback, keep_last=keep_last,
    )


def _input_hashes(cfg: RunConfig) -> dict:
    out = {}
    for key in ("prices", "tweets", "lexicon"):
        path = getattr(cfg, key)
        if path:
            out[key] = {"path": str(path), "blob": git_blob_hash(path)}
    return out


def featurize(cfg: RunConfig, run: Path) -> ft.FeatureTable:
    table = build_table(cfg)
    scaler = pipeline.fit_for_table(table, cfg.window, cfg.stride, cfg.split, cfg.scale_kinds, cfg.scale)
    n_examples = ft.window_count(len(table), cfg.window, cfg.stride)
    _write(run / FEATURES_FILE, table.to_csv())
    _write(run / SCALER_FILE, scaler.to_text())
    _write(run / CONFIG_FILE, cfg.to_text())
    _update_manifest(
        run,
        config_sha256=cfg.digest(),
        seed=cfg.seed,
        inputs=_input_hashes(cfg),
        rows=len(table),
        columns=list(table.column_names),
        examples=n_examples,
        split=dict(zip(("train", "val", "test"), ft.split_sizes(n_examples, cfg.split))),
    )
    return table


def _prepared(cfg: RunConfig, run: Path) -> pipeline.Prepared:
    table = ft.FeatureTable.from_csv((run / FEATURES_FILE).read_text())
    scaler = ft.Scaler.from_text((run / SCALER_FILE).read_text())
    return pipeline.prepare(table, cfg.window, cfg.stride, cfg.split, scaler=scaler)


def train_run(cfg: RunConfig, run: Path) -> list[trainer.EpochRecord]:
    prep = _prepared(cfg, run)
    params = neural.init_params(
        len(prep.table.price_columns), len(prep.table.tweet_columns),
        hidden=cfg.hidden, dense=cfg.dense, dropout_p=cfg.dropout_p, seed=cfg.seed,
    )
    try:
        best, records = trainer.train(cfg.train_config(), params, prep.train, prep.val)
    except Diverged as exc:
        _write(run / CURVE_FILE, trainer.curve_csv(exc.records))
        if exc.params is not None:
            neural.save_checkpoint(exc.params, run / CHECKPOINT_FILE)
        raise
    neural.save_checkpoint(best, run / CHECKPOINT_FILE)
    _write(run / CURVE_FILE, trainer.curve_csv(records))
    _write(run / CONFIG_FILE, cfg.to_text())
    _update_manifest(run, config_sha256=cfg.digest(), seed=cfg.seed, epochs=cfg.epochs,
                     hidden=cfg.hidden, dense=cfg.dense)
    return records


def evaluate_run(cfg: RunConfig, run: Path) -> float:
    prep = _prepared(cfg, run)
    params = neural.load_checkpoint(run / CHECKPOINT_FILE)
    test_mse, series = trainer.evaluate(params, prep.test, prep.scaler)
    _write(run / PREDICTIONS_FILE, trainer.predictions_csv(series, currency=True))
    _write(run / PREDICTIONS_SCALED_FILE, trainer.predictions_csv(series, currency=False))
    _write(run / EVALUATION_FILE, f"test_mse = {test_mse!r}\nn_test = {len(series)}\n")
    return test_mse


def predict_run(cfg: RunConfig, run: Path) -> tuple[dt.date, float]:
    """Forecast the close after the last available trading day."""
    table = build_table(cfg, keep_last=True)
    scaler = ft.Scaler.from_text((run / SCALER_FILE).read_text())
    params = neural.load_checkpoint(run / CHECKPOINT_FILE)
    if len(table) < cfg.window:
        raise ValidationError(f"{len(table)} rows cannot fill a window of {cfg.window}")
    scaled = ft.transform(scaler, table)
    lo = len(scaled) - cfg.window
    xp = scaled.matrix(scaled.price_columns)[lo:]
    xt = scaled.matrix(scaled.tweet_columns)[lo:]
    y = neural.predict(params, xp, xt)
    value = float(scaler.target.inverse(np.array([y]))[0])
    as_of = table.dates[-1]
    _write(run / PREDICTION_FILE, f"as_of = {as_of.isoformat()}\nprediction = {value!r}\nscaled = {y!r}\n")
    return as_of, value


def read_test_mse(run: str) -> float:
    path = _require_run(run, EVALUATION_FILE) / EVALUATION_FILE
    for line in path.read_text().splitlines():
        key, _, value = line.partition("=")
        if key.strip() == "test_mse":
            return float(value)
    raise MissingRun(f"{path} has no test_mse")


def compare_report(mse_a: float, mse_b: float, name_a: str = "a", name_b: str = "b") -> str:
    """Deltas are b relative to a: negative means b has the lower MSE."""
    delta = mse_b - mse_a
    pct = 0.0 if delta == 0 else (math.copysign(math.inf, delta) if mse_a == 0 else 100.0 * delta / mse_a)
    return (
        f"run_a = {name_a}\nrun_b = {name_b}\n"
        f"test_mse_a = {mse_a!r}\ntest_mse_b = {mse_b!r}\n"
        f"delta = {delta:+.6g}\ndelta_pct = {pct:+.1f}%\n"
    )


# -- argument handling ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _global_flags(p: argparse.ArgumentParser, top: bool) -> None:
    default = None if top else argparse.SUPPRESS
    p.add_argument("--config", default=default, help="key = value config file")
    p.add_argument("--seed", type=int, default=default, help="override the seed")
    p.add_argument("--out", default=default, help="output root directory")
    p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                   default=[] if top else argparse.SUPPRESS, help="override a config key")
    p.add_argument("-v", "--verbose", action="store_true", default=False if top else argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stockcast", description="Sentiment-augmented LSTM stock forecasting.")
    _global_flags(parser, top=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, top=False)
        return p

    add("featurize", "build features.csv and scaler.params in a new run directory")
    p = add("train", "train a network; featurizes into a new run unless --run is given")
    p.add_argument("--run", help="existing run directory holding features.csv")
    p = add("evaluate", "score the test block of a trained run")
    p.add_argument("--run", required=True)
    p = add("predict", "forecast the next close after the last trading day")
    p.add_argument("--run", required=True)
    add("collect", "page a search endpoint into a JSON-lines sink")
    p = add("compare", "compare the test MSE of two evaluated runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p = add("score-file", "write date,compound for every post in a JSON-lines file")
    p.add_argument("posts")
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ValidationError(f"config file not found: {path}")
        cfg = parse_config(path.read_text(encoding="utf-8"), path.parent.resolve())
    for item in args.overrides:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        apply_setting(cfg, key.strip(), value, Path.cwd())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _run_config(args, run: Path) -> RunConfig:
    """Config stored with a run, with the command line applied on top."""
    saved = run / CONFIG_FILE
    cfg = parse_config(saved.read_text(encoding="utf-8")) if saved.is_file() else RunConfig()
    if args.config:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"),
                           Path(args.config).parent.resolve(), into=cfg)
    for item in args.overrides:
        key, _, value = item.partition("=")
        apply_setting(cfg, key.strip(), value, Path.cwd())
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _cmd_featurize(args) -> int:
    cfg = load_config(args)
    validate(cfg)
    run = new_run_dir(cfg.out)
    table = featurize(cfg, run)
    print(f"rows = {len(table)}")
    print(f"columns = {len(table.column_names)} ({len(table.price_columns)} price, "
          f"{len(table.tweet_columns)} tweet)")
    print(f"run = {run}")
    return 0


def _cmd_train(args) -> int:
    if args.run:
        run = _require_run(args.run, FEATURES_FILE, SCALER_FILE)
        cfg = _run_config(args, run)
        validate(cfg, need_prices=False)
    else:
        cfg = load_config(args)
        validate(cfg)
        run = new_run_dir(cfg.out)
        featurize(cfg, run)
    records = train_run(cfg, run)
    best = min(records, key=lambda r: r.val_mse if not math.isnan(r.val_mse) else r.train_mse)
    print(f"epochs = {len(records)}")
    print(f"best_epoch = {best.epoch}")
    print(f"final_train_mse = {records[-1].train_mse:.6g}")
    print(f"run = {run}")
    return 0


def _cmd_evaluate(args) -> int:
    run = _require_run(args.run, FEATURES_FILE, SCALER_FILE, CHECKPOINT_FILE)
    cfg = _run_config(args, run)
    test_mse = evaluate_run(cfg, run)
    print(f"test_mse = {test_mse!r}")
    print(f"run = {run}")
    return 0


def _cmd_predict(args) -> int:
    run = _require_run(args.run, SCALER_FILE, CHECKPOINT_FILE)
    cfg = _run_config(args, run)
    validate(cfg)
    as_of, value = predict_run(cfg, run)
    print(f"as_of = {as_of.isoformat()}")
    print(f"prediction = {value:.4f}")
    return 0


def _cmd_collect(args) -> int:
    cfg = load_config(args)
    if not cfg.query:
        raise ValidationError("collect needs a query (key 'query')")
    if bool(cfg.script) == bool(cfg.url):
        raise ValidationError("collect needs exactly one of 'script' or 'url'")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sink = JsonlSink(cfg.sink or out / "posts.jsonl")
    state_file = StateFile(cfg.state or out / "collector.state")
    budget = RateBudget(cfg.rate_limit, cfg.rate_window)
    if cfg.script:
        if not os.path.isfile(cfg.script):
            raise ValidationError(f"script file not found: {cfg.script}")
        transport = ScriptedTransport.from_script(Path(cfg.script).read_text(encoding="utf-8"))
        # scripted runs use simulated time so rate waits cost nothing
        clock = SimulatedClock()
        now, sleep = clock, clock.sleep
    else:
        transport = HttpTransport(cfg.url, os.environ.get("STOCKCAST_TOKEN"))
        now, sleep = time.monotonic, time.sleep

    def task(state: CollectorState) -> CollectorState:
        return collect(transport, cfg.query, state, budget, sink, state_file.save, now, sleep)

    state = supervise(task, state_file.load(cfg.query), cfg.max_restarts, cfg.backoff, sleep)
    print(f"pages_fetched = {state.pages_fetched}")
    print(f"records_written = {state.records_written}")
    print(f"sink = {sink.path}")
    return 0


def _cmd_compare(args) -> int:
    cfg = load_config(args)
    a, b = read_test_mse(args.run_a), read_test_mse(args.run_b)
    report = compare_report(a, b, args.run_a, args.run_b)
    sys.stdout.write(report)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"compare-{Path(args.run_a).name}-vs-{Path(args.run_b).name}.txt"
    _write(out / name, report)
    return 0


def _cmd_score_file(args) -> int:
    cfg = load_config(args)
    if not os.path.isfile(args.posts):
        raise ValidationError(f"posts file not found: {args.posts}")
    try:
        posts = read_tweet_jsonl(args.posts)
    except ValidationError as exc:
        raise ValidationError(f"{args.posts}: {exc}") from exc
    analyzer = Analyzer(load_lexicon(cfg.lexicon) if cfg.lexicon else None)
    lines = ["date,compound"]
    lines += [f"{p.date.isoformat()},{analyzer.compound(p.text)!r}" for p in posts]
    text = "\n".join(lines) + "\n"
    if args.output:
        _write(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "collect": _cmd_collect,
    "compare": _cmd_compare,
    "score-file": _cmd_score_file,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (StockcastError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
