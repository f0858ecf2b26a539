"""Training loop, MSE evaluation, learning-curve and prediction export."""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import io
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import neural
from .errors import Diverged, EmptyInput, LengthMismatch, NonFiniteGradient, ValidationError
from .features import Example, Scaler

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = neural.DEFAULT_LEARNING_RATE
    decay: float = 0.97
    batch_size: int = 1
    seed: int = 0
    dropout_p: float = neural.DEFAULT_DROPOUT
    window: int = 7
    clip_norm: float | None = neural.DEFAULT_CLIP_NORM

    def __post_init__(self):
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ValidationError(f"epochs must be a positive integer, got {self.epochs!r}")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not 0 < self.decay <= 1:
            raise ValidationError("decay must be in (0, 1]")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not 0 <= self.dropout_p < 1:
            raise ValidationError("dropout_p must be in [0, 1)")
        if self.window < 1:
            raise ValidationError("window must be >= 1")

    def lr_for_epoch(self, epoch: int) -> float:
        """Learning rate used during 1-based ``epoch``."""
        return self.learning_rate * self.decay ** (epoch - 1)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    learning_rate_used: float


@dataclass(frozen=True)
class SeriesPoint:
    date: dt.date | None
    truth: float
    prediction: float
    truth_currency: float
    prediction_currency: float


def mse(predictions: Sequence[float], truths: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.shape} predictions vs {t.shape} truths")
    if p.size == 0:
        raise EmptyInput("mse of empty vectors")
    d = p - t
    return float(np.mean(d * d))


def predict_all(params: neural.NetworkParams, examples: Sequence[Example]) -> np.ndarray:
    return np.array([neural.predict(params, ex.x_price, ex.x_tweet) for ex in examples])


def dataset_mse(params: neural.NetworkParams, examples: Sequence[Example]) -> float:
    return mse(predict_all(params, examples), [ex.y for ex in examples])


def _accumulate(acc: neural.NetworkParams | None, g: neural.NetworkParams):
    if acc is None:
        return g
    for (_, a), (_, b) in zip(acc.tensors(), g.tensors()):
        a += b
    return acc


def train(
    config: TrainConfig,
    params: neural.NetworkParams,
    train_set: Sequence[Example],
    val_set: Sequence[Example] = (),
    on_epoch=None,
) -> tuple[neural.NetworkParams, list[EpochRecord]]:
    """Train with per-example (or mini-batch) SGD and return the best-validation params.

    Each epoch shuffles the training set with a generator seeded by
    ``(seed, epoch)``, so runs are bitwise reproducible. MSEs are recorded
    with dropout off after every epoch. Without a validation set the
    training MSE drives selection.
    """
    if not train_set:
        raise EmptyInput("empty training set")
    # updated in place; snapshots are taken once per epoch
    params = dataclasses.replace(params.copy(), dropout_p=config.dropout_p)
    records: list[EpochRecord] = []
    best = params.copy()
    best_score = math.inf
    last_finite = best

    for epoch in range(1, config.epochs + 1):
        lr = config.lr_for_epoch(epoch)
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train_set))
        seeds = rng.integers(0, 2**63 - 1, size=len(train_set))
        try:
            for start in range(0, len(order), config.batch_size):
                batch = order[start:start + config.batch_size]
                acc = None
                for k in batch:
                    ex = train_set[k]
                    pred, tape = neural.forward(params, ex.x_price, ex.x_tweet, "train", int(seeds[k]))
                    if not math.isfinite(pred):
                        raise NonFiniteGradient("non-finite prediction")
                    acc = _accumulate(acc, neural.backward(tape, params, 2.0 * (pred - ex.y)))
                if len(batch) > 1:
                    acc = acc.map(lambda a: a / len(batch))
                neural.sgd_update_(params, acc, lr, config.clip_norm)
        except NonFiniteGradient:
            raise Diverged(epoch, last_finite, records) from None

        train_mse = dataset_mse(params, train_set)
        val_mse = dataset_mse(params, val_set) if val_set else math.nan
        if not math.isfinite(train_mse) or (val_set and not math.isfinite(val_mse)):
            raise Diverged(epoch, last_finite, records)
        last_finite = params.copy()
        rec = EpochRecord(epoch, train_mse, val_mse, lr)
        records.append(rec)
        log.debug("epoch %d lr %.6g train %.6g val %.6g", epoch, lr, train_mse, val_mse)
        if on_epoch is not None:
            on_epoch(rec, last_finite)
        score = val_mse if val_set else train_mse
        if score < best_score:
            best_score = score
            best = last_finite
    return best, records


def evaluate(
    params: neural.NetworkParams,
    test_set: Sequence[Example],
    scaler: Scaler | None = None,
) -> tuple[float, list[SeriesPoint]]:
    """Eval-mode predictions in chronological order.

    Returns the scaled-space MSE and the series, with currency values
    recovered through ``scaler`` when given (else equal to the scaled ones).
    """
    if not test_set:
        raise EmptyInput("empty test set")
    ordered = sorted(test_set, key=lambda ex: ex.row)
    preds = predict_all(params, ordered)
    truths = np.array([ex.y for ex in ordered])
    if scaler is not None:
        truth_cur = scaler.target.inverse(truths)
        pred_cur = scaler.target.inverse(preds)
    else:
        truth_cur, pred_cur = truths, preds
    series = [
        SeriesPoint(ex.target_date, float(t), float(p), float(tc), float(pc))
        for ex, t, p, tc, pc in zip(ordered, truths, preds, truth_cur, pred_cur)
    ]
    return mse(preds, truths), series


def curve_csv(records: Sequence[EpochRecord]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["epoch", "train_mse", "val_mse", "lr"])
    for r in records:
        w.writerow([r.epoch, repr(r.train_mse), repr(r.val_mse), repr(r.learning_rate_used)])
    return out.getvalue()


def predictions_csv(series: Sequence[SeriesPoint], currency: bool = True) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["date", "truth", "prediction"])
    for s in series:
        t, p = (s.truth_currency, s.prediction_currency) if currency else (s.truth, s.prediction)
        w.writerow([s.date.isoformat() if s.date else "", repr(t), repr(p)])
    return out.getvalue()


def read_predictions_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))[1:]
    return np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows])
