import datetime as dt
import math

import numpy as np
import pytest

from stockcast import neural, pipeline, trainer
from stockcast.errors import Diverged, EmptyInput, LengthMismatch, ValidationError
from stockcast.features import Example


def examples(n, y=None, seed=0, W=4, n_price=3, n_tweet=2):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        target = float(rng.normal()) if y is None else y
        out.append(Example(rng.normal(size=(W, n_price)), rng.normal(size=(W, n_tweet)), target, i,
                           dt.date(2020, 1, 1) + dt.timedelta(days=i),
                           dt.date(2020, 1, 2) + dt.timedelta(days=i)))
    return out


def small_params(seed=0, hidden=8):
    return neural.init_params(3, 2, hidden=hidden, dense=hidden, seed=seed)


def test_mse_examples():
    assert trainer.mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert trainer.mse([1.0, -1.0], [0.0, 0.0]) == 1.0
    with pytest.raises(LengthMismatch):
        trainer.mse([1.0], [1.0, 2.0])
    with pytest.raises(EmptyInput):
        trainer.mse([], [])


def test_mse_matches_naive_loop():
    rng = np.random.default_rng(4)
    p, t = rng.normal(size=100), rng.normal(size=100)
    naive = 0.0
    for a, b in zip(p, t):
        naive += (a - b) ** 2
    assert abs(trainer.mse(p, t) - naive / 100) <= 1e-12


def test_config_validation():
    for bad in ({"epochs": 0}, {"learning_rate": 0}, {"decay": 0}, {"decay": 1.5},
                {"batch_size": 0}, {"dropout_p": 1.0}, {"window": 0}):
        with pytest.raises(ValidationError):
            trainer.TrainConfig(**bad)
    c = trainer.TrainConfig()
    assert (c.epochs, c.learning_rate, c.decay, c.batch_size, c.dropout_p, c.window) == (
        100, 0.008, 0.97, 1, 0.2, 7)


def test_lr_schedule_recorded():
    cfg = trainer.TrainConfig(epochs=6, seed=1)
    _, recs = trainer.train(cfg, small_params(), examples(5), examples(3, seed=9))
    for r in recs:
        assert r.learning_rate_used == pytest.approx(0.008 * 0.97 ** (r.epoch - 1), rel=1e-15)
    assert [r.epoch for r in recs] == list(range(1, 7))


def test_constant_target_is_fitted():
    # fixed-seed sanity run: dropout off, no decay
    cfg = trainer.TrainConfig(epochs=100, learning_rate=0.05, decay=1.0, dropout_p=0.0, seed=0)
    rng = np.random.default_rng(0)
    data = [Example(rng.normal(size=(7, 9)), rng.normal(size=(7, 6)), 0.5, i, dt.date(2020, 1, 1), None)
            for i in range(20)]
    p = neural.init_params(9, 6, hidden=16, dense=16, seed=0)
    _, recs = trainer.train(cfg, p, data)
    assert recs[-1].train_mse <= 1e-4


def test_training_is_reproducible():
    cfg = trainer.TrainConfig(epochs=4, seed=11, batch_size=2)
    a, ra = trainer.train(cfg, small_params(), examples(7), examples(3, seed=5))
    b, rb = trainer.train(cfg, small_params(), examples(7), examples(3, seed=5))
    assert ra == rb
    for (_, x), (_, y) in zip(a.tensors(), b.tensors()):
        assert np.array_equal(x, y)
    assert trainer.curve_csv(ra) == trainer.curve_csv(rb)


def test_returns_best_validation_params():
    val = examples(4, seed=8)
    best, recs = trainer.train(trainer.TrainConfig(epochs=8, learning_rate=0.05, seed=2),
                               small_params(), examples(10), val)
    assert trainer.dataset_mse(best, val) == min(r.val_mse for r in recs)


def test_input_params_untouched():
    p = small_params()
    before = neural.checkpoint_text(p)
    trainer.train(trainer.TrainConfig(epochs=2), p, examples(4))
    assert neural.checkpoint_text(p) == before


def test_empty_training_set():
    with pytest.raises(EmptyInput):
        trainer.train(trainer.TrainConfig(epochs=1), small_params(), [])


def test_divergence_reports_epoch_and_last_finite_params():
    data = examples(6)
    data[3] = Example(data[3].x_price, data[3].x_tweet, 1e200, 3, data[3].date, None)
    with pytest.raises(Diverged) as err:
        trainer.train(trainer.TrainConfig(epochs=3, learning_rate=1.0, clip_norm=None), small_params(), data)
    assert err.value.epoch >= 1
    for _, a in err.value.params.tensors():
        assert np.isfinite(a).all()


def test_callback_sees_every_epoch():
    seen = []
    trainer.train(trainer.TrainConfig(epochs=3), small_params(), examples(3),
                  on_epoch=lambda rec, p: seen.append(rec.epoch))
    assert seen == [1, 2, 3]


def test_memorized_set_gives_zero_test_mse():
    data = examples(3)
    p = small_params()
    preds = trainer.predict_all(p, data)
    # relabel with the network's own outputs: a perfect fit by construction
    memorized = [Example(e.x_price, e.x_tweet, float(y), e.row, e.date, e.target_date)
                 for e, y in zip(data, preds)]
    mse, series = trainer.evaluate(p, memorized)
    assert mse == 0.0 and len(series) == 3


def test_evaluate_series_and_recomputation(synth):
    table = pipeline.build_table(synth.prices, synth.posts)
    prep = pipeline.prepare(table, seed=3)
    p = neural.init_params(len(table.price_columns), len(table.tweet_columns), hidden=6, dense=6, seed=0)
    mse, series = trainer.evaluate(p, prep.test, prep.scaler)
    assert len(series) == len(prep.test)
    assert [s.date for s in series] == sorted(s.date for s in series)
    truth, pred = trainer.read_predictions_csv(trainer.predictions_csv(series, currency=False))
    assert abs(trainer.mse(pred, truth) - mse) <= 1e-9
    truth_c, _ = trainer.read_predictions_csv(trainer.predictions_csv(series))
    closes = dict(zip(synth.prices.dates, synth.prices.column("close")))
    for s, t in zip(series, truth_c):
        assert t == pytest.approx(closes[s.date], rel=1e-12)
    with pytest.raises(EmptyInput):
        trainer.evaluate(p, [])


def test_curve_csv_format():
    text = trainer.curve_csv([trainer.EpochRecord(1, 0.5, 0.25, 0.008)])
    assert text == "epoch,train_mse,val_mse,lr\n1,0.5,0.25,0.008\n"


@pytest.mark.slow
def test_learning_curve_sanity_over_100_seeds(synth):
    table = pipeline.build_table(synth.prices, synth.posts)
    prep = pipeline.prepare(table, window=3)
    subset = prep.train[:16]
    improved = 0
    for seed in range(100):
        p = neural.init_params(len(table.price_columns), len(table.tweet_columns), hidden=4, dense=4, seed=seed)
        _, recs = trainer.train(trainer.TrainConfig(epochs=100, seed=seed, window=3), p, subset)
        improved += recs[-1].train_mse < recs[0].train_mse
    assert improved >= 95
