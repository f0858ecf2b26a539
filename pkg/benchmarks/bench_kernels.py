"""Time the compiled and numpy kernel backends on the same inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and size with the best-of-N time for each backend
and the speedup. Also reports one full training epoch through the network.
"""
import argparse
import datetime as dt
import timeit

import numpy as np

from stockcast import kernels, neural, trainer
from stockcast.features import Example


def lstm_inputs(H, F, T, seed=0):
    rng = np.random.default_rng(seed)
    W = rng.normal(0, 0.1, (4 * H, H + F))
    b = rng.normal(0, 0.1, 4 * H)
    X = rng.normal(size=(T, F))
    return W, b, X, np.zeros(H), np.zeros(H)


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_kernel(name, make_call, repeat):
    times = {}
    for backend in ("python", "cython"):
        try:
            mod = kernels.get_backend(backend)
        except ImportError:
            continue
        call = make_call(mod)
        number = max(1, int(0.05 / max(best(call, 1, 1), 1e-7)))
        times[backend] = best(call, repeat, number)
    py = times.get("python")
    cy = times.get("cython")
    speed = f"{py / cy:6.1f}x" if py and cy else "   n/a"
    fmt = lambda t: f"{t * 1e6:10.1f} us" if t is not None else "         n/a"  # noqa: E731
    print(f"{name:32s} python {fmt(py)}   cython {fmt(cy)}   speedup {speed}")


def forward_call(args):
    return lambda mod: (lambda: mod.lstm_forward(*args))


def backward_call(args):
    W, b, X, h0, c0 = args

    def make(mod):
        hs, cs, gates = mod.lstm_forward(W, b, X, h0, c0)
        dhs = np.ones_like(hs)
        return lambda: mod.lstm_backward(W, X, hs, cs, gates, h0, c0, dhs)

    return make


def epoch_time(backend, H, n_examples, repeat):
    mod = kernels.get_backend(backend)
    rng = np.random.default_rng(1)
    data = [Example(rng.normal(size=(7, 9)), rng.normal(size=(7, 6)), float(rng.normal()), i,
                    dt.date(2020, 1, 1), None) for i in range(n_examples)]
    params = neural.init_params(9, 6, hidden=H, dense=H, seed=0)
    cfg = trainer.TrainConfig(epochs=1)
    saved = kernels.lstm_forward, kernels.lstm_backward
    kernels.lstm_forward, kernels.lstm_backward = mod.lstm_forward, mod.lstm_backward
    try:
        return min(timeit.repeat(lambda: trainer.train(cfg, params, data), repeat=repeat, number=1))
    finally:
        kernels.lstm_forward, kernels.lstm_backward = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"default backend: {kernels.BACKEND}")
    for H in (16, 64, 200):
        inputs = lstm_inputs(H, 9, 7)
        bench_kernel(f"lstm_forward  H={H} T=7", forward_call(inputs), args.repeat)
        bench_kernel(f"lstm_backward H={H} T=7", backward_call(inputs), args.repeat)
    x = 100 + np.cumsum(np.random.default_rng(2).normal(size=5000))
    for n in (5, 20):
        bench_kernel(f"rolling_mean_std n={n} len=5000", lambda mod, n=n: (lambda: mod.rolling_mean_std(x, n)),
                     args.repeat)
    for H in (16, 200):
        times = {}
        for backend in ("python", "cython"):
            try:
                times[backend] = epoch_time(backend, H, 50, max(1, args.repeat // 2))
            except ImportError:
                pass
        line = "   ".join(f"{k} {v * 1e3:8.1f} ms" for k, v in times.items())
        print(f"{'train epoch, 50 examples H=' + str(H):32s} {line}")


if __name__ == "__main__":
    main()
