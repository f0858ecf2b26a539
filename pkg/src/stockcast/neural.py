"""Dual-branch LSTM regression network with hand-written backpropagation.

Layout::

    x_price (W, F1) -> LSTM(H1) --+
                                  +-- concat per step -> LSTM(Hm) -> last h
    x_tweet (W, F2) -> LSTM(H2) --+
    -> dense1 (tanh) -> dropout -> dense2 (tanh) -> dropout -> dense_out (linear)

The per-sequence LSTM loops run in ``stockcast.kernels`` (compiled when
available). Everything is float64.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.linalg.blas import daxpy as _axpy

from . import kernels
from .errors import DimensionMismatch, NonFiniteGradient, StaleTape, ValidationError

DEFAULT_HIDDEN = 200
DEFAULT_DENSE = 200
DEFAULT_DROPOUT = 0.2
DEFAULT_LEARNING_RATE = 0.008
DEFAULT_CLIP_NORM = 5.0
CHECKPOINT_MAGIC = "stockcast-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class LstmCellParams:
    """Gate weights stacked row-wise as [forget, input, candidate, output].

    ``W`` has shape ``(4H, H + F)`` and acts on ``[h_prev, x_t]``.
    """

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        R, K = self.W.shape
        if R % 4 or self.b.shape != (R,) or K < R // 4:
            raise DimensionMismatch(f"inconsistent LSTM shapes W{self.W.shape} b{self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.W.shape[0] // 4

    @property
    def n_features(self) -> int:
        return self.W.shape[1] - self.hidden

    def _gate(self, k):
        H = self.hidden
        return self.W[k * H:(k + 1) * H], self.b[k * H:(k + 1) * H]

    W_f = property(lambda self: self._gate(0)[0])
    W_i = property(lambda self: self._gate(1)[0])
    W_g = property(lambda self: self._gate(2)[0])
    W_o = property(lambda self: self._gate(3)[0])
    b_f = property(lambda self: self._gate(0)[1])
    b_i = property(lambda self: self._gate(1)[1])
    b_g = property(lambda self: self._gate(2)[1])
    b_o = property(lambda self: self._gate(3)[1])


@dataclass
class DenseParams:
    W: np.ndarray
    b: np.ndarray


_LAYERS = ("branch1", "branch2", "merge", "dense1", "dense2", "dense_out")


@dataclass
class NetworkParams:
    branch1: LstmCellParams
    branch2: LstmCellParams
    merge: LstmCellParams
    dense1: DenseParams
    dense2: DenseParams
    dense_out: DenseParams
    dropout_p: float = DEFAULT_DROPOUT

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValidationError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.merge.n_features != self.branch1.hidden + self.branch2.hidden:
            raise DimensionMismatch("merge LSTM input must equal the two branch widths")
        if self.dense1.W.shape[1] != self.merge.hidden or self.dense2.W.shape[1] != self.dense1.W.shape[0] \
                or self.dense_out.W.shape != (1, self.dense2.W.shape[0]):
            raise DimensionMismatch("dense layer shapes do not chain")

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        """``(name, array)`` pairs in a fixed order, e.g. ``("branch1.W", ...)``."""
        for layer in _LAYERS:
            p = getattr(self, layer)
            yield f"{layer}.W", p.W
            yield f"{layer}.b", p.b

    def map(self, fn) -> "NetworkParams":
        """New params with ``fn`` applied to every tensor."""
        def conv(p):
            return type(p)(fn(p.W), fn(p.b))
        return NetworkParams(*(conv(getattr(self, n)) for n in _LAYERS), dropout_p=self.dropout_p)

    def copy(self) -> "NetworkParams":
        return self.map(np.array)

    def zeros_like(self) -> "NetworkParams":
        return self.map(np.zeros_like)

    @property
    def n_price(self) -> int:
        return self.branch1.n_features

    @property
    def n_tweet(self) -> int:
        return self.branch2.n_features

    def shape_summary(self) -> dict:
        return {name: arr.shape for name, arr in self.tensors()}


def _glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_lstm(rng, n_features: int, hidden: int) -> LstmCellParams:
    K = hidden + n_features
    W = np.vstack([_glorot(rng, hidden, K) for _ in range(4)])
    b = np.zeros(4 * hidden)
    b[:hidden] = 1.0
    return LstmCellParams(W, b)


def init_dense(rng, n_in: int, n_out: int) -> DenseParams:
    return DenseParams(_glorot(rng, n_out, n_in), np.zeros(n_out))


def init_params(
    n_price: int,
    n_tweet: int,
    hidden: int = DEFAULT_HIDDEN,
    dense: int = DEFAULT_DENSE,
    merge_hidden: int | None = None,
    dropout_p: float = DEFAULT_DROPOUT,
    seed: int = 0,
) -> NetworkParams:
    """Glorot-uniform weights, zero biases, forget-gate biases at 1.0.

    ``n_tweet`` may be 0, in which case the tweet branch runs on bias alone.
    """
    rng = np.random.default_rng(seed)
    merge_hidden = hidden if merge_hidden is None else merge_hidden
    return NetworkParams(
        branch1=init_lstm(rng, n_price, hidden),
        branch2=init_lstm(rng, n_tweet, hidden),
        merge=init_lstm(rng, 2 * hidden, merge_hidden),
        dense1=init_dense(rng, merge_hidden, dense),
        dense2=init_dense(rng, dense, dense),
        dense_out=init_dense(rng, dense, 1),
        dropout_p=dropout_p,
    )


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def lstm_step(params: LstmCellParams, x_t, h_prev, c_prev):
    """Single LSTM time step. Returns ``(h_t, c_t, cache)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    H = params.hidden
    if x_t.shape != (params.n_features,) or np.shape(h_prev) != (H,) or np.shape(c_prev) != (H,):
        raise DimensionMismatch(
            f"expected x({params.n_features},) h({H},) c({H},), got "
            f"x{x_t.shape} h{np.shape(h_prev)} c{np.shape(c_prev)}")
    v = np.concatenate([h_prev, x_t])
    z = params.W @ v + params.b
    f = _sigmoid(z[:H])
    i = _sigmoid(z[H:2 * H])
    g = np.tanh(z[2 * H:3 * H])
    o = _sigmoid(z[3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, {"f": f, "i": i, "g": g, "o": o, "v": v, "c_prev": np.asarray(c_prev)}


@dataclass
class _LstmCache:
    X: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray


@dataclass
class TapeState:
    """Activations cached by ``forward`` for ``backward``."""

    params: NetworkParams
    mode: str
    branch1: _LstmCache
    branch2: _LstmCache
    merge: _LstmCache
    a1: np.ndarray
    a2: np.ndarray
    mask1: np.ndarray | None
    mask2: np.ndarray | None
    prediction: float
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return self.merge.X.shape[0]

    @property
    def dropped1(self) -> np.ndarray:
        return self.a1 if self.mask1 is None else self.a1 * self.mask1

    @property
    def dropped2(self) -> np.ndarray:
        return self.a2 if self.mask2 is None else self.a2 * self.mask2


def _run_lstm(p: LstmCellParams, X: np.ndarray) -> _LstmCache:
    H = p.hidden
    z = np.zeros(H)
    hs, cs, gates = kernels.lstm_forward(p.W, p.b, X, z, z)
    return _LstmCache(X, hs, cs, gates)


def _dropout_mask(rng, size: int, p: float) -> np.ndarray:
    return (rng.random(size) >= p) / (1.0 - p)


def forward(params: NetworkParams, x_price, x_tweet, mode: str = "eval", rng_seed=None):
    """Predict one scalar from a pair of aligned windows.

    In ``"train"`` mode inverted dropout masks are drawn from
    ``np.random.default_rng(rng_seed)``; ``"eval"`` applies no dropout.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    xp = np.asarray(x_price, dtype=np.float64)
    xt = np.asarray(x_tweet, dtype=np.float64)
    if xt.ndim == 1 and xt.size == 0:
        xt = xt.reshape(xp.shape[0], 0)
    if xp.ndim != 2 or xt.ndim != 2 or xp.shape[0] != xt.shape[0] or xp.shape[0] == 0:
        raise DimensionMismatch(f"windows must be 2-D with equal length, got {xp.shape} and {xt.shape}")
    if xp.shape[1] != params.n_price or xt.shape[1] != params.n_tweet:
        raise DimensionMismatch(
            f"network expects {params.n_price}+{params.n_tweet} features, got {xp.shape[1]}+{xt.shape[1]}")

    b1 = _run_lstm(params.branch1, xp)
    b2 = _run_lstm(params.branch2, xt)
    m = _run_lstm(params.merge, np.hstack([b1.hs, b2.hs]))
    h_last = m.hs[-1]

    mask1 = mask2 = None
    if mode == "train" and params.dropout_p > 0:
        rng = np.random.default_rng(rng_seed)
        mask1 = _dropout_mask(rng, params.dense1.W.shape[0], params.dropout_p)
        mask2 = _dropout_mask(rng, params.dense2.W.shape[0], params.dropout_p)

    a1 = np.tanh(params.dense1.W @ h_last + params.dense1.b)
    d1 = a1 if mask1 is None else a1 * mask1
    a2 = np.tanh(params.dense2.W @ d1 + params.dense2.b)
    d2 = a2 if mask2 is None else a2 * mask2
    pred = float(params.dense_out.W[0] @ d2 + params.dense_out.b[0])
    tape = TapeState(params, mode, b1, b2, m, a1, a2, mask1, mask2, pred)
    return pred, tape


def predict(params: NetworkParams, x_price, x_tweet) -> float:
    return forward(params, x_price, x_tweet, mode="eval")[0]


def backward(tape: TapeState, params: NetworkParams, d_loss_d_pred: float) -> NetworkParams:
    """Exact gradients of ``d_loss_d_pred * prediction`` w.r.t. every tensor."""
    if tape.params is not params:
        raise StaleTape("tape was recorded with a different parameter set")
    g = float(d_loss_d_pred)
    d1 = tape.dropped1
    d2 = tape.dropped2

    g_out = DenseParams(np.outer([g], d2), np.array([g]))
    dd2 = params.dense_out.W[0] * g
    da2 = dd2 if tape.mask2 is None else dd2 * tape.mask2
    dz2 = da2 * (1.0 - tape.a2 * tape.a2)
    g_d2 = DenseParams(np.outer(dz2, d1), dz2)
    dd1 = params.dense2.W.T @ dz2
    da1 = dd1 if tape.mask1 is None else dd1 * tape.mask1
    dz1 = da1 * (1.0 - tape.a1 * tape.a1)
    h_last = tape.merge.hs[-1]
    g_d1 = DenseParams(np.outer(dz1, h_last), dz1)
    dh_last = params.dense1.W.T @ dz1

    def back(p: LstmCellParams, cache: _LstmCache, dhs):
        z = np.zeros(p.hidden)
        dW, db, dX = kernels.lstm_backward(p.W, cache.X, cache.hs, cache.cs, cache.gates, z, z, dhs)
        return LstmCellParams(dW, db), dX

    T = len(tape)
    dhs_m = np.zeros((T, params.merge.hidden))
    dhs_m[-1] = dh_last
    g_m, dm_in = back(params.merge, tape.merge, dhs_m)
    H1 = params.branch1.hidden
    g_b1, _ = back(params.branch1, tape.branch1, np.ascontiguousarray(dm_in[:, :H1]))
    g_b2, _ = back(params.branch2, tape.branch2, np.ascontiguousarray(dm_in[:, H1:]))
    return NetworkParams(g_b1, g_b2, g_m, g_d1, g_d2, g_out, dropout_p=params.dropout_p)


def global_norm(grads: NetworkParams) -> float:
    total = 0.0
    # overflow shows up as inf, which callers treat as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        for _, a in grads.tensors():
            flat = a.ravel()
            total += float(flat @ flat)
    return float(np.sqrt(total))


def _clipped_step(gradients: NetworkParams, learning_rate: float, clip_norm: float | None) -> float:
    if not learning_rate > 0:
        raise ValidationError(f"learning_rate must be positive, got {learning_rate}")
    norm = global_norm(gradients)
    if not np.isfinite(norm):
        raise NonFiniteGradient("gradient contains non-finite values")
    if clip_norm is not None and clip_norm > 0 and norm > clip_norm:
        return learning_rate * (clip_norm / norm)
    return learning_rate


def sgd_update_(
    params: NetworkParams,
    gradients: NetworkParams,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    clip_norm: float | None = DEFAULT_CLIP_NORM,
) -> None:
    """In-place form of :func:`sgd_update`; ``params`` is modified."""
    step = _clipped_step(gradients, learning_rate, clip_norm)
    for (_, a), (_, g) in zip(params.tensors(), gradients.tensors()):
        if a.flags.c_contiguous and a.dtype == np.float64:
            _axpy(np.ascontiguousarray(g, dtype=np.float64).reshape(-1), a.reshape(-1), a=-step)
        else:
            a -= step * g


def sgd_update(
    params: NetworkParams,
    gradients: NetworkParams,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    clip_norm: float | None = DEFAULT_CLIP_NORM,
) -> NetworkParams:
    """One plain SGD step after global-norm clipping. Returns new params."""
    out = params.copy()
    sgd_update_(out, gradients, learning_rate, clip_norm)
    return out


def _from_flat(tensors: dict, dropout_p: float) -> NetworkParams:
    layers = []
    for layer in _LAYERS:
        cls = LstmCellParams if layer in ("branch1", "branch2", "merge") else DenseParams
        layers.append(cls(tensors[f"{layer}.W"], tensors[f"{layer}.b"]))
    return NetworkParams(*layers, dropout_p=dropout_p)


# -- checkpoints ---------------------------------------------------------------

def checkpoint_text(params: NetworkParams) -> str:
    """Versioned text checkpoint; floats are written with ``repr`` so they round-trip."""
    out = io.StringIO()
    out.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
    out.write(f"dropout_p {params.dropout_p!r}\n")
    for name, arr in params.tensors():
        a2 = arr.reshape(arr.shape[0], -1) if arr.ndim == 2 else arr.reshape(1, -1)
        out.write(f"tensor {name} {' '.join(map(str, arr.shape))}\n")
        for row in a2:
            out.write(" ".join(repr(float(x)) for x in row) + "\n")
    return out.getvalue()


def parse_checkpoint(text: str) -> NetworkParams:
    lines = text.splitlines()
    if not lines or lines[0].split() != [CHECKPOINT_MAGIC, str(CHECKPOINT_VERSION)]:
        raise ValidationError("not a stockcast checkpoint (or unsupported version)")
    key, value = lines[1].split()
    if key != "dropout_p":
        raise ValidationError("checkpoint missing dropout_p")
    dropout_p = float(value)
    tensors = {}
    i = 2
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] != "tensor":
            raise ValidationError(f"checkpoint line {i + 1}: expected tensor header")
        name = parts[1]
        shape = tuple(int(s) for s in parts[2:])
        n_rows = shape[0] if len(shape) == 2 else 1
        rows = lines[i + 1:i + 1 + n_rows]
        flat = [float(x) for row in rows for x in row.split()]
        if len(flat) != int(np.prod(shape)):
            raise ValidationError(f"checkpoint tensor {name}: expected {shape}, got {len(flat)} values")
        tensors[name] = np.array(flat, dtype=np.float64).reshape(shape)
        i += 1 + n_rows
    return _from_flat(tensors, dropout_p)


def save_checkpoint(params: NetworkParams, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(checkpoint_text(params))


def load_checkpoint(path) -> NetworkParams:
    with open(path, encoding="utf-8") as fh:
        return parse_checkpoint(fh.read())
