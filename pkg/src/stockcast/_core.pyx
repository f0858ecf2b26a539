# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: LSTM sequence forward/backward and rolling statistics.

Same signatures and array layouts as ``stockcast._pure``. Row-major weight
matrices of shape (R, K) are handed to Fortran BLAS as their (K, R)
column-major transpose, so ``W @ v`` is a ``dgemv('T')`` and ``W.T @ dz`` a
``dgemv('N')``. Input projections and weight gradients are batched over all
timesteps into single ``dgemm`` calls; only the recurrent part runs per step.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, tanh, NAN
from scipy.linalg.cython_blas cimport dgemm, dgemv

cnp.import_array()


cdef inline double _sigmoid(double z) nogil:
    return 0.5 * (tanh(0.5 * z) + 1.0)


def rolling_mean_std(values, Py_ssize_t n):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t T = v.shape[0]
    mean_arr = np.full(T, np.nan)
    std_arr = np.full(T, np.nan)
    cdef double[::1] mean = mean_arr
    cdef double[::1] std = std_arr
    cdef Py_ssize_t t, k
    cdef double x0, s, md, d, ss
    with nogil:
        for t in range(n - 1, T):
            x0 = v[t - n + 1]
            s = 0.0
            for k in range(t - n + 1, t + 1):
                s = s + (v[k] - x0)
            md = s / n
            ss = 0.0
            for k in range(t - n + 1, t + 1):
                d = (v[k] - x0) - md
                ss = ss + d * d
            mean[t] = x0 + md
            std[t] = sqrt(ss / n)
    return mean_arr, std_arr


def lstm_forward(W_in, b_in, X_in, h0_in, c0_in):
    cdef double[:, ::1] W = np.ascontiguousarray(W_in, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64).reshape(X_in.shape[0], -1)
    cdef double[::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef double[::1] c0 = np.ascontiguousarray(c0_in, dtype=np.float64)
    cdef int T = X.shape[0]
    cdef int F = X.shape[1]
    cdef int H = h0.shape[0]
    cdef int R = W.shape[0]
    cdef int K = W.shape[1]
    if R != 4 * H or K != H + F:
        raise ValueError("weight shape does not match hidden/feature sizes")

    hs_arr = np.empty((T, H))
    cs_arr = np.empty((T, H))
    gates_arr = np.empty((T, 4 * H))
    # input projections for every step at once: Z[t] = W[:, H:] @ X[t]
    Z_arr = np.zeros((T, R))
    cdef double[:, ::1] hs = hs_arr
    cdef double[:, ::1] cs = cs_arr
    cdef double[:, ::1] gates = gates_arr
    cdef double[:, ::1] Z = Z_arr
    cdef double[::1] h = np.empty(H)
    cdef double[::1] c = np.empty(H)
    cdef int t, j
    cdef int inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char trans = b'T', notrans = b'N'
    cdef double f, i, g, o

    with nogil:
        if F > 0 and T > 0:
            dgemm(&trans, &notrans, &R, &T, &F, &one, &W[0, H], &K, &X[0, 0], &F, &zero, &Z[0, 0], &R)
        for j in range(H):
            h[j] = h0[j]
            c[j] = c0[j]
        for t in range(T):
            # recurrent part, accumulated onto the input projection
            dgemv(&trans, &H, &R, &one, &W[0, 0], &K, &h[0], &inc, &one, &Z[t, 0], &inc)
            for j in range(H):
                f = _sigmoid(Z[t, j] + b[j])
                i = _sigmoid(Z[t, H + j] + b[H + j])
                g = tanh(Z[t, 2 * H + j] + b[2 * H + j])
                o = _sigmoid(Z[t, 3 * H + j] + b[3 * H + j])
                c[j] = f * c[j] + i * g
                h[j] = o * tanh(c[j])
                hs[t, j] = h[j]
                cs[t, j] = c[j]
                gates[t, j] = f
                gates[t, H + j] = i
                gates[t, 2 * H + j] = g
                gates[t, 3 * H + j] = o
    return hs_arr, cs_arr, gates_arr


def lstm_backward(W_in, X_in, hs_in, cs_in, gates_in, h0_in, c0_in, dhs_in):
    cdef double[:, ::1] W = np.ascontiguousarray(W_in, dtype=np.float64)
    cdef double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64).reshape(X_in.shape[0], -1)
    cdef double[:, ::1] hs = np.ascontiguousarray(hs_in, dtype=np.float64)
    cdef double[:, ::1] cs = np.ascontiguousarray(cs_in, dtype=np.float64)
    cdef double[:, ::1] gates = np.ascontiguousarray(gates_in, dtype=np.float64)
    cdef double[::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef double[::1] c0 = np.ascontiguousarray(c0_in, dtype=np.float64)
    cdef double[:, ::1] dhs = np.ascontiguousarray(dhs_in, dtype=np.float64)
    cdef int T = X.shape[0]
    cdef int F = X.shape[1]
    cdef int H = h0.shape[0]
    cdef int R = W.shape[0]
    cdef int K = W.shape[1]

    dW_arr = np.zeros((R, K))
    db_arr = np.zeros(R)
    dX_arr = np.zeros((T, F))
    dZ_arr = np.empty((T, R))
    # rows are [h_{t-1}, x_t], the inputs each step's gates saw
    V_arr = np.empty((T, K))
    cdef double[:, ::1] dW = dW_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dX = dX_arr
    cdef double[:, ::1] dZ = dZ_arr
    cdef double[:, ::1] V = V_arr
    cdef double[::1] dh_next = np.zeros(H)
    cdef double[::1] dc_next = np.zeros(H)
    cdef int t, j
    cdef int inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char trans = b'T', notrans = b'N'
    cdef double f, i, g, o, tc, dh, dc, c_prev

    with nogil:
        for t in range(T - 1, -1, -1):
            for j in range(H):
                f = gates[t, j]
                i = gates[t, H + j]
                g = gates[t, 2 * H + j]
                o = gates[t, 3 * H + j]
                if t > 0:
                    c_prev = cs[t - 1, j]
                    V[t, j] = hs[t - 1, j]
                else:
                    c_prev = c0[j]
                    V[t, j] = h0[j]
                tc = tanh(cs[t, j])
                dh = dhs[t, j] + dh_next[j]
                dc = dc_next[j] + dh * o * (1.0 - tc * tc)
                dZ[t, j] = dc * c_prev * f * (1.0 - f)
                dZ[t, H + j] = dc * g * i * (1.0 - i)
                dZ[t, 2 * H + j] = dc * i * (1.0 - g * g)
                dZ[t, 3 * H + j] = dh * tc * o * (1.0 - o)
                dc_next[j] = dc * f
            for j in range(F):
                V[t, H + j] = X[t, j]
            # dh_{t-1} = W[:, :H].T @ dz_t
            dgemv(&notrans, &H, &R, &one, &W[0, 0], &K, &dZ[t, 0], &inc, &zero, &dh_next[0], &inc)
        if T > 0:
            # dW = dZ.T @ V and dX = dZ @ W[:, H:], one product each
            dgemm(&notrans, &trans, &K, &R, &T, &one, &V[0, 0], &K, &dZ[0, 0], &R, &zero, &dW[0, 0], &K)
            if F > 0:
                dgemm(&notrans, &notrans, &F, &T, &R, &one, &W[0, H], &K, &dZ[0, 0], &R, &zero, &dX[0, 0], &F)
        for t in range(T):
            for j in range(R):
                db[j] = db[j] + dZ[t, j]
    return dW_arr, db_arr, dX_arr
