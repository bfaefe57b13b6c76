"""Hot numeric kernels with a numba-jitted fast path and a pure-numpy fallback.

The backend is chosen once at import time: numba is used when it is
importable and the environment variable ``CCGLEARN_NO_NUMBA`` is unset (or
"0").  Both paths compute the same quantities in float64; they may differ in
the last few ulps because summation order differs, which is why determinism
guarantees elsewhere in the package are always stated per-backend.

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_want_numba = os.environ.get("CCGLEARN_NO_NUMBA", "0") in ("", "0")

if _want_numba:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - numba is an optional extra
        HAS_NUMBA = False
else:
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# pure-numpy reference implementations
# ---------------------------------------------------------------------------

def _softmax_rows_np(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _leaky_relu_np(x, slope):
    return np.where(x > 0.0, x, slope * x)


def _leaky_relu_grad_np(x, g, slope):
    return np.where(x > 0.0, g, slope * g)


def _adam_update_np(p, g, m, v, lr, beta1, beta2, eps, wd, t):
    if wd != 0.0:
        g = g + wd * p
    m[:] = beta1 * m + (1.0 - beta1) * g
    v[:] = beta2 * v + (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def _sgd_update_np(p, g, buf, lr, momentum, wd):
    if wd != 0.0:
        g = g + wd * p
    if momentum != 0.0:
        buf[:] = momentum * buf + g
        p -= lr * buf
    else:
        p -= lr * g


def _simplex_project_np(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    cond = u + (1.0 - css) / ks > 0.0
    rho = np.nonzero(cond)[0][-1]
    theta = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + theta, 0.0)


# ---------------------------------------------------------------------------
# numba fast path (same signatures, flat loops)
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _softmax_rows_nb(z):
        n, k = z.shape
        out = np.empty_like(z)
        for i in range(n):
            m = z[i, 0]
            for j in range(1, k):
                if z[i, j] > m:
                    m = z[i, j]
            s = 0.0
            for j in range(k):
                out[i, j] = np.exp(z[i, j] - m)
                s += out[i, j]
            for j in range(k):
                out[i, j] /= s
        return out

    @njit(cache=True)
    def _leaky_relu_nb(x, slope):
        out = np.empty_like(x)
        flat_in = x.ravel()
        flat_out = out.ravel()
        for i in range(flat_in.size):
            v = flat_in[i]
            flat_out[i] = v if v > 0.0 else slope * v
        return out

    @njit(cache=True)
    def _leaky_relu_grad_nb(x, g, slope):
        out = np.empty_like(g)
        fx = x.ravel()
        fg = g.ravel()
        fo = out.ravel()
        for i in range(fx.size):
            fo[i] = fg[i] if fx[i] > 0.0 else slope * fg[i]
        return out

    @njit(cache=True)
    def _adam_update_nb(p, g, m, v, lr, beta1, beta2, eps, wd, t):
        fp = p.ravel()
        fg = g.ravel()
        fm = m.ravel()
        fv = v.ravel()
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for i in range(fp.size):
            gi = fg[i] + wd * fp[i]
            fm[i] = beta1 * fm[i] + (1.0 - beta1) * gi
            fv[i] = beta2 * fv[i] + (1.0 - beta2) * gi * gi
            fp[i] -= lr * (fm[i] / c1) / (np.sqrt(fv[i] / c2) + eps)

    @njit(cache=True)
    def _sgd_update_nb(p, g, buf, lr, momentum, wd):
        fp = p.ravel()
        fg = g.ravel()
        fb = buf.ravel()
        for i in range(fp.size):
            gi = fg[i] + wd * fp[i]
            if momentum != 0.0:
                fb[i] = momentum * fb[i] + gi
                fp[i] -= lr * fb[i]
            else:
                fp[i] -= lr * gi

    @njit(cache=True)
    def _simplex_project_nb(v):
        u = np.sort(v)[::-1]
        css = 0.0
        rho = 0
        theta = 0.0
        for j in range(u.size):
            css += u[j]
            t = (1.0 - css) / (j + 1.0)
            if u[j] + t > 0.0:
                rho = j
                theta = t
        out = np.empty_like(v)
        for i in range(v.size):
            w = v[i] + theta
            out[i] = w if w > 0.0 else 0.0
        return out

    softmax_rows = _softmax_rows_nb
    leaky_relu = _leaky_relu_nb
    leaky_relu_grad = _leaky_relu_grad_nb
    adam_update = _adam_update_nb
    sgd_update = _sgd_update_nb
    simplex_project_kernel = _simplex_project_nb
else:
    softmax_rows = _softmax_rows_np
    leaky_relu = _leaky_relu_np
    leaky_relu_grad = _leaky_relu_grad_np
    adam_update = _adam_update_np
    sgd_update = _sgd_update_np
    simplex_project_kernel = _simplex_project_np
