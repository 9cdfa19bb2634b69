"""Hot numeric kernels with two interchangeable implementations.

Each kernel exists twice: a vectorized numpy version and a loop version
compiled with numba @njit. The active set is chosen once at import time:

* ``SKEWLAB_NO_NUMBA=1`` (or any non-empty value other than ``0``) forces the
  numpy path.
* ``NUMBA_DISABLE_JIT`` also forces the numpy path -- running the loop
  kernels as interpreted Python would be far slower than numpy.
* If numba is missing or fails to import, the numpy path is used silently.

Matrix products are deliberately *not* duplicated here: ``np.dot`` dispatches
to BLAS and both paths share it. Only elementwise / rowwise kernels and the
optimizer updates are worth fusing.

All kernels expect C-contiguous float64 arrays. ``adam_update`` and
``ema_update`` mutate their first arguments in place.
"""

import os

import numpy as np


# ---------------------------------------------------------------------------
# numpy implementations (vectorized)
# ---------------------------------------------------------------------------

def _softmax_rows_np(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_vjp_np(p, g):
    # d/dx of softmax applied rowwise: p * (g - sum(g*p))
    dot = (g * p).sum(axis=1, keepdims=True)
    return p * (g - dot)


def _ce_soft_forward_np(p, t, eps):
    return -(t * np.log(np.maximum(p, eps))).sum(axis=1)


def _ce_soft_vjp_np(p, t, g, eps):
    # derivative of -sum t*log(max(p, eps)); zero where the clamp is active
    d = np.where(p > eps, -t / np.maximum(p, eps), 0.0)
    return d * g[:, None]


def _relu_forward_np(x):
    return np.maximum(x, 0.0)


def _relu_vjp_np(x, g):
    # subgradient 0 at exactly 0
    return np.where(x > 0.0, g, 0.0)


def _adam_update_np(p, g, m, v, lr, beta1, beta2, eps, step):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** step)
    vhat = v / (1.0 - beta2 ** step)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def _ema_update_np(shadow, p, decay):
    shadow *= decay
    shadow += (1.0 - decay) * p


NUMPY_KERNELS = {
    "softmax_rows": _softmax_rows_np,
    "softmax_vjp": _softmax_vjp_np,
    "ce_soft_forward": _ce_soft_forward_np,
    "ce_soft_vjp": _ce_soft_vjp_np,
    "relu_forward": _relu_forward_np,
    "relu_vjp": _relu_vjp_np,
    "adam_update": _adam_update_np,
    "ema_update": _ema_update_np,
}


# ---------------------------------------------------------------------------
# loop implementations (compiled with numba)
# ---------------------------------------------------------------------------

def _softmax_rows_loop(x):
    n, k = x.shape
    out = np.empty((n, k))
    for i in range(n):
        m = x[i, 0]
        for j in range(1, k):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(k):
            e = np.exp(x[i, j] - m)
            out[i, j] = e
            s += e
        for j in range(k):
            out[i, j] = out[i, j] / s
    return out


def _softmax_vjp_loop(p, g):
    n, k = p.shape
    out = np.empty((n, k))
    for i in range(n):
        dot = 0.0
        for j in range(k):
            dot += g[i, j] * p[i, j]
        for j in range(k):
            out[i, j] = p[i, j] * (g[i, j] - dot)
    return out


def _ce_soft_forward_loop(p, t, eps):
    n, k = p.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(k):
            pj = p[i, j]
            if pj < eps:
                pj = eps
            s += t[i, j] * np.log(pj)
        out[i] = -s
    return out


def _ce_soft_vjp_loop(p, t, g, eps):
    n, k = p.shape
    out = np.empty((n, k))
    for i in range(n):
        gi = g[i]
        for j in range(k):
            if p[i, j] > eps:
                out[i, j] = -t[i, j] / p[i, j] * gi
            else:
                out[i, j] = 0.0
    return out


def _relu_forward_loop(x):
    n, k = x.shape
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            v = x[i, j]
            out[i, j] = v if v > 0.0 else 0.0
    return out


def _relu_vjp_loop(x, g):
    n, k = x.shape
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            out[i, j] = g[i, j] if x[i, j] > 0.0 else 0.0
    return out


def _adam_update_loop(p, g, m, v, lr, beta1, beta2, eps, step):
    mc = 1.0 - beta1 ** step
    vc = 1.0 - beta2 ** step
    for i in range(p.shape[0]):
        mi = beta1 * m[i] + (1.0 - beta1) * g[i]
        vi = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / mc) / (np.sqrt(vi / vc) + eps)


def _ema_update_loop(shadow, p, decay):
    for i in range(shadow.shape[0]):
        shadow[i] = decay * shadow[i] + (1.0 - decay) * p[i]


_LOOP_IMPLS = {
    "softmax_rows": _softmax_rows_loop,
    "softmax_vjp": _softmax_vjp_loop,
    "ce_soft_forward": _ce_soft_forward_loop,
    "ce_soft_vjp": _ce_soft_vjp_loop,
    "relu_forward": _relu_forward_loop,
    "relu_vjp": _relu_vjp_loop,
    "adam_update": _adam_update_loop,
    "ema_update": _ema_update_loop,
}


def _flag_set(name):
    return os.environ.get(name, "").strip() not in ("", "0")


def numba_requested():
    return not (_flag_set("SKEWLAB_NO_NUMBA") or _flag_set("NUMBA_DISABLE_JIT"))


def _build_numba_kernels():
    from numba import njit

    return {name: njit(cache=True)(fn) for name, fn in _LOOP_IMPLS.items()}


NUMBA_KERNELS = None
if numba_requested():
    try:
        NUMBA_KERNELS = _build_numba_kernels()
    except ImportError:
        NUMBA_KERNELS = None

if NUMBA_KERNELS is not None:
    BACKEND = "numba"
    _ACTIVE = NUMBA_KERNELS
else:
    BACKEND = "numpy"
    _ACTIVE = NUMPY_KERNELS

softmax_rows = _ACTIVE["softmax_rows"]
softmax_vjp = _ACTIVE["softmax_vjp"]
ce_soft_forward = _ACTIVE["ce_soft_forward"]
ce_soft_vjp = _ACTIVE["ce_soft_vjp"]
relu_forward = _ACTIVE["relu_forward"]
relu_vjp = _ACTIVE["relu_vjp"]
adam_update = _ACTIVE["adam_update"]
ema_update = _ACTIVE["ema_update"]
