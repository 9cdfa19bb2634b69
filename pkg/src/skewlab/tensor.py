"""Reverse-mode autodiff over numpy float64 arrays.

Define-by-run: while a Tape is active (see ``recording``), every op appends
(output, pullbacks) to it. ``backward`` replays the tape in reverse, seeds
d(loss)/d(loss)=1 and accumulates vector-Jacobian products into ``.grad`` of
every tensor that requires grad. Gradients accumulate until explicitly
zeroed; the tape is cleared by ``backward``.

Conventions baked in everywhere:
* float64 only, no implicit broadcasting beyond what each op documents
* relu uses subgradient 0 at exactly 0
* cross_entropy_soft clamps probabilities at CE_EPS inside the log
* softmax subtracts the rowwise max before exponentiation
"""

import contextlib

import numpy as np

from . import kernels

CE_EPS = 1e-12
_ROWSUM_TOL = 1e-6


class UsageError(RuntimeError):
    """Raised for incorrect use of the autodiff API (not bad data)."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def detach(self):
        """Copy of the value, cut out of any graph."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of ops; replayed in reverse by backward()."""

    def __init__(self):
        self._records = []

    def __len__(self):
        return len(self._records)

    def record(self, out, pulls):
        self._records.append((out, pulls))
        out._tape = self

    def clear(self):
        for out, _ in self._records:
            out._tape = None
        self._records.clear()


_ACTIVE_TAPE = None


@contextlib.contextmanager
def recording(tape):
    """Make ``tape`` the active tape within the block."""
    global _ACTIVE_TAPE
    prev = _ACTIVE_TAPE
    _ACTIVE_TAPE = tape
    try:
        yield tape
    finally:
        _ACTIVE_TAPE = prev


@contextlib.contextmanager
def no_grad():
    """Suspend recording within the block (e.g. pseudo-label forwards)."""
    global _ACTIVE_TAPE
    prev = _ACTIVE_TAPE
    _ACTIVE_TAPE = None
    try:
        yield
    finally:
        _ACTIVE_TAPE = prev


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs(t):
    return t.requires_grad


def _finish(out_data, pulls):
    """Wrap op output; record on the active tape when any input needs grad."""
    out = Tensor(out_data)
    live = [(t, fn) for t, fn in pulls if _needs(t)]
    if live and _ACTIVE_TAPE is not None:
        out.requires_grad = True
        _ACTIVE_TAPE.record(out, live)
    return out


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def affine(x, w, b):
    """x @ w + b for x:(B,n), w:(n,m), b:(m,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    xd, wd, bd = x.data, w.data, b.data
    if xd.ndim != 2 or wd.ndim != 2 or bd.ndim != 1:
        raise UsageError(
            f"affine expects 2-D x, 2-D w, 1-D b; got {xd.shape}, {wd.shape}, {bd.shape}"
        )
    if xd.shape[1] != wd.shape[0] or wd.shape[1] != bd.shape[0]:
        raise UsageError(
            f"affine shape mismatch: x {xd.shape} @ w {wd.shape} + b {bd.shape}"
        )
    out = xd @ wd + bd
    return _finish(out, [
        (x, lambda g: g @ wd.T),
        (w, lambda g: xd.T @ g),
        (b, lambda g: g.sum(axis=0)),
    ])


def relu(x):
    x = as_tensor(x)
    xd = x.data
    if xd.ndim != 2:
        raise UsageError(f"relu expects a 2-D array, got shape {xd.shape}")
    out = kernels.relu_forward(xd)
    return _finish(out, [(x, lambda g: kernels.relu_vjp(xd, g))])


def softmax(x):
    """Rowwise stable softmax for x:(B,K)."""
    x = as_tensor(x)
    xd = x.data
    if xd.ndim != 2:
        raise UsageError(f"softmax expects a 2-D array, got shape {xd.shape}")
    p = kernels.softmax_rows(xd)
    return _finish(p, [(x, lambda g: kernels.softmax_vjp(p, g))])


def cross_entropy_soft(pred, target, validate=True):
    """Per-example cross entropy -sum(target * log(pred)) -> shape (B,).

    Both arguments are (B,K) rows on the simplex; rows are validated to sum
    to 1 within 1e-6 unless ``validate=False`` (finite-difference tests need
    to poke probabilities off the simplex). log is clamped at CE_EPS.
    """
    pred, target = as_tensor(pred), as_tensor(target)
    pd, td = pred.data, target.data
    if pd.shape != td.shape or pd.ndim != 2:
        raise UsageError(
            f"cross_entropy_soft expects matching 2-D shapes, got {pd.shape} and {td.shape}"
        )
    if validate:
        for name, arr in (("pred", pd), ("target", td)):
            bad = np.abs(arr.sum(axis=1) - 1.0) > _ROWSUM_TOL
            if bad.any():
                row = int(np.argmax(bad))
                raise UsageError(
                    f"cross_entropy_soft: {name} row {row} sums to "
                    f"{arr[row].sum():.9f}, expected 1 within {_ROWSUM_TOL}"
                )
    out = kernels.ce_soft_forward(pd, td, CE_EPS)
    return _finish(out, [
        (pred, lambda g: kernels.ce_soft_vjp(pd, td, g, CE_EPS)),
        (target, lambda g: -np.log(np.maximum(pd, CE_EPS)) * g[:, None]),
    ])


def mul(a, b):
    """Elementwise product; shapes must match exactly."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.shape != bd.shape:
        raise UsageError(f"mul shape mismatch: {ad.shape} vs {bd.shape}")
    return _finish(ad * bd, [
        (a, lambda g: g * bd),
        (b, lambda g: g * ad),
    ])


def add(a, b):
    """Elementwise sum; shapes must match exactly."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise UsageError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    return _finish(a.data + b.data, [
        (a, lambda g: g),
        (b, lambda g: g),
    ])


def scale(x, c):
    """Multiply by a python constant."""
    x = as_tensor(x)
    c = float(c)
    return _finish(x.data * c, [(x, lambda g: g * c)])


def sum_all(x):
    """Sum of all entries -> scalar tensor (shape ())."""
    x = as_tensor(x)
    xd = x.data
    return _finish(np.asarray(xd.sum()), [(x, lambda g: np.full(xd.shape, float(g)))])


def backward(loss):
    """Reverse sweep from a recorded scalar; clears the tape afterwards."""
    if not isinstance(loss, Tensor):
        raise UsageError("backward expects a Tensor")
    if loss.data.shape != ():
        raise UsageError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    tape = loss._tape
    if tape is None:
        raise UsageError("backward on a tensor that is not recorded on a tape")
    loss.grad = np.ones(())
    for out, pulls in reversed(tape._records):
        g = out.grad
        if g is None:
            continue
        for inp, pull in pulls:
            contrib = pull(g)
            if inp.grad is None:
                inp.grad = contrib
            else:
                inp.grad = inp.grad + contrib
    tape.clear()
