import numpy as np

from skewlab.tensor import Tape, backward, recording

GRADCHECK_H = 1e-5
GRADCHECK_TOL = 1e-4


def numeric_grad(f, x, h=GRADCHECK_H):
    """Central-difference gradient of scalar f at x, coordinate by coordinate."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.ravel(), g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b):
    """Max over coordinates of |a-b| / max(|a|, |b|, 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom))


def tape_grads(build, tensors):
    """Run build() under a fresh tape, backprop, return copies of grads.

    Grads are cleared before and after, so the helper has no side effects.
    """
    for t in tensors:
        t.grad = None
    tape = Tape()
    with recording(tape):
        loss = build()
    backward(loss)
    grads = [None if t.grad is None else np.array(t.grad) for t in tensors]
    for t in tensors:
        t.grad = None
    return grads
