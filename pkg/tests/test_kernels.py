import numpy as np
import pytest

from skewlab import kernels


def _rand_probs(rng, n, k):
    p = rng.random((n, k)) + 1e-3
    return p / p.sum(axis=1, keepdims=True)


def all_kernel_names():
    return sorted(kernels.NUMPY_KERNELS)


@pytest.mark.skipif(kernels.NUMBA_KERNELS is None, reason="numba path disabled")
@pytest.mark.parametrize("name", all_kernel_names())
def test_numba_and_numpy_paths_agree(name):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((13, 9))
    g = rng.standard_normal((13, 9))
    p = _rand_probs(rng, 13, 9)
    t = _rand_probs(rng, 13, 9)
    np_k = kernels.NUMPY_KERNELS[name]
    nb_k = kernels.NUMBA_KERNELS[name]
    if name in ("adam_update", "ema_update"):
        a1 = rng.standard_normal(40)
        a2 = a1.copy()
        grad = rng.standard_normal(40)
        if name == "adam_update":
            m1, v1 = np.zeros(40), np.zeros(40)
            m2, v2 = np.zeros(40), np.zeros(40)
            for step in (1, 2, 3):
                np_k(a1, grad, m1, v1, 0.01, 0.9, 0.999, 1e-8, step)
                nb_k(a2, grad, m2, v2, 0.01, 0.9, 0.999, 1e-8, step)
            np.testing.assert_allclose(a1, a2, rtol=1e-14, atol=0)
            np.testing.assert_allclose(m1, m2, rtol=1e-14, atol=0)
            np.testing.assert_allclose(v1, v2, rtol=1e-14, atol=0)
        else:
            s1, s2 = a1, a2
            np_k(s1, grad, 0.999)
            nb_k(s2, grad, 0.999)
            np.testing.assert_allclose(s1, s2, rtol=1e-14, atol=0)
        return
    args = {
        "softmax_rows": (x,),
        "softmax_vjp": (p, g),
        "ce_soft_forward": (p, t, 1e-12),
        "ce_soft_vjp": (p, t, g[:, 0].copy(), 1e-12),
        "relu_forward": (x,),
        "relu_vjp": (x, g),
    }[name]
    np.testing.assert_allclose(np_k(*args), nb_k(*args), rtol=1e-13, atol=1e-300)


def test_softmax_rows_sum_to_one_and_are_stable():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 7)) * 3
    p = kernels.softmax_rows(x)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=1e-12)
    # huge logits must not overflow thanks to max subtraction
    big = np.array([[1000.0, 1000.0, 500.0]])
    pb = kernels.softmax_rows(big)
    assert np.all(np.isfinite(pb))
    np.testing.assert_allclose(pb[0, 0], 0.5, rtol=1e-12)


def test_ce_clamp_keeps_loss_finite():
    p = np.array([[1.0, 0.0]])
    t = np.array([[0.0, 1.0]])
    out = kernels.ce_soft_forward(p, t, 1e-12)
    assert np.isfinite(out[0])
    np.testing.assert_allclose(out[0], -np.log(1e-12))


def test_relu_zero_input_gets_zero_grad():
    x = np.array([[0.0, -1.0, 2.0]])
    g = np.ones_like(x)
    out = kernels.relu_vjp(x, g)
    np.testing.assert_array_equal(out, [[0.0, 0.0, 1.0]])


def test_adam_update_matches_reference_formula():
    rng = np.random.default_rng(3)
    p = rng.standard_normal(10)
    g = rng.standard_normal(10)
    m = np.zeros(10)
    v = np.zeros(10)
    p_ref, m_ref, v_ref = p.copy(), m.copy(), v.copy()
    lr, b1, b2, eps = 0.002, 0.9, 0.999, 1e-8
    for step in (1, 2):
        kernels.adam_update(p, g, m, v, lr, b1, b2, eps, step)
        m_ref = b1 * m_ref + (1 - b1) * g
        v_ref = b2 * v_ref + (1 - b2) * g * g
        mhat = m_ref / (1 - b1 ** step)
        vhat = v_ref / (1 - b2 ** step)
        p_ref = p_ref - lr * mhat / (np.sqrt(vhat) + eps)
    np.testing.assert_allclose(p, p_ref, rtol=1e-12)
    np.testing.assert_allclose(m, m_ref, rtol=1e-12)
    np.testing.assert_allclose(v, v_ref, rtol=1e-12)


def test_ema_update_formula():
    s = np.array([1.0, 2.0])
    p = np.array([3.0, 4.0])
    kernels.ema_update(s, p, 0.9)
    np.testing.assert_allclose(s, [0.9 * 1 + 0.1 * 3, 0.9 * 2 + 0.1 * 4], rtol=1e-15)


def test_env_flag_selects_numpy_backend(tmp_path):
    import subprocess
    import sys
    code = "from skewlab import kernels; print(kernels.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "SKEWLAB_NO_NUMBA": "1"},
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
