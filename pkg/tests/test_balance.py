import numpy as np
import pytest

from conftest import tape_grads
from skewlab.balance import (
    AnnealSchedule,
    BalanceConfig,
    BalanceError,
    MaskSampler,
    balanced_classification_loss_from_logits,
    balanced_consistency_loss_from_logits,
    classification_weights,
    consistency_gates,
    soft_pseudo_labels,
    total_loss,
)
from skewlab.tensor import Tensor

Z99 = 2.5758293035489004  # two-sided 99% normal quantile


def _softmax_np(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _ce_np(p, t):
    return -(t * np.log(np.maximum(p, 1e-12))).sum(axis=1)


# --- mask sampler ----------------------------------------------------------

def test_mask_params_are_min_over_count():
    s = MaskSampler([100, 10, 1], np.random.default_rng(0))
    np.testing.assert_allclose(s.params, [0.01, 0.1, 1.0])
    np.testing.assert_allclose(s.param_for([3, 1, 2]), [1.0, 0.01, 0.1])


@pytest.mark.parametrize("p", [1.0, 0.1, 0.01])
def test_mask_rate_within_99ci(p):
    n = 100_000
    counts = np.array([100, round(100 / p)])
    s = MaskSampler(counts, np.random.default_rng(12345))
    y = np.full(n, 2)  # class with parameter p
    draws = s.bernoulli(s.param_for(y))
    assert set(np.unique(draws)) <= {0.0, 1.0}
    rate = draws.mean()
    half = Z99 * np.sqrt(p * (1 - p) / n)
    assert abs(rate - p) <= max(half, 1e-12), f"rate {rate} vs {p} +/- {half}"


def test_smallest_class_always_kept():
    s = MaskSampler([50, 5], np.random.default_rng(1))
    y = np.full(1000, 2)
    np.testing.assert_array_equal(s.bernoulli(s.param_for(y)), 1.0)


def test_gated_sampling_consumes_draws_only_for_gated():
    counts = [10, 5]
    gate = np.array([True, False, True, False, True])
    classes = np.array([1, 1, 2, 2, 1])
    s1 = MaskSampler(counts, np.random.default_rng(7))
    out = s1.gated_bernoulli(s1.param_for(classes), gate)
    assert (out[~gate] == 0).all()
    # equivalent loop: one uniform per gated example, ascending order
    ref_rng = np.random.default_rng(7)
    p = np.array(counts, float).min() / np.array(counts, float)
    expect = np.zeros(5)
    for b in range(5):
        if gate[b]:
            expect[b] = 1.0 if ref_rng.random() < p[classes[b] - 1] else 0.0
    np.testing.assert_array_equal(out, expect)
    # and the stream advanced by exactly gate.sum() draws
    s2 = MaskSampler(counts, np.random.default_rng(7))
    s2.rng.random(int(gate.sum()))
    assert s1.rng.integers(1 << 30) == s2.rng.integers(1 << 30)


def test_sampler_validation():
    with pytest.raises(BalanceError):
        MaskSampler([10], np.random.default_rng(0))
    with pytest.raises(BalanceError):
        MaskSampler([10, 0], np.random.default_rng(0))


# --- annealing -------------------------------------------------------------

def test_anneal_endpoints_exact():
    sched = AnnealSchedule(20000)
    base = 0.3
    assert sched.annealed_param(base, 0) == 1.0
    assert sched.annealed_param(base, 20000) == base  # exact, no fp round trip
    assert sched.annealed_param(base, 30000) == base  # clamped past the end
    assert sched.annealed_param(base, -5) == 1.0


def test_anneal_linear_midpoints():
    sched = AnnealSchedule(100)
    base = 0.2
    np.testing.assert_allclose(sched.annealed_param(base, 50), 1 - 0.5 * 0.8)
    np.testing.assert_allclose(sched.annealed_param(base, 25), 1 - 0.25 * 0.8)
    # array form
    bases = np.array([0.5, 1.0])
    out = sched.annealed_param(bases, 50)
    np.testing.assert_allclose(out, [0.75, 1.0])


def test_anneal_monotone_nonincreasing():
    sched = AnnealSchedule(1000)
    vals = [sched.annealed_param(0.05, t) for t in range(0, 1001, 50)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


# --- soft pseudo-labels and gates -----------------------------------------

def test_soft_pseudo_labels_and_threshold():
    logits = np.array([[10.0, 0.0], [0.3, 0.0]])
    cfg = BalanceConfig(tau=0.9)
    q, q_hat, conf = soft_pseudo_labels(logits, cfg)
    np.testing.assert_allclose(q, _softmax_np(logits))
    np.testing.assert_array_equal(q_hat, [1, 1])
    np.testing.assert_array_equal(conf, [True, False])
    cfg_nt = BalanceConfig(tau=0.9, use_threshold=False)
    _, _, conf_nt = soft_pseudo_labels(logits, cfg_nt)
    assert conf_nt.all()


def test_gates_respect_toggles():
    counts = [100, 1]
    sched = AnnealSchedule(10)
    q_hat = np.array([1, 2, 1, 2])
    conf = np.array([True, True, False, True])
    sampler = MaskSampler(counts, np.random.default_rng(0))

    # masks off: gates are the plain confidence indicator
    g = consistency_gates(q_hat, conf, sampler, sched,
                          BalanceConfig(use_con_mask=False), t=10)
    np.testing.assert_array_equal(g, conf.astype(float))

    # reweighting: deterministic annealed params times the indicator
    g = consistency_gates(q_hat, conf, sampler, sched,
                          BalanceConfig(reweight_instead_of_mask=True), t=10)
    np.testing.assert_allclose(g, conf * np.array([0.01, 1.0, 0.01, 1.0]))

    # annealing off: base parameter used at any t
    g = consistency_gates(q_hat, conf, sampler, sched,
                          BalanceConfig(use_annealing=False,
                                        reweight_instead_of_mask=True), t=0)
    np.testing.assert_allclose(g, conf * np.array([0.01, 1.0, 0.01, 1.0]))

    # annealing on at t=0: every gated example passes (param 1)
    g = consistency_gates(q_hat, conf, sampler, sched, BalanceConfig(), t=0)
    np.testing.assert_array_equal(g, conf.astype(float))


def test_classification_weights_toggles():
    counts = [10, 1]
    sched = AnnealSchedule(100)
    sampler = MaskSampler(counts, np.random.default_rng(3))
    y = np.array([1, 2, 1, 2])

    w = classification_weights(y, sampler, sched, BalanceConfig(use_cls_mask=False), 50)
    np.testing.assert_array_equal(w, 1.0)

    w = classification_weights(
        y, sampler, sched, BalanceConfig(reweight_instead_of_mask=True), 50
    )
    np.testing.assert_allclose(w, [0.1, 1.0, 0.1, 1.0])

    # cls-mask annealing is opt-in: by default t has no effect
    w0 = classification_weights(
        y, sampler, sched, BalanceConfig(reweight_instead_of_mask=True), 0
    )
    np.testing.assert_allclose(w0, [0.1, 1.0, 0.1, 1.0])
    w0 = classification_weights(
        y, sampler, sched,
        BalanceConfig(reweight_instead_of_mask=True, anneal_cls_mask=True), 0,
    )
    np.testing.assert_allclose(w0, [1.0, 1.0, 1.0, 1.0])

    # stochastic path: class 2 (parameter 1) always kept
    w = classification_weights(y, sampler, sched, BalanceConfig(), 0)
    assert w[1] == 1.0 and w[3] == 1.0
    assert set(np.unique(w)) <= {0.0, 1.0}


# --- loss oracles ----------------------------------------------------------

def test_classification_loss_matches_loop_oracle():
    rng = np.random.default_rng(0)
    B, L = 10, 4
    for _ in range(10):
        logits = rng.standard_normal((B, L)) * 2
        y = rng.integers(1, L + 1, B)
        w = (rng.random(B) < 0.5).astype(float)
        loss = balanced_classification_loss_from_logits(Tensor(logits), y, w, L)
        expect = 0.0
        for b in range(B):
            p = _softmax_np(logits[b:b + 1])[0]
            onehot = np.zeros(L)
            onehot[y[b] - 1] = 1.0
            expect += w[b] * _ce_np(p[None], onehot[None])[0]
        assert abs(loss.item() - expect / B) < 1e-10


def test_consistency_loss_matches_loop_oracle():
    rng = np.random.default_rng(1)
    B, L = 8, 5
    cfg = BalanceConfig()
    for _ in range(10):
        s1 = rng.standard_normal((B, L))
        s2 = rng.standard_normal((B, L))
        q = _softmax_np(rng.standard_normal((B, L)) * 3)
        q_hat = q.argmax(axis=1) + 1
        gates = (rng.random(B) < 0.6).astype(float)
        loss = balanced_consistency_loss_from_logits(
            Tensor(s1), Tensor(s2), q, q_hat, gates, cfg, L
        )
        expect = 0.0
        for b in range(B):
            for sv in (s1, s2):
                p = _softmax_np(sv[b:b + 1])[0]
                expect += gates[b] * _ce_np(p[None], q[b:b + 1])[0]
        assert abs(loss.item() - expect / B) < 1e-10


def test_hard_label_variant_uses_onehot_targets():
    rng = np.random.default_rng(2)
    B, L = 6, 3
    s1 = rng.standard_normal((B, L))
    s2 = rng.standard_normal((B, L))
    q = _softmax_np(rng.standard_normal((B, L)))
    q_hat = q.argmax(axis=1) + 1
    gates = np.ones(B)
    cfg = BalanceConfig(use_soft_labels=False)
    loss = balanced_consistency_loss_from_logits(
        Tensor(s1), Tensor(s2), q, q_hat, gates, cfg, L
    )
    expect = 0.0
    for b in range(B):
        onehot = np.zeros(L)
        onehot[q_hat[b] - 1] = 1.0
        for sv in (s1, s2):
            p = _softmax_np(sv[b:b + 1])[0]
            expect += _ce_np(p[None], onehot[None])[0]
    assert abs(loss.item() - expect / B) < 1e-10


def test_single_confident_example_counts_twice():
    """One confident example with mask 1 and identical strong views: the
    loss is exactly (2/B) * H(softmax(view), q)."""
    rng = np.random.default_rng(3)
    B, L = 4, 3
    s = rng.standard_normal((B, L))
    q = _softmax_np(rng.standard_normal((B, L)))
    q_hat = q.argmax(axis=1) + 1
    gates = np.array([0.0, 1.0, 0.0, 0.0])
    loss = balanced_consistency_loss_from_logits(
        Tensor(s), Tensor(s), q, q_hat, gates, BalanceConfig(), L
    )
    h = _ce_np(_softmax_np(s[1:2]), q[1:2])[0]
    assert abs(loss.item() - 2.0 * h / B) < 1e-12


def test_pseudo_label_targets_get_no_gradient():
    rng = np.random.default_rng(4)
    B, L = 5, 4
    s1 = Tensor(rng.standard_normal((B, L)), requires_grad=True)
    s2 = Tensor(rng.standard_normal((B, L)), requires_grad=True)
    q_src = Tensor(_softmax_np(rng.standard_normal((B, L))), requires_grad=True)
    q_hat = q_src.data.argmax(axis=1) + 1
    gates = np.ones(B)
    g1, g2, gq = tape_grads(
        lambda: balanced_consistency_loss_from_logits(
            s1, s2, q_src.data, q_hat, gates, BalanceConfig(), L
        ),
        [s1, s2, q_src],
    )
    assert g1 is not None and g2 is not None
    assert gq is None


def test_total_loss_sums_terms():
    a, b, c = Tensor(np.float64(1.5)), Tensor(np.float64(2.0)), Tensor(np.float64(0.25))
    assert total_loss(a, b, c).item() == 3.75
    assert total_loss(a, None, c).item() == 1.75
    with pytest.raises(BalanceError):
        total_loss(None, None, None)


def test_config_validation():
    with pytest.raises(BalanceError):
        BalanceConfig(tau=0.0)
    with pytest.raises(BalanceError):
        BalanceConfig(tau=1.5)
