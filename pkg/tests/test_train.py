import importlib

import numpy as np
import pytest

from skewlab.augment import AugmentConfig, strong_augment, weak_augment
from skewlab.backbone import BackboneLossConfig
from skewlab.balance import BalanceConfig
from skewlab.data import (
    ImbalanceProfile,
    generate_gaussian_mixture,
    sample_minibatch,
    split_labeled_unlabeled,
)
from skewlab.model import Model, ModelConfig
from skewlab.seeding import SeedStreams
from skewlab.tensor import Tensor, UsageError
from skewlab.train import (
    AdamState,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    train,
    train_decoupled,
)

train_module = importlib.import_module("skewlab.train")


def _toy_problem(seed=0, d=4, L=4):
    profile = ImbalanceProfile("lt", L, 40, 4.0)
    pool = generate_gaussian_mixture(profile, d, 5.0, seed)
    split = split_labeled_unlabeled(pool, 0.25, seed + 1)
    test_profile = ImbalanceProfile("lt", L, 25, 1.0)
    test = generate_gaussian_mixture(test_profile, d, 5.0, seed + 2)
    return split, test.features, test.labels


def _toy_model_config(d=4, L=4):
    return ModelConfig(input_dim=d, n_classes=L, hidden=(16,), representation_dim=8)


def _configs(mode="end_to_end", **train_kw):
    kw = dict(mode=mode, iterations=30, batch_size=16, eval_every=10)
    kw.update(train_kw)
    return (TrainConfig(**kw), BackboneLossConfig(), BalanceConfig(), AugmentConfig())


def _run(mode="end_to_end", seed=3, **train_kw):
    split, ex, ey = _toy_problem()
    tc, bc, balc, ac = _configs(mode, **train_kw)
    return train(split, ex, ey, _toy_model_config(), tc, bc, balc, ac, seed)


# --- adam step wrapper -----------------------------------------------------

def test_adam_step_matches_reference():
    rng = np.random.default_rng(0)
    p = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
    params = [("w", p)]
    state = AdamState(params)
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    ref_p = p.data.copy()
    m = np.zeros_like(ref_p)
    v = np.zeros_like(ref_p)
    for step in range(1, 5):
        g = rng.standard_normal((3, 2))
        p.grad = g.copy()
        adam_step(params, state, lr, b1, b2, eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref_p = ref_p - lr * (m / (1 - b1 ** step)) / (np.sqrt(v / (1 - b2 ** step)) + eps)
        np.testing.assert_allclose(p.data, ref_p, rtol=1e-12)
    assert state.step_count == 4


def test_adam_step_requires_gradients():
    p = Tensor(np.zeros(3), requires_grad=True)
    state = AdamState([("w", p)])
    with pytest.raises(UsageError, match="w"):
        adam_step([("w", p)], state, 0.01, 0.9, 0.999, 1e-8)


# --- config validation -----------------------------------------------------

def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(mode="nope")
    with pytest.raises(ValueError):
        TrainConfig(eval_every=-1)
    with pytest.raises(ValueError):
        TrainConfig(decoupled_split=1.0)
    with pytest.raises(ValueError):
        TrainConfig(ema_decay=1.0)
    with pytest.raises(ValueError):
        TrainConfig(iterations=0)


# --- smoke + bookkeeping ---------------------------------------------------

def test_smoke_result_shape():
    res = _run()
    assert res.eval_head == "balanced"
    assert [r["iteration"] for r in res.eval_rows] == [10, 20, 30]
    for key in ("l_cls", "l_con", "l_back"):
        assert res.loss_history[key].shape == (30,)
        assert np.isfinite(res.loss_history[key]).all()
    # interval loss columns are means over the preceding stretch
    row = res.eval_rows[1]
    np.testing.assert_allclose(row["l_back"], res.loss_history["l_back"][10:20].mean())
    np.testing.assert_allclose(row["l_cls"], res.loss_history["l_cls"][10:20].mean())
    # best tracking picks the top overall accuracy seen at an eval point
    best_acc = max(r["overall_acc"] for r in res.eval_rows)
    assert res.best_report.overall_accuracy == best_acc
    assert res.best_iteration in [r["iteration"] for r in res.eval_rows]
    conf = np.array(res.unlabeled_confusion)
    assert conf.shape == (4, 4)
    rowsums = conf.sum(axis=1)
    assert np.all((np.abs(rowsums - 1) < 1e-9) | (rowsums == 0))


def test_backbone_only_skips_balance_terms():
    res = _run(mode="backbone_only")
    assert res.eval_head == "backbone"
    assert (res.loss_history["l_cls"] == 0).all()
    assert (res.loss_history["l_con"] == 0).all()
    assert (res.loss_history["l_back"] != 0).any()


def test_head_only_never_touches_backbone_head():
    seed = 11
    res = _run(mode="head_only", seed=seed)
    assert (res.loss_history["l_back"] == 0).all()
    fresh = Model(_toy_model_config(), SeedStreams(seed).get("init"))
    got = dict(res.model.parameters())
    for name, p in fresh.parameters():
        if name.startswith("backbone_head."):
            np.testing.assert_array_equal(got[name].data, p.data)
        elif name.startswith("trunk."):
            assert not np.array_equal(got[name].data, p.data)


def test_consistency_toggle_zeroes_term():
    split, ex, ey = _toy_problem()
    tc, bc, _, ac = _configs()
    res = train(split, ex, ey, _toy_model_config(), tc, bc,
                BalanceConfig(use_consistency=False), ac, 3)
    assert (res.loss_history["l_con"] == 0).all()
    assert (res.loss_history["l_cls"] != 0).any()


# --- determinism -----------------------------------------------------------

def test_same_seed_bitwise_identical():
    a = _run(seed=9)
    b = _run(seed=9)
    for (na, pa), (nb, pb) in zip(a.model.parameters(), b.model.parameters()):
        assert na == nb
        np.testing.assert_array_equal(pa.data, pb.data)
    for (_, pa), (_, pb) in zip(a.ema.model.parameters(), b.ema.model.parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)
    assert a.final_report.to_dict() == b.final_report.to_dict()
    assert a.eval_rows == b.eval_rows
    c = _run(seed=10)
    assert c.final_report.to_dict() != a.final_report.to_dict()


def test_modes_share_data_and_augment_streams(monkeypatch):
    """Whatever the mode, iteration t sees the same minibatch and the same
    four augmented views -- the pairing guarantee behind the ablation table."""
    logs = {}

    def capture(mode):
        log = {"batch": [], "weak": [], "strong": []}

        def wrap_sample(split, n, rng):
            mb = sample_minibatch(split, n, rng)
            log["batch"].append((mb.y_labeled.copy(), mb.x_unlabeled.copy()))
            return mb

        def wrap_weak(x, cfg, rng):
            out = weak_augment(x, cfg, rng)
            log["weak"].append(out.copy())
            return out

        def wrap_strong(x, cfg, rng):
            out = strong_augment(x, cfg, rng)
            log["strong"].append(out.copy())
            return out

        monkeypatch.setattr(train_module, "sample_minibatch", wrap_sample)
        monkeypatch.setattr(train_module, "weak_augment", wrap_weak)
        monkeypatch.setattr(train_module, "strong_augment", wrap_strong)
        _run(mode=mode, seed=5, iterations=3, eval_every=0)
        logs[mode] = log

    for mode in ("end_to_end", "backbone_only", "head_only", "decoupled"):
        capture(mode)

    ref = logs["end_to_end"]
    assert len(ref["weak"]) == 6 and len(ref["strong"]) == 6  # 2 + 2 per iteration
    for mode in ("backbone_only", "head_only", "decoupled"):
        other = logs[mode]
        for (ya, ua), (yb, ub) in zip(ref["batch"], other["batch"]):
            np.testing.assert_array_equal(ya, yb)
            np.testing.assert_array_equal(ua, ub)
        for va, vb in zip(ref["weak"], other["weak"]):
            np.testing.assert_array_equal(va, vb)
        for va, vb in zip(ref["strong"], other["strong"]):
            np.testing.assert_array_equal(va, vb)


# --- decoupled mode --------------------------------------------------------

def test_decoupled_trunk_frozen_after_boundary():
    split, ex, ey = _toy_problem()
    mc = _toy_model_config()
    _, bc, balc, ac = _configs()
    # phase 1 of decoupled == backbone_only with the same seed, so the trunk
    # at the boundary equals the trunk of a backbone_only run of that length
    dec = train(split, ex, ey, mc,
                TrainConfig(mode="decoupled", iterations=8, batch_size=16,
                            eval_every=0, decoupled_split=0.5),
                bc, balc, ac, 21)
    ref = train(split, ex, ey, mc,
                TrainConfig(mode="backbone_only", iterations=4, batch_size=16,
                            eval_every=0),
                bc, balc, ac, 21)
    dec_params = dict(dec.model.parameters())
    for name, p in ref.model.parameters():
        if name.startswith("trunk."):
            np.testing.assert_array_equal(dec_params[name].data, p.data)
    # while the balanced head kept training in phase 2
    for name, p in ref.model.parameters():
        if name.startswith("balanced_head."):
            assert not np.array_equal(dec_params[name].data, p.data)
    assert dec.eval_head == "balanced"


def test_train_decoupled_wrapper_forces_mode():
    split, ex, ey = _toy_problem()
    tc, bc, balc, ac = _configs(mode="end_to_end", iterations=8)
    res = train_decoupled(split, ex, ey, _toy_model_config(), tc, bc, balc, ac, 4)
    # first half has no balance losses, second half no backbone loss
    assert (res.loss_history["l_cls"][:4] == 0).all()
    assert (res.loss_history["l_cls"][4:] != 0).any()
    assert (res.loss_history["l_back"][4:] == 0).all()


# --- divergence ------------------------------------------------------------

@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts_with_iteration():
    split, ex, ey = _toy_problem()
    tc = TrainConfig(mode="end_to_end", iterations=10, batch_size=16,
                     learning_rate=1e120, eval_every=0)
    with pytest.raises(TrainingDiverged, match=r"iteration \d+"):
        train(split, ex, ey, _toy_model_config(), tc, BackboneLossConfig(),
              BalanceConfig(), AugmentConfig(), 2)
