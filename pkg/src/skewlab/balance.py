"""Rebalancing losses for the auxiliary balanced head.

Two ingredients, both driven by 0/1 Bernoulli masks whose success rate is
N_min / N_class (smallest labeled class count over the example's class
count), so every class contributes the same expected number of examples:

* a masked CE on weak views of labeled data;
* a masked consistency CE on two strong views of unlabeled data against the
  soft prediction on the weak view, gated by a confidence threshold.

Pseudo-labels are soft, computed without grad, and never backpropagated
through. For unlabeled examples the mask parameter is annealed from 1 down
to N_min / N_class linearly over training, and masks are drawn only for
examples that pass the confidence gate.

Every toggle the ablation suite needs lives in BalanceConfig.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import one_hot
from .tensor import Tensor, add, cross_entropy_soft, mul, scale, softmax, sum_all
from .augment import strong_augment, weak_augment


class BalanceError(ValueError):
    pass


class MaskSampler:
    """Bernoulli rebalancing masks with per-class success rate N_min/N_k."""

    def __init__(self, class_counts, rng):
        counts = np.asarray(class_counts, dtype=np.float64)
        if counts.ndim != 1 or counts.size < 2:
            raise BalanceError(f"need a 1-D vector of >= 2 class counts, got {counts.shape}")
        if (counts < 1).any():
            raise BalanceError(f"class counts must be >= 1, got {counts}")
        self.params = counts.min() / counts
        self.rng = rng

    def param_for(self, classes):
        """Mask parameter per example for 1-based class labels."""
        return self.params[np.asarray(classes) - 1]

    def bernoulli(self, p):
        return (self.rng.random(p.shape[0]) < p).astype(np.float64)

    def gated_bernoulli(self, p, gate):
        """Draw only where ``gate`` is true; zeros elsewhere.

        Consumes exactly gate.sum() draws, in ascending example order.
        """
        out = np.zeros(p.shape[0])
        idx = np.flatnonzero(gate)
        if idx.size:
            out[idx] = (self.rng.random(idx.size) < p[idx]).astype(np.float64)
        return out


@dataclass(frozen=True)
class AnnealSchedule:
    """Linear interpolation of the mask parameter from 1 to its base value."""
    total_iterations: int

    def fraction(self, t):
        return min(max(t / self.total_iterations, 0.0), 1.0)

    def annealed_param(self, base, t):
        """1 at t<=0, the base parameter at t>=total, linear in between.

        Endpoints are returned exactly (no floating-point round trip).
        """
        f = self.fraction(t)
        if f <= 0.0:
            return np.ones_like(base) if isinstance(base, np.ndarray) else 1.0
        if f >= 1.0:
            return base
        return 1.0 - f * (1.0 - base)


@dataclass(frozen=True)
class BalanceConfig:
    tau: float = 0.95
    use_cls_mask: bool = True
    use_con_mask: bool = True
    use_threshold: bool = True
    use_soft_labels: bool = True
    use_annealing: bool = True
    use_consistency: bool = True
    anneal_cls_mask: bool = False
    reweight_instead_of_mask: bool = False

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise BalanceError(f"tau must be in (0, 1], got {self.tau}")


def classification_weights(y, sampler, schedule, cfg, t):
    """Per-example weights for the labeled balanced CE.

    Stochastic 0/1 masks by default; deterministic expected weights when
    reweight_instead_of_mask; all ones when the mask is toggled off (no rng
    draws happen in that case).
    """
    B = np.asarray(y).shape[0]
    if not cfg.use_cls_mask:
        return np.ones(B)
    p = sampler.param_for(y)
    if cfg.anneal_cls_mask and cfg.use_annealing:
        p = schedule.annealed_param(p, t)
    if cfg.reweight_instead_of_mask:
        return np.array(p, dtype=np.float64, copy=True)
    return sampler.bernoulli(p)


def balanced_classification_loss_from_logits(bal_x, y, weights, n_classes):
    """(1/B) sum_b w_b * H(softmax(logits_b), onehot(y_b))."""
    B = bal_x.shape[0]
    ce = cross_entropy_soft(softmax(bal_x), one_hot(y, n_classes))
    return scale(sum_all(mul(ce, Tensor(weights))), 1.0 / B)


def soft_pseudo_labels(bal_weak_u_logits, cfg):
    """-> (q, q_hat, confident): soft labels from the weak view, no grad.

    q is the softmax row, q_hat its 1-based argmax, confident the threshold
    indicator (all true when use_threshold is off).
    """
    q = kernels.softmax_rows(np.ascontiguousarray(bal_weak_u_logits))
    q_hat = q.argmax(axis=1).astype(np.int64) + 1
    if cfg.use_threshold:
        confident = q.max(axis=1) >= cfg.tau
    else:
        confident = np.ones(q.shape[0], dtype=bool)
    return q, q_hat, confident


def consistency_gates(q_hat, confident, sampler, schedule, cfg, t):
    """mask * indicator per unlabeled example.

    Masks are drawn only for examples passing the confidence gate, with the
    (possibly annealed) class parameter of the pseudo-label class.
    """
    gate = confident.astype(np.float64)
    if not cfg.use_con_mask:
        return gate
    p = sampler.param_for(q_hat)
    if cfg.use_annealing:
        p = schedule.annealed_param(p, t)
    if cfg.reweight_instead_of_mask:
        return gate * p
    return sampler.gated_bernoulli(p, confident)


def balanced_consistency_loss_from_logits(bal_s1, bal_s2, q, q_hat, gates, cfg, n_classes):
    """(1/B) sum_b sum_{views} gate_b * H(softmax(strong_b), target_b).

    One gate per example applies to both strong views. Targets are the soft
    rows q, or onehot(q_hat) when use_soft_labels is off.
    """
    B = bal_s1.shape[0]
    targets = q if cfg.use_soft_labels else one_hot(q_hat, n_classes)
    g = Tensor(gates)
    ce1 = cross_entropy_soft(softmax(bal_s1), targets)
    ce2 = cross_entropy_soft(softmax(bal_s2), targets)
    return scale(add(sum_all(mul(ce1, g)), sum_all(mul(ce2, g))), 1.0 / B)


def balanced_classification_loss(model, x_labeled, y, sampler, schedule, cfg, augment_cfg, rng, t):
    """Standalone form building its own weak view (tests / small scripts)."""
    ax = weak_augment(x_labeled, augment_cfg, rng)
    _, _, bal_x = model.forward(ax)
    w = classification_weights(y, sampler, schedule, cfg, t)
    return balanced_classification_loss_from_logits(bal_x, y, w, model.config.n_classes)


def balanced_consistency_loss(model, x_unlabeled, sampler, schedule, cfg, augment_cfg, rng, t):
    """Standalone form; draw order: weak(u), strong(u) x2, then masks."""
    au = weak_augment(x_unlabeled, augment_cfg, rng)
    a1 = strong_augment(x_unlabeled, augment_cfg, rng)
    a2 = strong_augment(x_unlabeled, augment_cfg, rng)
    _, bal_weak = model.logits_arrays(au)
    q, q_hat, confident = soft_pseudo_labels(bal_weak, cfg)
    gates = consistency_gates(q_hat, confident, sampler, schedule, cfg, t)
    _, _, bal_s1 = model.forward(a1)
    _, _, bal_s2 = model.forward(a2)
    return balanced_consistency_loss_from_logits(
        bal_s1, bal_s2, q, q_hat, gates, cfg, model.config.n_classes
    )


def total_loss(l_cls=None, l_con=None, l_back=None):
    """Sum of whichever loss terms are present; at least one required."""
    terms = [t for t in (l_cls, l_con, l_back) if t is not None]
    if not terms:
        raise BalanceError("total_loss needs at least one term")
    out = terms[0]
    for t in terms[1:]:
        out = add(out, t)
    return out
