"""Backbone SSL objective: supervised CE plus hard-pseudo-label consistency.

The unlabeled term predicts on a weak view without grad, keeps the argmax as
a hard pseudo-label where confidence clears tau, and applies CE on the strong
view against that label. Pseudo-labels are constants: no gradient flows
through them.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import one_hot
from .tensor import Tensor, add, cross_entropy_soft, mul, scale, softmax, sum_all
from .augment import strong_augment, weak_augment

BACKBONE_MODES = ("fixmatch", "supervised")


@dataclass(frozen=True)
class BackboneLossConfig:
    mode: str = "fixmatch"
    tau: float = 0.95
    lambda_u: float = 1.0

    def __post_init__(self):
        if self.mode not in BACKBONE_MODES:
            raise ValueError(f"backbone mode must be one of {BACKBONE_MODES}, got {self.mode!r}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.lambda_u < 0:
            raise ValueError(f"lambda_u must be >= 0, got {self.lambda_u}")


def hard_pseudo_labels(weak_logits, tau):
    """-> (argmax class indices 0-based, confidence mask) as plain arrays."""
    probs = kernels.softmax_rows(np.ascontiguousarray(weak_logits))
    conf = probs.max(axis=1) >= tau
    return probs.argmax(axis=1), conf


def backbone_loss_from_logits(back_x, y, cfg, n_classes,
                              weak_u_logits=None, back_strong=None):
    """Scalar backbone loss from precomputed logits.

    back_x / back_strong are taped Tensors; weak_u_logits is a plain ndarray
    (the no-grad pseudo-label forward). In 'supervised' mode the unlabeled
    pieces may be omitted.
    """
    B = back_x.shape[0]
    sup_ce = cross_entropy_soft(softmax(back_x), one_hot(y, n_classes))
    l_sup = scale(sum_all(sup_ce), 1.0 / B)
    if cfg.mode == "supervised":
        return l_sup
    if weak_u_logits is None or back_strong is None:
        raise ValueError("fixmatch mode needs weak_u_logits and back_strong")
    idx, conf = hard_pseudo_labels(weak_u_logits, cfg.tau)
    targets = one_hot(idx + 1, n_classes)
    u_ce = cross_entropy_soft(softmax(back_strong), targets)
    gated = mul(u_ce, Tensor(conf.astype(np.float64)))
    l_unsup = scale(sum_all(gated), cfg.lambda_u / B)
    return add(l_sup, l_unsup)


def backbone_loss(model, mb, cfg, augment_cfg, rng):
    """Standalone form: builds its own views from one rng.

    Draw order: weak(x), weak(u), strong(u). The trainer does not use this --
    it shares views across losses -- but tests and small experiments do.
    """
    ax = weak_augment(mb.x_labeled, augment_cfg, rng)
    _, back_x, _ = model.forward(ax)
    if cfg.mode == "supervised":
        return backbone_loss_from_logits(back_x, mb.y_labeled, cfg, model.config.n_classes)
    au = weak_augment(mb.x_unlabeled, augment_cfg, rng)
    a1 = strong_augment(mb.x_unlabeled, augment_cfg, rng)
    weak_u_logits, _ = model.logits_arrays(au)
    _, back_strong, _ = model.forward(a1)
    return backbone_loss_from_logits(
        back_x, mb.y_labeled, cfg, model.config.n_classes,
        weak_u_logits=weak_u_logits, back_strong=back_strong,
    )
