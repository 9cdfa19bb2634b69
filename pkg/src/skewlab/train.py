"""Training loop for the backbone + balanced-head objective.

Per-iteration recipe (order is part of the determinism contract):

1. draw a labeled + unlabeled minibatch        (stream "data")
2. build weak views of both halves            (stream "augment_weak")
3. build two strong views of the unlabeled    (stream "augment_strong")
4. compute whichever loss terms the mode needs; pseudo-label forwards run
   without grad on the same weak view the gradient losses reuse
5. draw rebalancing masks                     (streams "mask_cls"/"mask_con")
6. backward, Adam step, EMA update

Steps 1-3 always run with the same draw counts whatever the mode or toggles,
so two configs sharing a seed see identical data order and augmentation
noise -- that is what makes ablation comparisons paired.

Modes: end_to_end (all three loss terms), backbone_only (SSL baseline),
head_only (balanced losses only, no backbone term), decoupled (backbone
phase, then balanced-head phase on a bitwise-frozen trunk).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .backbone import backbone_loss_from_logits
from .balance import (
    AnnealSchedule,
    MaskSampler,
    balanced_classification_loss_from_logits,
    balanced_consistency_loss_from_logits,
    classification_weights,
    consistency_gates,
    soft_pseudo_labels,
    total_loss,
)
from .augment import strong_augment, weak_augment
from .data import sample_minibatch
from .metrics import build_metrics_report, confusion_matrix
from .model import EmaModel, Model, predict
from .seeding import SeedStreams
from .tensor import Tape, UsageError, backward, recording

TRAIN_MODES = ("end_to_end", "decoupled", "head_only", "backbone_only")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "end_to_end"
    iterations: int = 20000
    batch_size: int = 64
    learning_rate: float = 0.002
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    ema_decay: float = 0.999
    eval_every: int = 1000
    eval_with_ema: bool = True
    decoupled_split: float = 0.5

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be >= 1")
        if self.eval_every < 0:
            raise ValueError("eval_every must be >= 0 (0 = final eval only)")
        if not 0.0 < self.decoupled_split < 1.0:
            raise ValueError(f"decoupled_split must be in (0, 1), got {self.decoupled_split}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must be in [0, 1), got {self.ema_decay}")


class AdamState:
    """First/second moment buffers keyed by parameter name."""

    def __init__(self, params):
        self.m = {name: np.zeros_like(p.data) for name, p in params}
        self.v = {name: np.zeros_like(p.data) for name, p in params}
        self.step_count = 0


def adam_step(params, state, lr, beta1, beta2, eps):
    """One Adam update over ``params``; every one of them must carry a grad."""
    state.step_count += 1
    for name, p in params:
        if p.grad is None:
            raise UsageError(f"adam_step: parameter {name} has no gradient")
        g = np.ascontiguousarray(p.grad, dtype=np.float64)
        kernels.adam_update(
            p.data.ravel(), g.ravel(), state.m[name].ravel(), state.v[name].ravel(),
            lr, beta1, beta2, eps, state.step_count,
        )


def evaluate(target, eval_x, eval_y, train_class_counts, head="balanced"):
    """Metrics report for a model (live or EMA) on an evaluation set."""
    preds = predict(target, eval_x, head=head)
    return build_metrics_report(preds, eval_y, train_class_counts, head=head)


@dataclass
class TrainResult:
    model: Model
    ema: EmaModel
    loss_history: dict            # arrays "l_cls", "l_con", "l_back", length T
    eval_rows: list               # dicts matching the metrics CSV columns
    final_report: object
    best_report: object
    best_iteration: int
    best_model: Model
    best_ema: EmaModel
    eval_head: str
    unlabeled_confusion: list     # row-normalized, from quarantined labels


def _phase_flags(mode, t, phase_boundary):
    """-> (use_backbone_term, use_balance_terms, freeze_trunk)."""
    if mode == "end_to_end":
        return True, True, False
    if mode == "backbone_only":
        return True, False, False
    if mode == "head_only":
        return False, True, False
    # decoupled
    if t < phase_boundary:
        return True, False, False
    return False, True, True


def _trainable(model, use_back, use_bal, freeze):
    names = []
    if not freeze:
        names.append("trunk.")
    if use_back:
        names.append("backbone_head.")
    if use_bal:
        names.append("balanced_head.")
    return [(n, p) for n, p in model.parameters() if any(n.startswith(s) for s in names)]


def train(split, eval_x, eval_y, model_config, train_cfg, backbone_cfg,
          balance_cfg, augment_cfg, seed):
    """Run the configured mode end to end; returns TrainResult.

    Aborts with TrainingDiverged (reporting the iteration and each loss
    term) the moment any term goes non-finite.
    """
    streams = SeedStreams(seed)
    rng_data = streams.get("data")
    rng_weak = streams.get("augment_weak")
    rng_strong = streams.get("augment_strong")

    model = Model(model_config, streams.get("init"))
    ema = EmaModel(model, train_cfg.ema_decay)
    sampler_cls = MaskSampler(split.labeled_counts, streams.get("mask_cls"))
    sampler_con = MaskSampler(split.labeled_counts, streams.get("mask_con"))
    schedule = AnnealSchedule(train_cfg.iterations)

    T = train_cfg.iterations
    L = model_config.n_classes
    mode = train_cfg.mode
    boundary = int(round(T * train_cfg.decoupled_split)) if mode == "decoupled" else 0
    eval_head = "backbone" if mode == "backbone_only" else "balanced"

    adam = AdamState(model.parameters())
    hist = {k: np.zeros(T) for k in ("l_cls", "l_con", "l_back")}
    eval_rows = []
    best = None  # (overall_acc, iteration, report, model copy, ema copy)
    last_eval_t = 0

    for t in range(T):
        if mode == "decoupled" and t == boundary:
            adam = AdamState(model.parameters())  # fresh moments for the head phase

        mb = sample_minibatch(split, train_cfg.batch_size, rng_data)
        weak_x = weak_augment(mb.x_labeled, augment_cfg, rng_weak)
        weak_u = weak_augment(mb.x_unlabeled, augment_cfg, rng_weak)
        strong1 = strong_augment(mb.x_unlabeled, augment_cfg, rng_strong)
        strong2 = strong_augment(mb.x_unlabeled, augment_cfg, rng_strong)

        use_back, use_bal, freeze = _phase_flags(mode, t, boundary)
        bal_consistency = use_bal and balance_cfg.use_consistency
        back_fixmatch = use_back and backbone_cfg.mode == "fixmatch"

        tape = Tape()
        with recording(tape):
            _, back_x, bal_x = model.forward(weak_x, freeze_trunk=freeze)

            back_u_w = bal_u_w = None
            if back_fixmatch or bal_consistency:
                back_u_w, bal_u_w = model.logits_arrays(weak_u)

            back_s1 = bal_s1 = bal_s2 = None
            if back_fixmatch or bal_consistency:
                _, back_s1, bal_s1 = model.forward(strong1, freeze_trunk=freeze)
            if bal_consistency:
                _, _, bal_s2 = model.forward(strong2, freeze_trunk=freeze)

            l_cls = l_con = l_back = None
            if use_back:
                l_back = backbone_loss_from_logits(
                    back_x, mb.y_labeled, backbone_cfg, L,
                    weak_u_logits=back_u_w, back_strong=back_s1,
                )
            if use_bal:
                w = classification_weights(
                    mb.y_labeled, sampler_cls, schedule, balance_cfg, t
                )
                l_cls = balanced_classification_loss_from_logits(bal_x, mb.y_labeled, w, L)
                if bal_consistency:
                    q, q_hat, confident = soft_pseudo_labels(bal_u_w, balance_cfg)
                    gates = consistency_gates(
                        q_hat, confident, sampler_con, schedule, balance_cfg, t
                    )
                    l_con = balanced_consistency_loss_from_logits(
                        bal_s1, bal_s2, q, q_hat, gates, balance_cfg, L
                    )
            l_total = total_loss(l_cls, l_con, l_back)

        vals = {
            "l_cls": l_cls.item() if l_cls is not None else 0.0,
            "l_con": l_con.item() if l_con is not None else 0.0,
            "l_back": l_back.item() if l_back is not None else 0.0,
        }
        if not np.isfinite(l_total.item()):
            raise TrainingDiverged(
                f"non-finite loss at iteration {t + 1}: "
                + ", ".join(f"{k}={v!r}" for k, v in vals.items())
            )
        for k, v in vals.items():
            hist[k][t] = v

        backward(l_total)
        adam_step(
            _trainable(model, use_back, use_bal, freeze), adam,
            train_cfg.learning_rate, train_cfg.adam_beta1,
            train_cfg.adam_beta2, train_cfg.adam_eps,
        )
        model.zero_grads()
        ema.update(model)

        it = t + 1
        if (train_cfg.eval_every and it % train_cfg.eval_every == 0) or it == T:
            target = ema if train_cfg.eval_with_ema else model
            report = evaluate(target, eval_x, eval_y, split.labeled_counts, head=eval_head)
            eval_rows.append({
                "iteration": it,
                "l_cls": float(hist["l_cls"][last_eval_t:it].mean()),
                "l_con": float(hist["l_con"][last_eval_t:it].mean()),
                "l_back": float(hist["l_back"][last_eval_t:it].mean()),
                "overall_acc": report.overall_accuracy,
                "minority_acc": report.minority_accuracy,
                "gmean": report.gmean,
            })
            last_eval_t = it
            if best is None or report.overall_accuracy > best[0]:
                best = (report.overall_accuracy, it, report,
                        model.copy(), EmaModel(ema.model, ema.decay))

    final_target = ema if train_cfg.eval_with_ema else model
    final_report = evaluate(final_target, eval_x, eval_y, split.labeled_counts,
                            head=eval_head)
    u_preds = predict(final_target, split.x_unlabeled, head=eval_head)
    u_conf = confusion_matrix(
        u_preds, split.unlabeled_labels_for_eval(), L
    )

    return TrainResult(
        model=model,
        ema=ema,
        loss_history=hist,
        eval_rows=eval_rows,
        final_report=final_report,
        best_report=best[2],
        best_iteration=best[1],
        best_model=best[3],
        best_ema=best[4],
        eval_head=eval_head,
        unlabeled_confusion=[[float(v) for v in row] for row in u_conf],
    )


def train_decoupled(split, eval_x, eval_y, model_config, train_cfg, backbone_cfg,
                    balance_cfg, augment_cfg, seed):
    """Two-phase variant: backbone training, then balanced-head training on a
    frozen trunk. Thin wrapper forcing mode='decoupled'."""
    cfg = TrainConfig(
        mode="decoupled",
        iterations=train_cfg.iterations,
        batch_size=train_cfg.batch_size,
        learning_rate=train_cfg.learning_rate,
        adam_beta1=train_cfg.adam_beta1,
        adam_beta2=train_cfg.adam_beta2,
        adam_eps=train_cfg.adam_eps,
        ema_decay=train_cfg.ema_decay,
        eval_every=train_cfg.eval_every,
        eval_with_ema=train_cfg.eval_with_ema,
        decoupled_split=train_cfg.decoupled_split,
    )
    return train(split, eval_x, eval_y, model_config, cfg, backbone_cfg,
                 balance_cfg, augment_cfg, seed)
