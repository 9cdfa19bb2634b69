"""Timing comparison of the numba loop kernels against the numpy fallbacks.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--batch 64] [--classes 10] [--repeat 200]

Both implementation sets are importable regardless of which one the package
selected at import time, so a single process can time them side by side.
A short end-to-end training benchmark is included because kernel microtimes
do not add up to wall-clock (BLAS matmuls dominate the backward pass).
"""

import argparse
import time

import numpy as np

from skewlab import kernels


def _args_for(name, rng, batch, classes, width):
    if name == "softmax_rows":
        return (rng.standard_normal((batch, classes)),)
    if name == "softmax_vjp":
        p = kernels.NUMPY_KERNELS["softmax_rows"](rng.standard_normal((batch, classes)))
        return (p, rng.standard_normal((batch, classes)))
    if name == "ce_soft_forward":
        p = kernels.NUMPY_KERNELS["softmax_rows"](rng.standard_normal((batch, classes)))
        t = kernels.NUMPY_KERNELS["softmax_rows"](rng.standard_normal((batch, classes)))
        return (p, t, 1e-12)
    if name == "ce_soft_vjp":
        p = kernels.NUMPY_KERNELS["softmax_rows"](rng.standard_normal((batch, classes)))
        t = kernels.NUMPY_KERNELS["softmax_rows"](rng.standard_normal((batch, classes)))
        return (p, t, rng.standard_normal(batch), 1e-12)
    if name == "relu_forward":
        return (rng.standard_normal((batch, width)),)
    if name == "relu_vjp":
        return (rng.standard_normal((batch, width)), rng.standard_normal((batch, width)))
    if name == "adam_update":
        n = width * width
        return (rng.standard_normal(n), rng.standard_normal(n),
                np.zeros(n), np.zeros(n), 0.002, 0.9, 0.999, 1e-8, 3)
    if name == "ema_update":
        n = width * width
        return (rng.standard_normal(n), rng.standard_normal(n), 0.999)
    raise KeyError(name)


def time_kernel(fn, args, repeat):
    fn(*args)  # warmup (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_kernels(batch, classes, width, repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':18s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    if kernels.NUMBA_KERNELS is None:
        print("numba unavailable (or disabled); timing the numpy path only")
    for name in kernels.NUMPY_KERNELS:
        args = _args_for(name, rng, batch, classes, width)
        # in-place kernels mutate their inputs; give each path its own copies
        np_args = tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)
        t_np = time_kernel(kernels.NUMPY_KERNELS[name], np_args, repeat)
        if kernels.NUMBA_KERNELS is None:
            print(f"{name:18s} {t_np * 1e6:10.2f} {'-':>10s} {'-':>8s}")
            continue
        nb_args = tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)
        t_nb = time_kernel(kernels.NUMBA_KERNELS[name], nb_args, repeat)
        print(f"{name:18s} {t_np * 1e6:10.2f} {t_nb * 1e6:10.2f} {t_np / t_nb:8.2f}x")


def bench_training(iterations):
    from skewlab.augment import AugmentConfig
    from skewlab.backbone import BackboneLossConfig
    from skewlab.balance import BalanceConfig
    from skewlab.config import DatasetConfig, ExperimentConfig
    from skewlab.experiment import build_run_data
    from skewlab.train import TrainConfig, train

    cfg = ExperimentConfig(
        dataset=DatasetConfig(),
        augment=AugmentConfig(),
        backbone=BackboneLossConfig(),
        balance=BalanceConfig(),
        train=TrainConfig(iterations=iterations, eval_every=0),
    )
    split, ex, ey = build_run_data(cfg, 1)
    t0 = time.perf_counter()
    train(split, ex, ey, cfg.model_config(), cfg.train, cfg.backbone,
          cfg.balance, cfg.augment, 1)
    dt = time.perf_counter() - t0
    print(f"\nend-to-end: {iterations} iterations in {dt:.2f}s "
          f"({dt / iterations * 1e3:.2f} ms/iter, backend={kernels.BACKEND})")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--width", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--train-iters", type=int, default=500,
                    help="0 skips the end-to-end benchmark")
    args = ap.parse_args()
    print(f"selected backend: {kernels.BACKEND}")
    bench_kernels(args.batch, args.classes, args.width, args.repeat)
    if args.train_iters:
        bench_training(args.train_iters)


if __name__ == "__main__":
    main()
