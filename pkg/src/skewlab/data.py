"""Synthetic class-imbalanced datasets and the labeled/unlabeled split.

Class cardinalities are generated sorted: class 1 is always the largest.
Labels are 1-based everywhere in the public API. The unlabeled split keeps
its true labels quarantined -- they are reachable only through
``unlabeled_labels_for_eval`` and must never feed training.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np


class DataError(ValueError):
    pass


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ImbalanceProfile:
    """kind: 'lt' (geometric decay) or 'step' (two plateaus)."""
    kind: str
    n_classes: int
    n_largest: int
    imbalance_ratio: float

    def __post_init__(self):
        if self.kind not in ("lt", "step"):
            raise DataError(f"profile kind must be 'lt' or 'step', got {self.kind!r}")
        if self.n_classes < 2:
            raise DataError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_largest < 1:
            raise DataError(f"largest class size must be >= 1, got {self.n_largest}")
        if self.imbalance_ratio < 1.0:
            raise DataError(
                f"imbalance ratio must be >= 1, got {self.imbalance_ratio}"
            )


def class_sizes(profile):
    """Per-class cardinalities, non-increasing, floored at 1.

    lt:   n_k = round(N1 * ratio^(-(k-1)/(L-1))), round half up
    step: first ceil(L/2) classes at N1, the rest at round(N1 / ratio)
    """
    L = profile.n_classes
    n1 = profile.n_largest
    ratio = profile.imbalance_ratio
    if profile.kind == "lt":
        sizes = [
            max(1, round_half_up(n1 * ratio ** (-(k - 1) / (L - 1))))
            for k in range(1, L + 1)
        ]
    else:
        high = math.ceil(L / 2)
        low_size = max(1, round_half_up(n1 / ratio))
        sizes = [n1] * high + [low_size] * (L - high)
    return np.array(sizes, dtype=np.int64)


def class_means(n_classes, dim, spread):
    """Deterministic class centers, no randomness.

    With n_classes <= dim the centers sit on scaled standard basis vectors
    (mutually equidistant). Otherwise they are spaced evenly on a circle of
    radius ``spread`` in the first two coordinates.
    """
    if dim < 2:
        raise DataError(f"feature dimension must be >= 2, got {dim}")
    means = np.zeros((n_classes, dim))
    if n_classes <= dim:
        for k in range(n_classes):
            means[k, k] = spread
    else:
        angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
        means[:, 0] = spread * np.cos(angles)
        means[:, 1] = spread * np.sin(angles)
    return means


@dataclass
class DataPool:
    """Unsplit dataset: features (N,d) float64, labels (N,) int64 in 1..L."""
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes + 1)[1:]


def generate_gaussian_mixture(profile, dim, spread, seed):
    """Isotropic unit-variance Gaussian blobs at deterministic class means.

    Same (profile, dim, spread, seed) always yields bit-identical pools.
    ``seed`` may be an int or a numpy SeedSequence.
    """
    sizes = class_sizes(profile)
    means = class_means(profile.n_classes, dim, spread)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rng = np.random.default_rng(seed)
    feats = []
    labels = []
    for k in range(profile.n_classes):
        n_k = int(sizes[k])
        feats.append(means[k] + rng.standard_normal((n_k, dim)))
        labels.append(np.full(n_k, k + 1, dtype=np.int64))
    return DataPool(
        features=np.concatenate(feats, axis=0),
        labels=np.concatenate(labels),
        n_classes=profile.n_classes,
    )


@dataclass
class SplitDataset:
    """Labeled/unlabeled split; unlabeled true labels quarantined."""
    x_labeled: np.ndarray
    y_labeled: np.ndarray
    x_unlabeled: np.ndarray
    labeled_counts: np.ndarray  # per class, 1..L
    n_classes: int
    labeled_fraction: float
    _u_labels: np.ndarray = None

    def unlabeled_labels_for_eval(self):
        """True labels of the unlabeled set. Evaluation only -- any use of
        these during training defeats the point of the split."""
        return self._u_labels.copy()


def split_labeled_unlabeled(pool, labeled_fraction, seed):
    """Per class, round(labeled_fraction * count) items become labeled.

    Rounding is half-up. A class ending up with zero labeled items is an
    error (the rebalancing losses need every class represented).
    """
    if not 0.0 < labeled_fraction < 1.0:
        raise DataError(
            f"labeled fraction must be in (0, 1), got {labeled_fraction}"
        )
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rng = np.random.default_rng(seed)
    xl, yl, xu, yu = [], [], [], []
    counts = np.zeros(pool.n_classes, dtype=np.int64)
    for k in range(1, pool.n_classes + 1):
        idx = np.flatnonzero(pool.labels == k)
        if idx.size == 0:
            raise DataError(f"class {k} has no examples in the pool")
        idx = rng.permutation(idx)
        n_lab = round_half_up(labeled_fraction * idx.size)
        if n_lab == 0:
            raise DataError(
                f"class {k}: fraction {labeled_fraction} of {idx.size} examples "
                "rounds to 0 labeled items"
            )
        counts[k - 1] = n_lab
        xl.append(pool.features[idx[:n_lab]])
        yl.append(np.full(n_lab, k, dtype=np.int64))
        xu.append(pool.features[idx[n_lab:]])
        yu.append(np.full(idx.size - n_lab, k, dtype=np.int64))
    x_unlabeled = np.concatenate(xu, axis=0)
    if x_unlabeled.shape[0] == 0:
        raise DataError("split produced an empty unlabeled set")
    return SplitDataset(
        x_labeled=np.concatenate(xl, axis=0),
        y_labeled=np.concatenate(yl),
        x_unlabeled=x_unlabeled,
        labeled_counts=counts,
        n_classes=pool.n_classes,
        labeled_fraction=labeled_fraction,
        _u_labels=np.concatenate(yu),
    )


def one_hot(labels, n_classes):
    """1-based labels -> (B, L) float64 one-hot rows."""
    labels = np.asarray(labels)
    if labels.min() < 1 or labels.max() > n_classes:
        raise DataError(
            f"labels outside 1..{n_classes}: range {labels.min()}..{labels.max()}"
        )
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels - 1] = 1.0
    return out


@dataclass
class Minibatch:
    x_labeled: np.ndarray
    y_labeled: np.ndarray
    x_unlabeled: np.ndarray


def sample_minibatch(split, batch_size, rng):
    """Uniform-with-replacement draw: batch_size labeled + batch_size unlabeled.

    Draw order is fixed (labeled indices, then unlabeled indices) so the
    stream consumption per call is constant.
    """
    il = rng.integers(0, split.x_labeled.shape[0], size=batch_size)
    iu = rng.integers(0, split.x_unlabeled.shape[0], size=batch_size)
    return Minibatch(
        x_labeled=split.x_labeled[il],
        y_labeled=split.y_labeled[il],
        x_unlabeled=split.x_unlabeled[iu],
    )


# ---------------------------------------------------------------------------
# CSV interchange: d feature columns then one integer label column
# ---------------------------------------------------------------------------

MANIFEST_VERSION = 1


def write_csv_dataset(pool, path, meta=None, header=True):
    """Write the pool as CSV and a JSON manifest next to it.

    ``meta`` (a dict, e.g. generator profile / seed / labeled fraction) is
    stored verbatim in the manifest together with per-class counts.
    """
    path = str(path)
    dim = pool.features.shape[1]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if header:
            wr.writerow([f"f{j + 1}" for j in range(dim)] + ["label"])
        for row, lab in zip(pool.features, pool.labels):
            wr.writerow([repr(float(v)) for v in row] + [int(lab)])
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "n_classes": int(pool.n_classes),
        "dim": int(dim),
        "n_examples": int(pool.labels.shape[0]),
        "class_counts": [int(c) for c in pool.class_counts()],
        "meta": meta or {},
    }
    with open(path + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_csv_dataset(path, dim, n_classes, has_header="auto"):
    """Read a CSV of d feature columns + 1 integer label column.

    Malformed rows fail loudly with the 1-based line number. Labels must lie
    in 1..n_classes.
    """
    feats, labels = [], []
    with open(str(path), newline="") as fh:
        rd = csv.reader(fh)
        for lineno, row in enumerate(rd, start=1):
            if not row:
                continue
            if lineno == 1 and has_header in ("auto", True):
                if has_header is True:
                    continue
                try:
                    float(row[0])
                except ValueError:
                    continue  # auto-detected header row
            if len(row) != dim + 1:
                raise DataError(
                    f"{path}: line {lineno}: expected {dim + 1} fields, got {len(row)}"
                )
            try:
                feats.append([float(v) for v in row[:dim]])
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            try:
                lab = int(row[dim])
            except ValueError:
                raise DataError(
                    f"{path}: line {lineno}: label {row[dim]!r} is not an integer"
                ) from None
            if not 1 <= lab <= n_classes:
                raise DataError(
                    f"{path}: line {lineno}: label {lab} outside 1..{n_classes}"
                )
            labels.append(lab)
    if not labels:
        raise DataError(f"{path}: no data rows")
    return DataPool(
        features=np.asarray(feats, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        n_classes=n_classes,
    )
