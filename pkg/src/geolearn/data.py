"""Synthetic datasets, label-skew partitioning, and minibatch streams.

Two generators cover the lab's needs: observed cells of a low-rank matrix
(for factorization) and Gaussian class clusters (for classifiers). The
partitioner reproduces label skew: a seeded alpha fraction of samples is
dealt by label ownership so each partition concentrates on its own slice of
the label space, and the remainder is dealt uniformly.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .models import MFEntries
from .rng import seed_stream


@dataclass
class MFDatasetSpec:
    rows: int
    cols: int
    rank: int
    density: float
    noise_sigma: float
    seed: int


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    classes: int

    def __len__(self):
        return self.y.size


@dataclass
class SkewSpec:
    partitions: int
    alpha: float
    seed: int


def gen_mf_data(spec):
    """Observed entries x_ij = (L* R*)_ij + noise at the requested density.

    Returns (MFEntries, noise_floor) where noise_floor is the exact squared
    error of the generating factors on the emitted entries, i.e. the loss
    value a perfect recovery would reach.
    """
    if not 0.0 < spec.density <= 1.0:
        raise ValueError(f"density must be in (0, 1], got {spec.density}")
    n_cells = spec.rows * spec.cols
    count = int(round(spec.density * n_cells))
    if count < 1:
        raise ValueError("density too low: no entries would be generated")
    rng = seed_stream(spec.seed, "data", "mf")
    L = rng.normal(0.0, 1.0, (spec.rows, spec.rank)) / math.sqrt(spec.rank)
    R = rng.normal(0.0, 1.0, (spec.rank, spec.cols))
    flat = rng.choice(n_cells, size=count, replace=False)
    flat.sort()
    row = (flat // spec.cols).astype(np.intp)
    col = (flat % spec.cols).astype(np.intp)
    clean = np.sum(L[row] * R[:, col].T, axis=1)
    noise = rng.normal(0.0, spec.noise_sigma, count) if spec.noise_sigma > 0 else np.zeros(count)
    entries = MFEntries(row=row, col=col, val=clean + noise)
    floor = float(np.dot(noise, noise))
    return entries, floor


def gen_cluster_data(classes, features, per_class, spread, seed, tag="train"):
    """Balanced Gaussian blobs: class c is centered at a seeded random point.

    The centers depend only on (seed, classes, features) so train and test
    splits drawn with different tags share geometry but not noise.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    center_rng = seed_stream(seed, "data", "centers")
    centers = center_rng.normal(0.0, 1.0, (classes, features))
    noise_rng = seed_stream(seed, "data", "blobs", tag)
    X = np.repeat(centers, per_class, axis=0) + spread * noise_rng.normal(
        0.0, 1.0, (classes * per_class, features))
    y = np.repeat(np.arange(classes), per_class)
    return LabeledDataset(X=X, y=y, classes=classes)


def _label_owner(label, classes, partitions):
    # contiguous label blocks; the first (classes % partitions) partitions own
    # one extra label each, so remainders land on the lowest-index partitions
    base, extra = divmod(classes, partitions)
    boundary = (base + 1) * extra
    if label < boundary:
        return label // (base + 1)
    return extra + (label - boundary) // base if base else partitions - 1


def partition_label_skew(dataset, spec):
    """Split sample indices into `partitions` lists with tunable label skew.

    A seeded alpha fraction of the samples is assigned by label ownership:
    partition k owns the k-th contiguous block of labels, with the first
    C mod K partitions owning one extra label. The remaining samples are
    dealt smallest-partition-first from a seeded shuffle, which keeps all
    partition sizes within +-K of N/K on balanced datasets whose class
    count divides evenly over the partitions (otherwise label ownership
    itself is lopsided and dominates the split).
    """
    k = spec.partitions
    n = len(dataset)
    if not 0.0 <= spec.alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {spec.alpha}")
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= partitions <= {n}, got {k}")
    rng = seed_stream(spec.seed, "partition")
    order = rng.permutation(n)
    n_skew = int(round(spec.alpha * n))
    skewed, uniform = order[:n_skew], order[n_skew:]
    parts = [[] for _ in range(k)]
    # label-owned fraction: stable sort keeps the seeded order within a label
    skewed = skewed[np.argsort(dataset.y[skewed], kind="stable")]
    for idx in skewed:
        parts[_label_owner(int(dataset.y[idx]), dataset.classes, k)].append(int(idx))
    # uniform remainder: deal to the currently smallest partition
    for idx in uniform:
        target = min(range(k), key=lambda p: (len(parts[p]), p))
        parts[target].append(int(idx))
    return [np.array(sorted(p), dtype=np.intp) for p in parts]


def partition_uniform(n, partitions, seed):
    """Random balanced split of range(n); used for factorization entries."""
    rng = seed_stream(seed, "partition")
    order = rng.permutation(n)
    return [np.sort(order[p::partitions]).astype(np.intp) for p in range(partitions)]


def label_histogram(dataset, indices, classes=None):
    classes = classes if classes is not None else dataset.classes
    return np.bincount(dataset.y[indices], minlength=classes)


class MinibatchStream:
    """Without-replacement minibatches over a fixed index set.

    Each epoch is a fresh seeded permutation cut into ceil(N/B) consecutive
    batches (the last one may be short). peek() exposes the upcoming batch
    without consuming it so callers can gate on what it will read.
    """

    def __init__(self, indices, batch_size, rng):
        self.indices = np.asarray(indices, dtype=np.intp)
        if batch_size < 1 or batch_size > self.indices.size:
            raise ValueError(
                f"batch size must be in 1..{self.indices.size}, got {batch_size}")
        self.batch_size = batch_size
        self.rng = rng
        self.batches_per_epoch = math.ceil(self.indices.size / batch_size)
        self._order = None
        self._cursor = 0

    def _ensure_epoch(self):
        if self._order is None or self._cursor >= self.indices.size:
            self._order = self.rng.permutation(self.indices)
            self._cursor = 0

    def peek(self):
        self._ensure_epoch()
        return self._order[self._cursor:self._cursor + self.batch_size]

    def next_batch(self):
        batch = self.peek()
        self._cursor += self.batch_size
        return batch


def dump_dataset_csv(dataset, path):
    """Write a labeled dataset as feat_0..feat_{d-1},label rows."""
    d = dataset.X.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"feat_{i}" for i in range(d)] + ["label"])
        for xi, yi in zip(dataset.X, dataset.y):
            writer.writerow([repr(float(v)) for v in xi] + [int(yi)])


def load_dataset_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label" or not header[0].startswith("feat_"):
            raise ValueError(f"unrecognized dataset header: {header}")
        rows = list(reader)
    X = np.array([[float(v) for v in row[:-1]] for row in rows])
    y = np.array([int(row[-1]) for row in rows], dtype=np.intp)
    return LabeledDataset(X=X, y=y, classes=int(y.max()) + 1 if y.size else 0)
