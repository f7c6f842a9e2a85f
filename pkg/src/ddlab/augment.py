"""The concatenated-inputs construction.

From a base dataset of n rows, the training view holds all n*n ordered
pairs: element (i, j) has features [x_i || x_j] and a combined target.
Regression targets and averaged-mode classification targets are the
arithmetic mean (y_i + y_j) / 2; multi-hot mode takes the element-wise
maximum of two one-hot rows so a same-class pair stays a valid {0, 1}
vector.  Test sets concatenate each input with itself and keep the
original target.

The view is virtual: element (i, j) is computed on demand in row-major
(i, j) order and nothing quadratic is ever allocated unless
``materialize`` is called explicitly, which enforces a memory budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import (MODE_AVERAGED, MODE_MULTI_HOT, ClassificationDataset,
                      RegressionDataset)
from .rng import Rng


class MemoryBudgetError(ValueError):
    """Materialization would exceed the configured byte budget."""


def _combine_targets(t1, t2, mode):
    if mode == MODE_AVERAGED:
        return (t1 + t2) / 2.0
    if mode == MODE_MULTI_HOT:
        return np.maximum(t1, t2)
    raise ValueError(f"unknown target mode {mode!r}")


def concat_pair(x1, y1, x2, y2, mode: str = MODE_AVERAGED):
    """Single augmented example ([x1 || x2], combined target)."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ValueError("inputs to concatenate must have equal length")
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    if y1.shape != y2.shape:
        raise ValueError("targets must have equal arity")
    if mode == MODE_MULTI_HOT:
        for y in (y1, y2):
            if not np.all((y == 0.0) | (y == 1.0)):
                raise ValueError("multi-hot mode requires one-hot targets")
    target = _combine_targets(y1, y2, mode)
    if target.ndim == 0:
        target = float(target)
    return np.concatenate([x1, x2]), target


@dataclass(frozen=True)
class PairBatch:
    indices: np.ndarray  # (m, 2) int64 pairs (i, j)
    features: np.ndarray  # (m, 2d)
    targets: np.ndarray  # (m,) or (m, c)


class ConcatView:
    """Constant-memory view over all n*n ordered pairs of a base dataset."""

    def __init__(self, base, mode: str = MODE_AVERAGED):
        if base.n < 1:
            raise ValueError("base dataset is empty")
        if isinstance(base, RegressionDataset):
            if mode != MODE_AVERAGED:
                raise ValueError("regression pairs only support averaged targets")
        elif isinstance(base, ClassificationDataset):
            if mode == MODE_MULTI_HOT and not base.is_one_hot:
                raise ValueError("multi-hot pairing requires a one-hot base")
            if mode == MODE_AVERAGED and base.mode != MODE_AVERAGED:
                raise ValueError("averaged pairing requires sum-to-one targets")
        else:
            raise TypeError(f"unsupported base dataset {type(base).__name__}")
        self.base = base
        self.mode = mode

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def pair_count(self) -> int:
        return self.base.n * self.base.n

    @property
    def input_dim(self) -> int:
        return 2 * self.base.dim

    def element(self, i: int, j: int):
        n = self.base.n
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"pair ({i}, {j}) out of range for n={n}")
        features = np.concatenate([self.base.features[i], self.base.features[j]])
        target = _combine_targets(self.base.targets[i], self.base.targets[j],
                                  self.mode)
        return features, target

    def batch(self, i_idx, j_idx) -> PairBatch:
        i_idx = np.asarray(i_idx, dtype=np.int64)
        j_idx = np.asarray(j_idx, dtype=np.int64)
        features = np.hstack([self.base.features[i_idx],
                              self.base.features[j_idx]])
        targets = _combine_targets(self.base.targets[i_idx],
                                   self.base.targets[j_idx], self.mode)
        return PairBatch(np.stack([i_idx, j_idx], axis=1), features, targets)

    def batch_flat(self, flat_idx) -> PairBatch:
        """Batch by row-major flat pair index: k -> (k // n, k % n)."""
        flat_idx = np.asarray(flat_idx, dtype=np.int64)
        return self.batch(flat_idx // self.base.n, flat_idx % self.base.n)


def build_concat_train_view(base, mode: str = MODE_AVERAGED) -> ConcatView:
    return ConcatView(base, mode)


def build_concat_test(base):
    """Self-concatenated evaluation set: row i is ([x_i || x_i], y_i)."""
    if base.n < 1:
        raise ValueError("base dataset is empty")
    features = np.hstack([base.features, base.features])
    if isinstance(base, RegressionDataset):
        # true_theta does not transfer: the doubled parameterization is not
        # unit norm, so the concatenated set carries no ground-truth vector.
        return RegressionDataset(features, base.targets.copy())
    return ClassificationDataset(features, base.targets.copy(), base.mode)


def sample_pairs(view: ConcatView, m: int, rng: Rng) -> PairBatch:
    """m index pairs drawn uniformly without replacement from the n*n grid.

    Flat indices are drawn in blocks from the seeded stream; repeats are
    skipped in draw order until m distinct pairs are collected, so the
    result is deterministic for a given seed.  Intended for m well below
    n*n (one training epoch); m close to n*n degenerates into coupon
    collecting but stays correct.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    total = view.pair_count
    if m > total:
        raise ValueError(f"cannot draw {m} distinct pairs from a grid of {total}")
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < m:
        block = max(64, int((m - len(chosen)) * 1.15) + 16)
        draws = rng.integers(total, size=block)
        for value in draws.tolist():
            if value not in seen:
                seen.add(value)
                chosen.append(value)
                if len(chosen) == m:
                    break
    return view.batch_flat(np.array(chosen, dtype=np.int64))


def materialize(view: ConcatView, max_bytes: int = 1 << 30):
    """Dense row-major (i, j) dataset for the full n*n grid.

    Refuses to allocate past ``max_bytes`` (features plus targets, 8 bytes
    per value) since the grid grows quadratically in the base size.
    """
    n = view.n
    base = view.base
    target_width = 1 if base.targets.ndim == 1 else base.targets.shape[1]
    need = n * n * (view.input_dim + target_width) * 8
    if need > max_bytes:
        raise MemoryBudgetError(
            f"materializing {n}x{n} pairs needs {need} bytes, "
            f"over the {max_bytes}-byte budget")
    i_idx = np.repeat(np.arange(n, dtype=np.int64), n)
    j_idx = np.tile(np.arange(n, dtype=np.int64), n)
    batch = view.batch(i_idx, j_idx)
    if isinstance(base, RegressionDataset):
        return RegressionDataset(batch.features, batch.targets)
    return ClassificationDataset(batch.features, batch.targets, view.mode)
