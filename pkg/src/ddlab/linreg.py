"""Min-norm ridgeless least squares and the sample-count sweep.

The estimator is the SVD pseudoinverse solution: singular values at or
below ``max(m, q) * machine_eps * sigma_max`` are treated as zero, which
makes the fit the minimum-Euclidean-norm least-squares solution and gives
a consistent numerical rank rule for the rank diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import ConcatView, build_concat_test, materialize
from .datagen import RegressionDataset, gen_linreg, sample_theta
from .records import STATUS_MEDIAN, CurvePoint
from .rng import Rng, mix_seed

VARIANT_STANDARD = "standard"
VARIANT_CONCAT = "concat"

# sample-sweep grids stay at n <= a few hundred, so their n^2 x 2d designs
# are megabytes; this cap only guards accidental quadratic blowups
SWEEP_MATERIALIZE_BUDGET = 6 << 30


@dataclass(frozen=True)
class LinearModel:
    theta_hat: np.ndarray
    effective_rank: int
    sv_cutoff: float


def _svd_cutoff(singular_values: np.ndarray, m: int, q: int) -> float:
    if singular_values.size == 0:
        return 0.0
    return max(m, q) * np.finfo(np.float64).eps * float(singular_values[0])


def pinv_solve(X: np.ndarray, y: np.ndarray) -> LinearModel:
    """Minimum-norm least squares via the thin SVD pseudoinverse."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError("X must be a nonempty 2-D matrix")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("inputs must be finite")
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    cutoff = _svd_cutoff(s, *X.shape)
    keep = s > cutoff
    coeffs = (u[:, keep].T @ y) / s[keep]
    theta = vt[keep].T @ coeffs
    return LinearModel(theta, int(keep.sum()), cutoff)


def mse(model: LinearModel, ds: RegressionDataset) -> float:
    if ds.dim != model.theta_hat.shape[0]:
        raise ValueError(
            f"model width {model.theta_hat.shape[0]} does not match "
            f"dataset width {ds.dim}")
    resid = ds.features @ model.theta_hat - ds.targets
    return float(np.mean(resid * resid))


def design_rank(X: np.ndarray) -> int:
    """Numerical rank under the same cutoff rule as pinv_solve."""
    X = np.asarray(X, dtype=np.float64)
    s = np.linalg.svd(X, compute_uv=False)
    return int(np.sum(s > _svd_cutoff(s, *X.shape)))


def _sweep_cell(d, sigma, n, n_test, seed, variant):
    """One (n, seed) cell. Draw order: theta, train, test; the variant is
    applied after the draws so standard/concat consume identical bytes."""
    rng = Rng(mix_seed(seed, n))
    theta = sample_theta(d, rng)
    train = gen_linreg(n, d, sigma, theta, rng)
    test = gen_linreg(n_test, d, sigma, theta, rng)
    if variant == VARIANT_CONCAT:
        train = materialize(ConcatView(train), SWEEP_MATERIALIZE_BUDGET)
        test = build_concat_test(test)
        params = 2 * d
    elif variant == VARIANT_STANDARD:
        params = d
    else:
        raise ValueError(f"unknown variant {variant!r}")
    model = pinv_solve(train.features, train.targets)
    return mse(model, train), mse(model, test), params


def lower_median(values) -> float:
    """Median with the lower-middle element for even counts."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("median of empty sequence")
    return ordered[(len(ordered) - 1) // 2]


def linreg_sample_sweep(d: int, sigma: float, n_grid, seeds, n_test: int,
                        variant: str = VARIANT_STANDARD,
                        experiment_id: str = "linreg") -> list[CurvePoint]:
    """Test-MSE-versus-samples sweep for one variant.

    Returns one point per (n, seed) plus one median point per n (status
    "median", empty seed).  Cell draws depend only on (seed, n), so running
    the concat variant separately still pairs it with the same base data.
    """
    if not n_grid:
        raise ValueError("n_grid must be nonempty")
    if not seeds:
        raise ValueError("seeds must be nonempty")
    if n_test < 1:
        raise ValueError("n_test must be >= 1")
    points = []
    for n in n_grid:
        per_seed = []
        for seed in seeds:
            train_mse, test_mse, params = _sweep_cell(
                d, sigma, n, n_test, seed, variant)
            per_seed.append((train_mse, test_mse))
            points.append(CurvePoint(
                experiment_id, variant, "samples", float(n),
                train_loss=train_mse, test_loss=test_mse, seed=seed,
                params=params, param_sample_ratio=params / n))
        points.append(CurvePoint(
            experiment_id, variant, "samples", float(n),
            train_loss=lower_median(t for t, _ in per_seed),
            test_loss=lower_median(t for _, t in per_seed),
            params=params, param_sample_ratio=params / n,
            status=STATUS_MEDIAN))
    return points


def median_points(points) -> list[CurvePoint]:
    return [p for p in points if p.status == STATUS_MEDIAN]
