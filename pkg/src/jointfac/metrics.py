"""Permutation-matched scores: clustering accuracy, factor MSE, Kruskal rank."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

DB_FLOOR = -120.0


@dataclass(frozen=True)
class TrialScore:
    accuracy: float
    mse_linear: float
    mse_db: float
    runtime_seconds: float = 0.0

    @classmethod
    def from_linear(cls, accuracy, mse_linear, runtime_seconds=0.0):
        return cls(float(accuracy), float(mse_linear), to_db(mse_linear), float(runtime_seconds))


def to_db(x):
    """``10 log10(x)`` floored at -120 dB (so exact recovery stays finite)."""
    x = float(x)
    if x <= 0:
        return DB_FLOOR
    return max(DB_FLOOR, 10.0 * np.log10(x))


def contingency(true_labels, pred_labels):
    t = np.asarray(true_labels)
    p = np.asarray(pred_labels)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"label vectors differ in shape: {t.shape} vs {p.shape}")
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    C = np.zeros((ti.max(initial=-1) + 1, pi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(C, (ti, pi), 1)
    return C


def clustering_accuracy(true_labels, pred_labels):
    """Fraction of points correct under the best one-to-one label matching.

    Labels may be arbitrary hashable values; the two alphabets need not have
    the same size (unmatched clusters count as errors).
    """
    C = contingency(true_labels, pred_labels)
    n = C.sum()
    if n == 0:
        raise ValueError("empty labelling")
    r, c = linear_sum_assignment(C, maximize=True)
    return float(C[r, c].sum() / n)


def _unit_columns(W, name):
    W = np.array(W, dtype=float)
    norms = np.linalg.norm(W, axis=0)
    zero = norms == 0
    if zero.any():
        warnings.warn(f"{name} has {int(zero.sum())} zero column(s); replaced by e_1",
                      RuntimeWarning, stacklevel=3)
        W[:, zero] = 0.0
        W[0, zero] = 1.0
        norms[zero] = 1.0
    return W / norms


def mse_cost_matrix(W_true, W_est):
    """``(f, g)`` entry: ``min_c ||a_f - c b_g||^2 = 2 - 2 |a_f^T b_g|`` for unit columns."""
    W_true = np.asarray(W_true)
    W_est = np.asarray(W_est)
    if W_true.shape != W_est.shape:
        raise ValueError(f"shape mismatch: {W_true.shape} vs {W_est.shape}")
    A = _unit_columns(W_true, "W_true")
    B = _unit_columns(W_est, "W_est")
    # direct differences rather than 2 - 2|a^T b| so exact matches give 0.0
    plus = np.sum((A[:, :, None] - B[:, None, :]) ** 2, axis=0)
    minus = np.sum((A[:, :, None] + B[:, None, :]) ** 2, axis=0)
    return np.minimum(plus, minus)


def matched_mse(W_true, W_est):
    """Mean squared distance between normalised columns after the best
    permutation and per-column sign.  Returns the linear value."""
    D = mse_cost_matrix(W_true, W_est)
    r, c = linear_sum_assignment(D)
    return float(D[r, c].sum() / D.shape[0])


def matched_mse_db(W_true, W_est):
    return to_db(matched_mse(W_true, W_est))


def kruskal_rank(A, tol=1e-9, max_cols=8):
    """Largest ``k`` such that every set of ``k`` columns is independent.

    Brute force over column subsets; a subset is independent when its
    smallest singular value exceeds ``tol`` times the largest column norm.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    if n > max_cols:
        raise ValueError(f"kruskal_rank enumerates subsets; {n} columns exceeds {max_cols}")
    scale = max(np.linalg.norm(A, axis=0).max(initial=0.0), 1.0)
    k = 0
    for size in range(1, n + 1):
        for cols in itertools.combinations(range(n), size):
            s = np.linalg.svd(A[:, cols], compute_uv=False)
            if s.size < size or s[-1] <= tol * scale:
                return k
        k = size
    return k
