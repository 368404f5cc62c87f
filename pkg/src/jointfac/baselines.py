"""Comparison methods: plain/balanced NMF, reduced and factorial K-means,
and the two-stage NMF-KM and VolMin-KM pipelines."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .bcd import run_bcd
from .clustering import kmeans_lloyd
from .kernels import nls_gram


@dataclass
class NMFResult:
    W: np.ndarray
    H: np.ndarray
    cost_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0


def nmf_cost(X, W, H, mu_balance=0.0):
    R = X - W @ H
    c = float(np.sum(R * R))
    if mu_balance:
        c += mu_balance * float(np.sum(W * W) + np.sum(H * H))
    return c


def nmf_solve(X, F, mu_balance=0.0, rng=None, max_iters=200, tol=1e-6, init=None):
    """Alternating nonnegative least squares for ``||X - W H||^2``.

    With ``mu_balance > 0`` the penalty ``mu (||W||^2 + ||H||^2)`` is added;
    at a stationary point the column norms of ``W`` then match the row norms
    of ``H``.  ``init`` is an optional ``(W, H)`` pair.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    rng = np.random.default_rng(rng)
    I, J = X.shape
    eye = np.eye(F)
    if init is None:
        W = rng.uniform(size=(I, F))
        H = nls_gram(W.T @ W + mu_balance * eye, W.T @ X).x
    else:
        W, H = (np.asarray(a, dtype=float) for a in init)

    def h_step(s):
        W, H = s
        return W, nls_gram(W.T @ W + mu_balance * eye, W.T @ X, x0=H).x

    def w_step(s):
        W, H = s
        return nls_gram(H @ H.T + mu_balance * eye, H @ X.T, x0=W.T).x.T, H

    run = run_bcd((W, H), {"H": h_step, "W": w_step},
                  lambda s: nmf_cost(X, s[0], s[1], mu_balance),
                  max_outer=max_iters, tol=tol)
    W, H = run.state
    return NMFResult(W, H, run.cost_trace, run.converged, run.n_iter)


# --------------------------------------------------------------------------
# orthogonal-projection baselines


@dataclass
class ProjectionState:
    P: np.ndarray
    M: np.ndarray
    labels: np.ndarray
    cost_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0


def _sign_fix(V):
    """Flip columns so the first entry with magnitude above 1e-12 is positive."""
    idx = np.argmax(np.abs(V) > 1e-12, axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    return V * np.where(s == 0, 1.0, s)


def _leading_left(X, F):
    U, _, _ = np.linalg.svd(X, full_matrices=False)
    if U.shape[1] < F:
        raise ValueError(f"rank {F} exceeds min(X.shape) = {min(X.shape)}")
    return U[:, :F]


def rkm_cost(X, P, M, labels):
    R = X - P @ M[:, labels]
    return float(np.sum(R * R))


def fkm_cost(X, P, M, labels):
    R = P.T @ X - M[:, labels]
    return float(np.sum(R * R))


def _warn_rank(F, K, name):
    if F < K:
        warnings.warn(f"{name} with F={F} < K={K} is ill-posed", UserWarning, stacklevel=3)


def rkm_solve(X, F, K, rng=None, max_iters=100, tol=1e-9):
    """Reduced K-means: ``min ||X - P M S||^2`` with ``P^T P = I``.

    Given ``(M, S)`` the best ``P`` maximises ``tr(P^T X S^T M^T)``, an
    orthogonal Procrustes problem solved by ``P = U V^T`` from the SVD of
    ``X S^T M^T``.  Given ``P``, ``||X - P M S||^2 = ||P^T X - M S||^2 +
    ||P_perp^T X||^2`` so ``(M, S)`` is plain K-means on ``P^T X``.
    """
    X = np.asarray(X, dtype=float)
    _warn_rank(F, K, "RKM")
    rng = np.random.default_rng(rng)
    P = _leading_left(X, F)
    km = kmeans_lloyd(P.T @ X, K, rng=rng)
    state = ProjectionState(P, km.centroids, km.labels)

    def p_step(s):
        U, _, Vt = np.linalg.svd(X @ s.M[:, s.labels].T, full_matrices=False)
        return replace(s, P=U @ Vt)

    def ms_step(s):
        r = kmeans_lloyd(s.P.T @ X, K, init=s.labels)
        return replace(s, M=r.centroids, labels=r.labels)

    run = run_bcd(state, {"P": p_step, "MS": ms_step},
                  lambda s: rkm_cost(X, s.P, s.M, s.labels), max_outer=max_iters, tol=tol)
    return replace(run.state, cost_trace=run.cost_trace, converged=run.converged,
                   n_iter=run.n_iter)


def fkm_solve(X, F, K, rng=None, max_iters=100, tol=1e-9):
    """Factorial K-means: ``min ||P^T X - M S||^2`` with ``P^T P = I``.

    For fixed ``S`` the optimal centroids are ``M = P^T X S^+``, leaving
    ``tr(P^T X (I - S^+ S) X^T P)``.  ``X (I - S^+ S)`` is ``X`` with every
    column's cluster mean removed, so ``P`` is spanned by the eigenvectors of
    the within-cluster scatter with the ``F`` smallest eigenvalues.
    """
    X = np.asarray(X, dtype=float)
    _warn_rank(F, K, "FKM")
    rng = np.random.default_rng(rng)
    P = _leading_left(X - X.mean(axis=1, keepdims=True), F)
    km = kmeans_lloyd(P.T @ X, K, rng=rng)
    state = ProjectionState(P, km.centroids, km.labels)

    def p_step(s):
        Xc = X.copy()
        for k in np.unique(s.labels):
            cols = s.labels == k
            Xc[:, cols] -= X[:, cols].mean(axis=1, keepdims=True)
        _, V = np.linalg.eigh(Xc @ Xc.T)
        P = _sign_fix(V[:, :F])
        # refit centroids so (P, M) is a consistent pair
        M = np.zeros_like(s.M)
        Y = P.T @ X
        for k in range(K):
            cols = s.labels == k
            M[:, k] = Y[:, cols].mean(axis=1) if cols.any() else Y[:, 0]
        return replace(s, P=P, M=M)

    def ms_step(s):
        r = kmeans_lloyd(s.P.T @ X, K, init=s.labels)
        return replace(s, M=r.centroids, labels=r.labels)

    run = run_bcd(state, {"P": p_step, "MS": ms_step},
                  lambda s: fkm_cost(X, s.P, s.M, s.labels), max_outer=max_iters, tol=tol)
    return replace(run.state, cost_trace=run.cost_trace, converged=run.converged,
                   n_iter=run.n_iter)


# --------------------------------------------------------------------------
# two-stage pipelines


@dataclass
class TwoStageResult:
    labels: np.ndarray
    W: np.ndarray | None = None
    H: np.ndarray | None = None
    converged: bool = True
    n_iter: int = 0


def kmeans_baseline(X, K, rng=None):
    r = kmeans_lloyd(np.asarray(X, dtype=float), K, rng=np.random.default_rng(rng))
    return TwoStageResult(r.labels, converged=True, n_iter=r.n_iter)


def nmf_km(X, F, K, rng=None, mu_balance=0.0, nmf=None):
    """NMF followed by K-means on the columns of ``H``."""
    rng = np.random.default_rng(rng)
    if nmf is None:
        nmf = nmf_solve(X, F, mu_balance=mu_balance, rng=rng)
    r = kmeans_lloyd(nmf.H, K, rng=rng)
    return TwoStageResult(r.labels, nmf.W, nmf.H, nmf.converged, nmf.n_iter)


def volmin_km(X, F, K, rng=None, beta=0.1, max_outer=200, warmup=50):
    """Surrogate VolMin (the joint solver with ``lam = 0``), then K-means on ``H``."""
    from .jvkm import JvkmParams, jvkm_solve

    rng = np.random.default_rng(rng)
    params = JvkmParams(F=F, K=K, beta=beta, lam=0.0, max_outer=max_outer, warmup=warmup)
    st = jvkm_solve(X, params, rng=rng)
    r = kmeans_lloyd(st.H, K, rng=rng)
    return TwoStageResult(r.labels, st.W, st.H, st.converged, st.n_iter)
