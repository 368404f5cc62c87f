"""Joint NMF and K-subspace clustering of the latent columns.

Cost::

    ||X - W H D||^2 + eta ||W||^2 + lam sum_j dist(h_j, k_j)^2 [+ mu ||H - Z||^2]

where ``dist(h, k) = ||(I - U_k U_k^T)(h - mu_k)||`` is the distance to the
``k``-th affine subspace (the subspace coordinates are eliminated in closed
form).  ``D`` and ``Z`` only take part when ``mu_split > 0``; otherwise
``D = I`` and ``H`` is unconstrained in norm.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bcd import run_bcd
from .clustering import (SubspaceModel, kmeans_lloyd, ksubspace_assign, ksubspace_cost,
                         ksubspace_fit)
from .jnkm import d_block, w_block, z_block
from .kernels import nls_gram


@dataclass(frozen=True)
class JnksParams:
    F: int
    K: int
    ranks: Optional[tuple] = None
    lam: float = 1.0
    eta: float = 0.1
    mu_split: float = 0.0
    max_outer: int = 200
    tol: float = 1e-6
    schedule: str = "cyclic"
    n_init: int = 1

    def __post_init__(self):
        for name in ("lam", "eta", "mu_split"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        ranks = self.ranks if self.ranks is not None else (max(self.F // self.K, 1),) * self.K
        ranks = tuple(int(r) for r in ranks)
        if len(ranks) != self.K or any(r < 0 or r > self.F for r in ranks):
            raise ValueError(f"ranks {ranks} must be K={self.K} values in [0, F={self.F}]")
        object.__setattr__(self, "ranks", ranks)

    @property
    def blocks(self):
        base = ("H", "W")
        return base + (("D", "Z") if self.mu_split else ()) + ("U", "S")


@dataclass
class JnksState:
    W: np.ndarray
    H: np.ndarray
    model: SubspaceModel
    labels: np.ndarray
    d: Optional[np.ndarray] = None
    Z: Optional[np.ndarray] = None
    cost_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    unconverged_subproblems: int = 0
    degenerate_fits: int = 0


def _scale(state):
    return 1.0 if state.d is None else state.d


def jnks_cost(state, X, params):
    R = X - (state.W @ state.H) * _scale(state)
    c = (float(np.sum(R * R)) + params.eta * float(np.sum(state.W * state.W))
         + params.lam * ksubspace_cost(state.H, state.model, state.labels))
    if params.mu_split:
        V = state.H - state.Z
        c += params.mu_split * float(np.sum(V * V))
    return c


def h_subspace_block(X, W, d, model, labels, lam, Z=None, mu=0.0, H0=None):
    """Exact ``H`` update with the subspace penalty written as a quadratic.

    Column ``j`` in cluster ``k`` solves a nonnegative QP with
    ``Q = d_j^2 W^T W + lam (I - U_k U_k^T) + mu I`` and
    ``q = d_j W^T x_j + lam (I - U_k U_k^T) mu_k + mu z_j``.
    """
    F = W.shape[1]
    J = X.shape[1]
    d = np.ones(J) if d is None else np.broadcast_to(d, (J,))
    WtW = W.T @ W
    proj = np.stack([np.eye(F) - U @ U.T for U in model.bases])
    Q = (d**2)[:, None, None] * WtW + lam * proj[labels] + mu * np.eye(F)
    q = (W.T @ X) * d + lam * np.einsum("kfg,gk->fk", proj, model.means)[:, labels]
    if mu:
        q = q + mu * Z
    return nls_gram(Q, q, x0=H0)


def jnks_step_block(state, X, params, block):
    s = state
    if block == "H":
        res = h_subspace_block(X, s.W, s.d, s.model, s.labels, params.lam,
                               s.Z, params.mu_split, H0=s.H)
        return replace(s, H=res.x,
                       unconverged_subproblems=s.unconverged_subproblems + (not res.converged))
    if block == "W":
        W, ok = w_block(X, s.H * _scale(s), params.eta, W0=s.W)
        return replace(s, W=W, unconverged_subproblems=s.unconverged_subproblems + (not ok))
    if block == "D":
        return replace(s, d=d_block(X, s.W, s.H))
    if block == "Z":
        return replace(s, Z=z_block(s.H))
    if block == "U":
        counts = np.bincount(s.labels, minlength=params.K)
        small = int(np.sum(counts < np.asarray(params.ranks) + 1))
        if small:
            warnings.warn(f"{small} cluster(s) too small for their subspace rank; "
                          "keeping an exact or previous fit", RuntimeWarning, stacklevel=2)
        model = ksubspace_fit(s.H, s.labels, params.ranks, strict=False, previous=s.model)
        return replace(s, model=model, degenerate_fits=s.degenerate_fits + small)
    if block == "S":
        return replace(s, labels=ksubspace_assign(s.H, s.model))
    raise ValueError(f"unknown block {block!r}; expected one of {params.blocks}")


def jnks_init(X, params, rng=None, nmf=None, labels=None):
    """NMF for ``(W, H)``, K-means on ``H`` for the labels, then a subspace fit."""
    from .baselines import nmf_solve

    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=float)
    if nmf is None:
        nmf = nmf_solve(X, params.F, rng=rng)
    if labels is None:
        labels = kmeans_lloyd(nmf.H, params.K, rng=rng, n_init=params.n_init).labels
    labels = np.asarray(labels)
    W, H, d, Z = nmf.W, nmf.H, None, None
    if params.mu_split:
        H = z_block(nmf.H)
        d = np.linalg.norm(X, axis=0)
        d = np.where(d > 0, d, 1.0)
        W, _ = w_block(X, H * d, params.eta)
        Z = H.copy()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = ksubspace_fit(H, labels, params.ranks, strict=False)
    return JnksState(W=W, H=H, model=model, labels=labels, d=d, Z=Z)


def jnks_solve(X, params, init=None, rng=None):
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    state = init if init is not None else jnks_init(X, params, rng)
    state = replace(state, cost_trace=[], converged=False, n_iter=0)
    fns = {b: (lambda s, b=b: jnks_step_block(s, X, params, b)) for b in params.blocks}
    run = run_bcd(state, fns, lambda s: jnks_cost(s, X, params),
                  schedule=params.schedule, max_outer=params.max_outer, tol=params.tol)
    return replace(run.state, cost_trace=run.cost_trace, converged=run.converged,
                   n_iter=run.n_iter)
