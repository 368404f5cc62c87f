"""Joint volume-minimisation factorisation and latent K-means.

Cost::

    ||X - W H||^2 + beta tr(W G W^T) + lam ||H - M S||^2,   G = F I - 1 1^T

with every column of ``H`` on the unit simplex.  ``tr(W G W^T)`` equals the
sum of squared distances between all pairs of columns of ``W``, a cheap
stand-in for the simplex volume.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bcd import run_bcd
from .clustering import kmeans_assign, kmeans_centroids, kmeans_lloyd
from .kernels import ridge_volmin_w, simplex_gram, volume_gram

BLOCKS = ("W", "H", "M", "S")


@dataclass(frozen=True)
class JvkmParams:
    F: int
    K: int
    beta: float = 0.1
    lam: float = 1.0
    max_outer: int = 200
    tol: float = 1e-6
    schedule: str = "cyclic"
    warmup: int = 50
    n_init: int = 1

    def __post_init__(self):
        for name in ("beta", "lam"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")


@dataclass
class JvkmState:
    W: np.ndarray
    H: np.ndarray
    M: np.ndarray | None = None
    labels: np.ndarray | None = None
    cost_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    unconverged_subproblems: int = 0


def volume_term(W):
    return float(np.trace(W @ volume_gram(W.shape[1]) @ W.T))


def jvkm_cost(state, X, params):
    R = X - state.W @ state.H
    c = float(np.sum(R * R)) + params.beta * volume_term(state.W)
    if params.lam and state.labels is not None:
        C = state.H - state.M[:, state.labels]
        c += params.lam * float(np.sum(C * C))
    return c


def jvkm_step_block(state, X, params, block):
    if block == "W":
        return replace(state, W=ridge_volmin_w(X, state.H, params.beta))
    if block == "H":
        W = state.W
        Q = W.T @ W
        q = W.T @ X
        if params.lam and state.labels is not None:
            Q = Q + params.lam * np.eye(W.shape[1])
            q = q + params.lam * state.M[:, state.labels]
        res = simplex_gram(Q, q, x0=state.H)
        return replace(state, H=res.x,
                       unconverged_subproblems=state.unconverged_subproblems + (not res.converged))
    if block == "M":
        return replace(state, M=kmeans_centroids(state.H, state.labels, params.K))
    if block == "S":
        return replace(state, labels=kmeans_assign(state.H, state.M))
    raise ValueError(f"unknown block {block!r}; expected one of {BLOCKS}")


def _run(state, X, params, blocks):
    fns = {b: (lambda s, b=b: jvkm_step_block(s, X, params, b)) for b in blocks}
    run = run_bcd(state, fns, lambda s: jvkm_cost(s, X, params),
                  schedule=params.schedule, max_outer=params.max_outer, tol=params.tol)
    return replace(run.state, cost_trace=run.cost_trace, converged=run.converged,
                   n_iter=run.n_iter)


def jvkm_init(X, params, rng=None):
    """Random Dirichlet(1) ``H``, a ``lam = 0`` warm-up, then K-means on ``H``."""
    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=float)
    J = X.shape[1]
    H = rng.dirichlet(np.ones(params.F), size=J).T
    state = JvkmState(W=ridge_volmin_w(X, H, params.beta), H=H)
    if params.warmup:
        warm = replace(params, lam=0.0, max_outer=params.warmup, schedule="cyclic")
        state = _run(state, X, warm, ("W", "H"))
    if params.lam:
        km = kmeans_lloyd(state.H, params.K, rng=rng, n_init=params.n_init)
        state = replace(state, M=km.centroids, labels=km.labels)
    return replace(state, cost_trace=[], converged=False, n_iter=0)


def jvkm_solve(X, params, init=None, rng=None):
    """Four-block alternation; with ``lam = 0`` only ``W`` and ``H`` move."""
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    state = init if init is not None else jvkm_init(X, params, rng)
    blocks = BLOCKS if params.lam else ("W", "H")
    return _run(state, X, params, blocks)
