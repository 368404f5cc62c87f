"""Joint NMF and latent K-means with a unit-norm splitting variable.

Cost::

    ||X - W H D||^2 + lam ||H - M S||^2 + eta ||W||^2 + mu ||H - Z||^2

with ``W, H >= 0``, ``D = diag(d)``, unit-norm columns in ``Z`` and one-hot
``S``.  Every block is minimised exactly, so the cost never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bcd import run_bcd
from .clustering import kmeans_assign, kmeans_centroids, kmeans_lloyd
from .kernels import nls_gram

BLOCKS = ("H", "W", "D", "Z", "M", "S")


@dataclass(frozen=True)
class JnkmParams:
    F: int
    K: int
    lam: float = 1.0
    mu: float = 100.0
    eta: float = 0.1
    max_outer: int = 200
    tol: float = 1e-6
    schedule: str = "cyclic"
    n_init: int = 1

    def __post_init__(self):
        for name in ("lam", "mu", "eta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if self.F < 1 or self.K < 1:
            raise ValueError("F and K must be positive")


@dataclass
class JnkmState:
    W: np.ndarray
    H: np.ndarray
    d: np.ndarray
    Z: np.ndarray
    M: np.ndarray
    labels: np.ndarray
    cost_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    unconverged_subproblems: int = 0


# --------------------------------------------------------------------------
# block updates shared with the K-subspace variant


def h_block(X, W, d, target, lam, Z=None, mu=0.0, H0=None):
    """``argmin_{H>=0} ||X - W H D||^2 + lam ||H - target||^2 + mu ||H - Z||^2``."""
    F = W.shape[1]
    WtW = W.T @ W
    q = (W.T @ X) * d + lam * target
    if mu:
        q = q + mu * Z
    if np.all(d == d[0]):
        Q = d[0] ** 2 * WtW + (lam + mu) * np.eye(F)
    else:
        Q = (d**2)[:, None, None] * WtW + (lam + mu) * np.eye(F)
    return nls_gram(Q, q, x0=H0)


def w_block(X, P, eta, W0=None):
    """``argmin_{W>=0} ||X - W P||^2 + eta ||W||^2`` (rows solved jointly)."""
    Q = P @ P.T + eta * np.eye(P.shape[0])
    res = nls_gram(Q, P @ X.T, x0=None if W0 is None else W0.T)
    return res.x.T, res.converged


def d_block(X, W, H):
    """Closed-form per-column scale ``b^T x / b^T b`` with ``b = W h``."""
    B = W @ H
    bb = np.sum(B * B, axis=0)
    bx = np.sum(B * X, axis=0)
    small = bb < 1e-15
    return np.where(small, 1.0, bx / np.where(small, 1.0, bb))


def z_block(H):
    """Unit-normalised columns; an all-zero column maps to ``e_1``."""
    norms = np.linalg.norm(H, axis=0)
    Z = H / np.where(norms > 0, norms, 1.0)
    zero = norms == 0
    if zero.any():
        Z[:, zero] = 0.0
        Z[0, zero] = 1.0
    return Z


# --------------------------------------------------------------------------


def jnkm_cost(state, X, params):
    R = X - (state.W @ state.H) * state.d
    C = state.H - state.M[:, state.labels]
    V = state.H - state.Z
    return float(
        np.sum(R * R)
        + params.lam * np.sum(C * C)
        + params.eta * np.sum(state.W * state.W)
        + params.mu * np.sum(V * V)
    )


def jnkm_step_block(state, X, params, block):
    """Return a new state with only ``block`` re-optimised."""
    if block == "H":
        res = h_block(X, state.W, state.d, state.M[:, state.labels], params.lam,
                      state.Z, params.mu, H0=state.H)
        return replace(state, H=res.x,
                       unconverged_subproblems=state.unconverged_subproblems + (not res.converged))
    if block == "W":
        W, ok = w_block(X, state.H * state.d, params.eta, W0=state.W)
        return replace(state, W=W,
                       unconverged_subproblems=state.unconverged_subproblems + (not ok))
    if block == "D":
        return replace(state, d=d_block(X, state.W, state.H))
    if block == "Z":
        return replace(state, Z=z_block(state.H))
    if block == "M":
        return replace(state, M=kmeans_centroids(state.H, state.labels, params.K))
    if block == "S":
        return replace(state, labels=kmeans_assign(state.H, state.M))
    raise ValueError(f"unknown block {block!r}; expected one of {BLOCKS}")


def jnkm_init(X, params, rng=None, nmf=None, labels=None):
    """Initial state from an NMF solution (computed here unless given).

    ``labels`` default to K-means on the raw NMF ``H``, i.e. the NMF-KM
    answer, so the joint solver starts where the two-stage method stops.
    ``H`` is then column-normalised, ``d_j = ||X[:, j]||``, ``W`` is re-solved
    for that scaling and ``M`` holds the means of the normalised columns.
    """
    from .baselines import nmf_solve

    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=float)
    if nmf is None:
        nmf = nmf_solve(X, params.F, rng=rng)
    if labels is None:
        labels = kmeans_lloyd(nmf.H, params.K, rng=rng, n_init=params.n_init).labels
    H = z_block(nmf.H)
    d = np.linalg.norm(X, axis=0)
    d = np.where(d > 0, d, 1.0)
    W, _ = w_block(X, H * d, params.eta)
    M = kmeans_centroids(H, labels, params.K)
    return JnkmState(W=W, H=H, d=d, Z=H.copy(), M=M, labels=np.asarray(labels))


def jnkm_solve(X, params, init=None, rng=None):
    """Alternate the six block updates until the cost stalls.

    ``init`` may be a :class:`JnkmState`; otherwise :func:`jnkm_init` is used.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    state = init if init is not None else jnkm_init(X, params, rng)
    state = replace(state, cost_trace=[], converged=False, n_iter=0)
    blocks = {b: (lambda s, b=b: jnkm_step_block(s, X, params, b)) for b in BLOCKS}
    run = run_bcd(state, blocks, lambda s: jnkm_cost(s, X, params),
                  schedule=params.schedule, max_outer=params.max_outer, tol=params.tol)
    return replace(run.state, cost_trace=run.cost_trace, converged=run.converged,
                   n_iter=run.n_iter)
