"""Joint nonnegative PARAFAC and K-means on the rows of one loading matrix.

Cost (``reg="fro"``)::

    ||X_(1) - (C ⊙ B)(D A)^T||^2 + lam ||A - S M||^2
        + eta (||B||^2 + ||C||^2) + mu ||A - Z||^2

with ``A, B, C >= 0``, ``D = diag(d)``, unit-norm rows in ``Z`` and one row
of ``S`` per cluster assignment.  ``reg="l1"`` swaps the squared norms on
``B`` and ``C`` for their entry sums (``l1`` norms, since they are
nonnegative).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bcd import run_bcd
from .clustering import kmeans_assign, kmeans_centroids, kmeans_lloyd
from .jnkm import d_block, h_block, z_block
from .kernels import cp_to_tensor, khatri_rao, nls_gram, unfold

BLOCKS = ("A", "B", "C", "D", "Z", "M", "S")
REGS = ("fro", "l1")

# modes are numbered 1..3; a permutation lists the source mode of each slot
_PERMS = {1: (0, 1, 2), 2: (1, 0, 2), 3: (2, 0, 1)}


@dataclass(frozen=True)
class JtkmParams:
    F: int
    K: int
    lam: float = 1.0
    eta: float = 0.1
    mu: float = 100.0
    reg: str = "fro"
    max_outer: int = 200
    tol: float = 1e-6
    schedule: str = "cyclic"
    n_init: int = 1
    cluster_mode: int = 1

    def __post_init__(self):
        for name in ("lam", "mu", "eta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if self.reg not in REGS:
            raise ValueError(f"reg must be one of {REGS}, got {self.reg!r}")
        if self.cluster_mode not in _PERMS:
            raise ValueError("cluster_mode must be 1, 2 or 3")


@dataclass
class JtkmState:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    d: np.ndarray
    Z: np.ndarray
    M: np.ndarray
    labels: np.ndarray
    cost_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    unconverged_subproblems: int = 0

    @property
    def scaled_A(self):
        return self.d[:, None] * self.A


def log_transform(T):
    """``x -> log2(x) + 1`` on the nonzero entries (zeros stay zero)."""
    T = np.asarray(T, dtype=float)
    out = np.zeros_like(T)
    nz = T != 0
    out[nz] = np.log2(T[nz]) + 1.0
    return out


def _penalty(Y, reg):
    return float(np.sum(Y * Y)) if reg == "fro" else float(np.sum(np.abs(Y)))


def _fit(T, A, B, C):
    R = T - cp_to_tensor(A, B, C)
    return float(np.sum(R * R))


def _factor_nls(Xm, P, eta, reg, Y0):
    """Rows of ``Y`` in ``argmin_{Y>=0} ||Xm - P Y^T||^2 + eta * pen(Y)``."""
    Q = P.T @ P
    q = P.T @ Xm
    if reg == "fro":
        res = nls_gram(Q + eta * np.eye(Q.shape[0]), q, x0=Y0.T)
    else:
        res = nls_gram(Q, q, x0=Y0.T, l1=0.5 * eta)
    return res.x.T, res.converged


# --------------------------------------------------------------------------
# plain regularised NTF (the two-stage baseline)


def ntf_cost(T, A, B, C, eta, reg="fro"):
    pen = sum(_penalty(Y, reg) for Y in (A, B, C))
    return _fit(T, A, B, C) + eta * pen


def ntf_solve(T, F, eta=0.1, reg="fro", rng=None, max_iters=200, tol=1e-6, init=None):
    """Alternating NLS for nonnegative PARAFAC; returns ``(A, B, C, run)``."""
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T)):
        raise ValueError("tensor contains non-finite values")
    if reg not in REGS:
        raise ValueError(f"reg must be one of {REGS}, got {reg!r}")
    rng = np.random.default_rng(rng)
    I, J, L = T.shape
    X1, X2, X3 = unfold(T, 1), unfold(T, 2), unfold(T, 3)
    if init is None:
        B = rng.uniform(size=(J, F))
        C = rng.uniform(size=(L, F))
        A, _ = _factor_nls(X1, khatri_rao(C, B), eta, reg, np.zeros((I, F)))
    else:
        A, B, C = (np.asarray(Y, dtype=float) for Y in init)

    def a_step(s):
        A, B, C = s
        return _factor_nls(X1, khatri_rao(C, B), eta, reg, A)[0], B, C

    def b_step(s):
        A, B, C = s
        return A, _factor_nls(X2, khatri_rao(C, A), eta, reg, B)[0], C

    def c_step(s):
        A, B, C = s
        return A, B, _factor_nls(X3, khatri_rao(B, A), eta, reg, C)[0]

    run = run_bcd((A, B, C), {"A": a_step, "B": b_step, "C": c_step},
                  lambda s: ntf_cost(T, *s, eta, reg), max_outer=max_iters, tol=tol)
    A, B, C = run.state
    return A, B, C, run


# --------------------------------------------------------------------------
# joint solver


def jtkm_cost(state, T, params):
    R = state.A - state.M[:, state.labels].T
    V = state.A - state.Z
    return (
        _fit(T, state.scaled_A, state.B, state.C)
        + params.lam * float(np.sum(R * R))
        + params.eta * (_penalty(state.B, params.reg) + _penalty(state.C, params.reg))
        + params.mu * float(np.sum(V * V))
    )


def jtkm_step_block(state, T, params, block, unfoldings=None):
    X1, X2, X3 = unfoldings or (unfold(T, 1), unfold(T, 2), unfold(T, 3))
    s = state
    if block == "A":
        res = h_block(X1, khatri_rao(s.C, s.B), s.d, s.M[:, s.labels], params.lam,
                      s.Z.T, params.mu, H0=s.A.T)
        return replace(s, A=res.x.T,
                       unconverged_subproblems=s.unconverged_subproblems + (not res.converged))
    if block == "B":
        B, ok = _factor_nls(X2, khatri_rao(s.C, s.scaled_A), params.eta, params.reg, s.B)
        return replace(s, B=B, unconverged_subproblems=s.unconverged_subproblems + (not ok))
    if block == "C":
        C, ok = _factor_nls(X3, khatri_rao(s.B, s.scaled_A), params.eta, params.reg, s.C)
        return replace(s, C=C, unconverged_subproblems=s.unconverged_subproblems + (not ok))
    if block == "D":
        return replace(s, d=d_block(X1, khatri_rao(s.C, s.B), s.A.T))
    if block == "Z":
        return replace(s, Z=z_block(s.A.T).T)
    if block == "M":
        return replace(s, M=kmeans_centroids(s.A.T, s.labels, params.K))
    if block == "S":
        return replace(s, labels=kmeans_assign(s.A.T, s.M))
    raise ValueError(f"unknown block {block!r}; expected one of {BLOCKS}")


def jtkm_init(T, params, rng=None, ntf=None, labels=None):
    """Start from an NTF solution: unit-norm rows of ``A`` with their norms in
    ``d``, and labels from K-means on the raw ``A`` rows (the NTF-KM answer)."""
    rng = np.random.default_rng(rng)
    if ntf is None:
        ntf = ntf_solve(T, params.F, eta=params.eta, reg=params.reg, rng=rng)
    A0, B, C = ntf[:3]
    if labels is None:
        labels = kmeans_lloyd(A0.T, params.K, rng=rng, n_init=params.n_init).labels
    norms = np.linalg.norm(A0, axis=1)
    A = z_block(A0.T).T
    d = np.where(norms > 0, norms, 1.0)
    M = kmeans_centroids(A.T, labels, params.K)
    return JtkmState(A=A, B=B.copy(), C=C.copy(), d=d, Z=A.copy(), M=M,
                     labels=np.asarray(labels))


def permute_modes(T, mode):
    """Move ``mode`` to the front (modes 1..3), keeping the other two in order."""
    return np.asarray(T).transpose(_PERMS[mode])


def jtkm_solve(T, params, init=None, rng=None):
    """Seven-block alternation A, B, C, D, Z, M, S.

    With ``cluster_mode`` other than 1 the tensor is permuted so that mode
    comes first; the returned ``A`` then holds that mode's loadings and
    ``B``/``C`` the remaining two in their original order.
    """
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T)):
        raise ValueError("tensor contains non-finite values")
    T = permute_modes(T, params.cluster_mode)
    state = init if init is not None else jtkm_init(T, params, rng)
    state = replace(state, cost_trace=[], converged=False, n_iter=0)
    unf = (unfold(T, 1), unfold(T, 2), unfold(T, 3))
    fns = {b: (lambda s, b=b: jtkm_step_block(s, T, params, b, unf)) for b in BLOCKS}
    run = run_bcd(state, fns, lambda s: jtkm_cost(s, T, params),
                  schedule=params.schedule, max_outer=params.max_outer, tol=params.tol)
    return replace(run.state, cost_trace=run.cost_trace, converged=run.converged,
                   n_iter=run.n_iter)
