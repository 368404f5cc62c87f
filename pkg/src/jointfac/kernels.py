"""Dense matrix/tensor primitives and constrained least-squares subsolvers.

The two column-separable quadratic programs used throughout the package,

    min_H  sum_j  1/2 h_j^T Q_j h_j - q_j^T h_j (+ tau 1^T h_j)

subject to either ``h_j >= 0`` (NLS) or ``h_j`` on the unit simplex, are
solved with scaled-form ADMM.  Once ADMM has identified the active set, each
column is polished by an exact solve restricted to its support, followed by a
few principal-pivoting exchanges.  A column is only replaced by its polished
value when that value passes the KKT test, so the polish can never make a
result worse than plain ADMM.

Callers that already hold the Gram form (``Q = G^T G``, ``q = G^T Y``) use
:func:`nls_gram` / :func:`simplex_gram` directly; ``Q`` may be a single
``(n, n)`` matrix shared by all columns or a ``(p, n, n)`` stack with one
matrix per column.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

__all__ = [
    "ConvergenceWarning",
    "SolverOptions",
    "QPResult",
    "khatri_rao",
    "unfold",
    "fold",
    "project_simplex",
    "nls_solve",
    "nls_gram",
    "simplex_ls_solve",
    "simplex_gram",
    "volume_gram",
    "ridge_volmin_w",
    "chol_solve",
]


class ConvergenceWarning(UserWarning):
    """Raised (as a warning) when an iterative subsolver hits its cap."""


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iters: int = 300
    polish: bool = True
    pivot_rounds: int = 12


@dataclass
class QPResult:
    x: np.ndarray
    converged: bool
    iterations: int
    kkt: float


_DEFAULT = SolverOptions()


def _check_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise ValueError("non-finite value in solver input")


# --------------------------------------------------------------------------
# tensor helpers


def khatri_rao(A, B):
    """Column-wise Kronecker product ``A ⊙ B`` of shape ``(I*J, F)``.

    Row ``i*J + j`` of column ``f`` holds ``A[i, f] * B[j, f]``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if A.shape[1] != B.shape[1]:
        raise ValueError(
            f"column mismatch in khatri_rao: {A.shape[1]} vs {B.shape[1]}"
        )
    I, F = A.shape
    J = B.shape[0]
    return (A[:, None, :] * B[None, :, :]).reshape(I * J, F)


# unfold(T, m) = T.transpose(perm).reshape(-1, T.shape[m-1]); the first
# remaining index varies fastest in each column.
_UNFOLD_PERM = {1: (2, 1, 0), 2: (2, 0, 1), 3: (1, 0, 2)}


def unfold(T, mode):
    """Matrix unfolding of a three-way array.

    Mode 1 gives ``(J*L, I)`` with column ``i`` equal to ``vec(T[i, :, :])``,
    mode 2 gives ``(I*L, J)`` and mode 3 gives ``(I*J, L)``.  With this
    layout ``unfold(T, 1) == khatri_rao(C, B) @ A.T`` for ``T = [[A, B, C]]``,
    and likewise ``(C ⊙ A) B^T`` and ``(B ⊙ A) C^T`` for modes 2 and 3.
    """
    if mode not in _UNFOLD_PERM:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    T = np.asarray(T, dtype=float)
    if T.ndim != 3:
        raise ValueError("unfold expects a three-way array")
    return T.transpose(_UNFOLD_PERM[mode]).reshape(-1, T.shape[mode - 1])


def fold(X, mode, shape):
    """Inverse of :func:`unfold`."""
    if mode not in _UNFOLD_PERM:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    perm = _UNFOLD_PERM[mode]
    permuted_shape = tuple(shape[p] for p in perm)
    X = np.asarray(X, dtype=float)
    if X.size != int(np.prod(shape)):
        raise ValueError("size mismatch in fold")
    return X.reshape(permuted_shape).transpose(np.argsort(perm))


def cp_to_tensor(A, B, C):
    """Dense tensor ``sum_f A[:, f] ∘ B[:, f] ∘ C[:, f]``."""
    return np.einsum("if,jf,lf->ijl", A, B, C)


# --------------------------------------------------------------------------
# projections


def project_simplex(V):
    """Euclidean projection of every column of ``V`` onto the unit simplex."""
    V = np.asarray(V, dtype=float)
    squeeze = V.ndim == 1
    if squeeze:
        V = V[:, None]
    n = V.shape[0]
    U = -np.sort(-V, axis=0)
    css = np.cumsum(U, axis=0) - 1.0
    idx = np.arange(1, n + 1)[:, None]
    cond = U - css / idx > 0
    # last index where cond holds; cond[0] is always true
    rho = n - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[rho, np.arange(V.shape[1])] / (rho + 1)
    out = np.maximum(V - theta, 0.0)
    return out[:, 0] if squeeze else out


# --------------------------------------------------------------------------
# column-separable QP machinery


def _matvec(Q, X):
    if Q.ndim == 2:
        return Q @ X
    return np.einsum("pij,jp->ip", Q, X)


def _objective(Q, q, X, tau):
    val = 0.5 * np.sum(X * _matvec(Q, X), axis=0) - np.sum(q * X, axis=0)
    if tau:
        val = val + tau * X.sum(axis=0)
    return val


def _kkt_nonneg(Q, q, X, tau):
    g = _matvec(Q, X) - q + tau
    pg = np.where(X > 0, g, np.minimum(g, 0.0))
    scale = np.linalg.norm(q, axis=0) + np.linalg.norm(_matvec(Q, X), axis=0)
    return np.linalg.norm(pg, axis=0) / np.maximum(scale, 1e-300)


def _kkt_simplex(Q, q, X):
    g = _matvec(Q, X) - q
    on = X > 0
    # multiplier estimate: mean gradient over the support
    cnt = np.maximum(on.sum(axis=0), 1)
    nu = np.where(on, g, 0.0).sum(axis=0) / cnt
    r = g - nu
    pg = np.where(on, r, np.minimum(r, 0.0))
    scale = np.linalg.norm(q, axis=0) + np.linalg.norm(_matvec(Q, X), axis=0)
    return np.linalg.norm(pg, axis=0) / np.maximum(scale, 1e-300)


def _pattern_groups(support):
    n, p = support.shape
    keys = np.packbits(support, axis=0)
    _, inv = np.unique(keys, axis=1, return_inverse=True)
    inv = np.ravel(inv)
    order = np.argsort(inv, kind="stable")
    bounds = np.flatnonzero(np.diff(inv[order])) + 1
    return np.split(order, bounds)


def _restricted_solve(Q, q, support, cols, simplex, tau):
    """Solve the equality-constrained problem on one support pattern."""
    s = support[:, cols[0]]
    n = support.shape[0]
    out = np.zeros((n, len(cols)))
    if not s.any():
        return out
    m = int(s.sum())
    rhs = q[s][:, cols] - tau
    if Q.ndim == 2:
        Qs = Q[np.ix_(s, s)]
        if simplex:
            K = np.zeros((m + 1, m + 1))
            K[:m, :m] = Qs
            K[:m, m] = -1.0
            K[m, :m] = 1.0
            R = np.vstack([rhs, np.ones((1, len(cols)))])
            out[s] = np.linalg.solve(K, R)[:m]
        else:
            out[s] = np.linalg.solve(Qs, rhs)
    else:
        Qs = Q[cols][:, s][:, :, s]
        if simplex:
            K = np.zeros((len(cols), m + 1, m + 1))
            K[:, :m, :m] = Qs
            K[:, :m, m] = -1.0
            K[:, m, :m] = 1.0
            R = np.concatenate([rhs.T, np.ones((len(cols), 1))], axis=1)
            out[s] = np.linalg.solve(K, R[..., None])[:, :m, 0].T
        else:
            out[s] = np.linalg.solve(Qs, rhs.T[..., None])[..., 0].T
    return out


def _polish(Q, q, X, simplex, tau, tol, rounds):
    """Active-set refinement of an approximate solution, column by column."""
    n, p = X.shape
    support = X > 0
    if simplex:
        # the simplex constraint needs at least one active coordinate
        empty = ~support.any(axis=0)
        support[np.argmax(X[:, empty], axis=0), np.flatnonzero(empty)] = True
    best = X.copy()
    done = np.zeros(p, dtype=bool)
    for _ in range(rounds):
        todo = np.flatnonzero(~done)
        if todo.size == 0:
            break
        cand = np.zeros((n, todo.size))
        sub = support[:, todo]
        for grp in _pattern_groups(sub):
            cols = todo[grp]
            try:
                cand[:, grp] = _restricted_solve(Q, q, support, cols, simplex, tau)
            except np.linalg.LinAlgError:
                cand[:, grp] = np.nan
        Qt = Q if Q.ndim == 2 else Q[todo]
        qt = q[:, todo]
        valid = np.all(np.isfinite(cand), axis=0)
        cand = np.where(np.isfinite(cand), cand, 0.0)
        g = _matvec(Qt, cand) - qt + tau
        if simplex:
            cnt = np.maximum(sub.sum(axis=0), 1)
            nu = np.where(sub, g, 0.0).sum(axis=0) / cnt
            g = g - nu
        scale = np.linalg.norm(qt, axis=0) + np.linalg.norm(_matvec(Qt, cand), axis=0)
        eps = tol * np.maximum(scale, 1e-300)
        primal_ok = np.all((cand >= 0) | ~sub, axis=0)
        dual_ok = np.all((g >= -eps) | sub, axis=0)
        ok = valid & primal_ok & dual_ok
        acc = todo[ok]
        best[:, acc] = np.maximum(cand[:, ok], 0.0)
        done[acc] = True
        # principal pivoting exchange for the rest
        new_sub = (sub & (cand > 0)) | (~sub & (g < -eps))
        if simplex:
            empty = ~new_sub.any(axis=0)
            if empty.any():
                new_sub[np.argmin(g[:, empty], axis=0), np.flatnonzero(empty)] = True
        stuck = ~ok & ~valid
        new_sub[:, stuck] = sub[:, stuck]
        support[:, todo] = new_sub
    return best, done


def _admm(Q, q, X0, simplex, tau, opts):
    n, p = q.shape
    batched = Q.ndim == 3
    if batched:
        rho = np.trace(Q, axis1=1, axis2=2) / n
        rho = np.maximum(rho, 1e-12 * max(1.0, np.max(rho)))
        Kinv = np.linalg.inv(Q + rho[:, None, None] * np.eye(n))
        rho_row = rho[None, :]
    else:
        rho = max(np.trace(Q) / n, 1e-12)
        Kinv = sla.cho_solve(sla.cho_factor(Q + rho * np.eye(n)), np.eye(n))
        rho_row = rho
    z = X0.copy()
    u = np.zeros_like(z)
    qn = np.linalg.norm(q)
    it = 0
    converged = False
    for it in range(1, opts.max_iters + 1):
        x = _matvec(Kinv, q + rho_row * (z - u))
        z_old = z
        v = x + u
        if simplex:
            z = project_simplex(v)
        else:
            z = np.maximum(v - tau / rho_row, 0.0) if tau else np.maximum(v, 0.0)
        u = v - z
        r = np.linalg.norm(x - z)
        s = np.linalg.norm(rho_row * (z - z_old))
        scale = max(np.linalg.norm(x), np.linalg.norm(z), 1e-300)
        dscale = max(np.linalg.norm(rho_row * u), qn * 1e-3, 1e-300)
        if r <= opts.tolerance * scale and s <= opts.tolerance * dscale:
            converged = True
            break
    return z, converged, it


def _solve_qp(Q, q, x0, simplex, tau, opts):
    Q = np.asarray(Q, dtype=float)
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        res = _solve_qp(Q, q[:, None], None if x0 is None else np.asarray(x0)[:, None],
                        simplex, tau, opts)
        res.x = res.x[:, 0]
        return res
    _check_finite(Q, q, x0)
    n, p = q.shape
    if Q.shape[-2:] != (n, n) or (Q.ndim == 3 and Q.shape[0] != p):
        raise ValueError(f"Gram shape {Q.shape} inconsistent with rhs {q.shape}")
    if simplex and tau:
        raise ValueError("l1 weight is constant on the simplex; use tau=0")
    if x0 is None:
        x0 = np.full((n, p), 1.0 / n) if simplex else np.zeros((n, p))
    else:
        x0 = np.asarray(x0, dtype=float)
        x0 = project_simplex(x0) if simplex else np.maximum(x0, 0.0)

    X, converged, iters = _admm(Q, q, x0, simplex, tau, opts)
    if opts.polish:
        X, _ = _polish(Q, q, X, simplex, tau, opts.tolerance, opts.pivot_rounds)
    if simplex:
        X = np.maximum(X, 0.0)
        X = X / X.sum(axis=0, keepdims=True)

    # never return anything worse than the warm start (or zero for NLS)
    f = _objective(Q, q, X, tau)
    f0 = _objective(Q, q, x0, tau)
    worse = f0 < f
    if worse.any():
        X[:, worse] = x0[:, worse]
        f = np.minimum(f, f0)
    if not simplex:
        neg = f > 0
        if neg.any():
            X[:, neg] = 0.0

    kkt = _kkt_simplex(Q, q, X) if simplex else _kkt_nonneg(Q, q, X, tau)
    kkt_max = float(kkt.max()) if kkt.size else 0.0
    converged = converged or kkt_max <= opts.tolerance
    return QPResult(X, converged, iters, kkt_max)


def nls_gram(Q, q, x0=None, l1=0.0, opts=_DEFAULT):
    """Nonnegative QP ``min_{x>=0} 1/2 x^T Q x - q^T x + l1 * 1^T x``."""
    return _solve_qp(Q, q, x0, False, float(l1), opts)


def simplex_gram(Q, q, x0=None, opts=_DEFAULT):
    """Column-wise ``min 1/2 x^T Q x - q^T x`` over the unit simplex."""
    return _solve_qp(Q, q, x0, True, 0.0, opts)


def _warn(res, what):
    if not res.converged:
        warnings.warn(
            f"{what} stopped after {res.iterations} iterations "
            f"(KKT residual {res.kkt:.2e})",
            ConvergenceWarning,
            stacklevel=3,
        )


def nls_solve(G, Y, opts=_DEFAULT, x0=None, l1=0.0):
    """Nonnegative least squares ``argmin_{H>=0} ||G H - Y||_F^2``.

    Ridge or target terms are passed by row-stacking ``G`` and ``Y``.  With
    ``l1 > 0`` the penalty ``l1 * sum(H)`` is added (the ADMM splitting
    variable takes a shifted projection, i.e. a nonnegative soft-threshold).
    """
    G = np.asarray(G, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _check_finite(G, Y)
    if G.ndim != 2 or G.shape[0] != Y.shape[0]:
        raise ValueError(f"shape mismatch: G {G.shape}, Y {Y.shape}")
    # ||GH - Y||^2 = 2 * (1/2 h^T G^T G h - (G^T Y)^T h) + const
    res = nls_gram(G.T @ G, G.T @ Y, x0=x0, l1=0.5 * l1, opts=opts)
    _warn(res, "nls_solve")
    return res.x


def simplex_ls_solve(G, Y, opts=_DEFAULT, x0=None):
    """``argmin ||G H - Y||_F^2`` with every column of ``H`` on the unit simplex."""
    G = np.asarray(G, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _check_finite(G, Y)
    if G.ndim != 2 or G.shape[0] != Y.shape[0]:
        raise ValueError(f"shape mismatch: G {G.shape}, Y {Y.shape}")
    res = simplex_gram(G.T @ G, G.T @ Y, x0=x0, opts=opts)
    _warn(res, "simplex_ls_solve")
    return res.x


# --------------------------------------------------------------------------
# closed-form ridge step


def chol_solve(N, B, what="normal matrix"):
    """Solve ``N X = B`` for symmetric PSD ``N``; retries once with jitter."""
    N = np.asarray(N, dtype=float)
    try:
        return sla.cho_solve(sla.cho_factor(N), B)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        pass
    jitter = 1e-12 * max(np.trace(N), 1e-300)
    try:
        return sla.cho_solve(sla.cho_factor(N + jitter * np.eye(N.shape[0])), B)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise np.linalg.LinAlgError(
            f"{what} is singular even after adding {jitter:.1e} jitter"
        ) from exc


def volume_gram(F):
    """``F I - 1 1^T``; ``tr(W G W^T)`` sums squared pairwise column distances."""
    return F * np.eye(F) - np.ones((F, F))


def ridge_volmin_w(X, H, beta):
    """``argmin_W ||X - W H||_F^2 + beta * tr(W G W^T)`` in closed form."""
    X = np.asarray(X, dtype=float)
    H = np.asarray(H, dtype=float)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if X.shape[1] != H.shape[1]:
        raise ValueError(f"shape mismatch: X {X.shape}, H {H.shape}")
    F = H.shape[0]
    N = H @ H.T + beta * volume_gram(F)
    return chol_solve(N, H @ X.T, what="H H^T + beta G").T
