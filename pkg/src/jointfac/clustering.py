"""K-means and K-subspace block updates.

Assignments are stored as 0-based integer label vectors; ``one_hot`` gives
the binary K x J view.  Ties always resolve to the lowest cluster index so
that runs are bit-reproducible under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "one_hot",
    "kmeans_assign",
    "kmeans_centroids",
    "kmeans_cost",
    "kmeans_pp",
    "kmeans_lloyd",
    "KMeansResult",
    "SubspaceModel",
    "ClusterTooSmallError",
    "ksubspace_fit",
    "ksubspace_assign",
    "ksubspace_cost",
    "subspace_distances",
]


def one_hot(labels, K):
    labels = np.asarray(labels)
    S = np.zeros((K, labels.size))
    S[labels, np.arange(labels.size)] = 1.0
    return S


def _sq_dists(H, M):
    # explicit differences (not the expanded form) so exact ties stay exact
    diff = H[:, :, None] - M[:, None, :]
    return np.einsum("fjk,fjk->jk", diff, diff)


def kmeans_assign(H, M):
    """Nearest-centroid labels for the columns of ``H``."""
    H = np.asarray(H, dtype=float)
    M = np.asarray(M, dtype=float)
    if H.shape[0] != M.shape[0]:
        raise ValueError(f"dimension mismatch: H {H.shape}, M {M.shape}")
    return np.argmin(_sq_dists(H, M), axis=1)


def kmeans_cost(H, M, labels):
    R = H - M[:, labels]
    return float(np.sum(R * R))


def kmeans_centroids(H, labels, K):
    """Cluster means; empty clusters are reseeded at far-away points.

    An empty cluster's centroid moves onto the point lying farthest from its
    own (new) centroid.  The point keeps its label, so the cost does not
    change here; the next assignment step picks it up.
    """
    H = np.asarray(H, dtype=float)
    labels = np.asarray(labels)
    F, J = H.shape
    counts = np.bincount(labels, minlength=K)
    sums = np.zeros((F, K))
    np.add.at(sums.T, labels, H.T)
    M = np.zeros((F, K))
    filled = counts > 0
    M[:, filled] = sums[:, filled] / counts[filled]
    empty = np.flatnonzero(~filled)
    if empty.size:
        d = np.sum((H - M[:, labels]) ** 2, axis=0)
        order = np.argsort(-d, kind="stable")
        for k, j in zip(empty, order):
            M[:, k] = H[:, j]
    return M


def kmeans_pp(H, K, rng):
    """K-means++ seeding; returns an ``F x K`` centroid matrix."""
    H = np.asarray(H, dtype=float)
    J = H.shape[1]
    idx = [int(rng.integers(J))]
    d = np.sum((H - H[:, [idx[0]]]) ** 2, axis=0)
    for _ in range(1, K):
        total = d.sum()
        if total <= 0:
            j = int(rng.integers(J))
        else:
            j = int(np.searchsorted(np.cumsum(d), rng.random() * total, side="right"))
            j = min(j, J - 1)
        idx.append(j)
        d = np.minimum(d, np.sum((H - H[:, [j]]) ** 2, axis=0))
    return H[:, idx].copy()


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    cost: float
    cost_trace: list
    n_iter: int


def kmeans_lloyd(H, K, init=None, max_iters=100, rng=None, n_init=1):
    """Lloyd iterations on the columns of ``H``.

    ``init`` may be ``None`` (K-means++ with ``rng``), an ``F x K`` centroid
    matrix, or a length-J label vector.  With ``init=None`` and ``n_init > 1``
    the seeding is repeated and the lowest-cost run is returned (the earliest
    one on ties).
    """
    H = np.asarray(H, dtype=float)
    F, J = H.shape
    if J < K:
        raise ValueError(f"need at least K={K} points, got {J}")
    if init is None and n_init > 1:
        rng = np.random.default_rng() if rng is None else rng
        runs = [kmeans_lloyd(H, K, None, max_iters, rng) for _ in range(n_init)]
        return min(runs, key=lambda r: r.cost)
    if init is None:
        rng = np.random.default_rng() if rng is None else rng
        labels = kmeans_assign(H, kmeans_pp(H, K, rng))
        M = None
    else:
        init = np.asarray(init)
        if init.ndim == 1:
            labels = init.astype(int)
            M = None
        else:
            M = init.astype(float)
            labels = kmeans_assign(H, M)
    trace = []
    it = 0
    for it in range(1, max_iters + 1):
        M = kmeans_centroids(H, labels, K)
        trace.append(kmeans_cost(H, M, labels))
        new = kmeans_assign(H, M)
        if np.array_equal(new, labels):
            break
        labels = new
    cost = kmeans_cost(H, M, labels)
    trace.append(cost)
    return KMeansResult(M, labels, cost, trace, it)


# --------------------------------------------------------------------------
# K-subspace


class ClusterTooSmallError(ValueError):
    def __init__(self, cluster, size, rank):
        super().__init__(
            f"cluster {cluster} has {size} members; rank {rank} needs at least {rank + 1}"
        )
        self.cluster = cluster
        self.size = size
        self.rank = rank


@dataclass
class SubspaceModel:
    """Per-cluster affine subspaces ``mu_k + span(U_k)``.

    ``coords[k]`` holds the coordinates of the members of cluster ``k`` in
    increasing column order.
    """

    means: np.ndarray
    bases: list
    ranks: tuple
    coords: list = field(default_factory=list)

    @property
    def K(self):
        return len(self.bases)

    def targets(self, H, labels):
        """Per-column reconstruction ``mu_k + U_k U_k^T (h - mu_k)``."""
        T = np.empty_like(H)
        for k, U in enumerate(self.bases):
            cols = labels == k
            C = H[:, cols] - self.means[:, [k]]
            T[:, cols] = self.means[:, [k]] + U @ (U.T @ C)
        return T


def _complete_basis(U, r, F):
    if U.shape[1] >= r:
        return U[:, :r]
    Q, _ = np.linalg.qr(np.hstack([U, np.eye(F)]))
    # keep the leading columns of U (QR may flip signs)
    Q[:, : U.shape[1]] = U
    return Q[:, :r]


def ksubspace_fit(H, labels, ranks, strict=True, previous=None):
    """Fit one affine subspace per cluster by centred SVD.

    With ``strict`` a cluster with fewer than ``r_k + 1`` members raises
    :class:`ClusterTooSmallError`.  Otherwise small clusters get an exactly
    fitting (completed) basis and empty clusters keep ``previous``'s model.
    """
    H = np.asarray(H, dtype=float)
    labels = np.asarray(labels)
    F = H.shape[0]
    ranks = tuple(int(r) for r in ranks)
    K = len(ranks)
    if any(r > F or r < 0 for r in ranks):
        raise ValueError(f"subspace ranks {ranks} must lie in [0, {F}]")
    means = np.zeros((F, K))
    bases, coords = [], []
    for k, r in enumerate(ranks):
        cols = np.flatnonzero(labels == k)
        n = cols.size
        if strict and n < r + 1:
            raise ClusterTooSmallError(k, n, r)
        if n == 0:
            if previous is not None:
                means[:, k] = previous.means[:, k]
                bases.append(previous.bases[k])
            else:
                bases.append(np.eye(F)[:, :r])
            coords.append(np.zeros((r, 0)))
            continue
        Hk = H[:, cols]
        mu = Hk.mean(axis=1)
        U, s, Vt = np.linalg.svd(Hk - mu[:, None], full_matrices=False)
        means[:, k] = mu
        Uk = _complete_basis(U, r, F)
        bases.append(Uk)
        coords.append(Uk.T @ (Hk - mu[:, None]))
    return SubspaceModel(means, bases, ranks, coords)


def subspace_distances(H, model):
    """``J x K`` matrix of ``||(I - U_k U_k^T)(h_j - mu_k)||_2``."""
    H = np.asarray(H, dtype=float)
    out = np.empty((H.shape[1], model.K))
    for k, U in enumerate(model.bases):
        C = H - model.means[:, [k]]
        R = C - U @ (U.T @ C)
        out[:, k] = np.sqrt(np.sum(R * R, axis=0))
    return out


def ksubspace_assign(H, model):
    return np.argmin(subspace_distances(H, model), axis=1)


def ksubspace_cost(H, model, labels):
    """Sum of squared distances of every column to its own subspace."""
    d = subspace_distances(H, model)
    return float(np.sum(d[np.arange(d.shape[0]), labels] ** 2))
