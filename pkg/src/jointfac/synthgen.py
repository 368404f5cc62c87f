"""Seeded synthetic instances ``X = W (M S + E2) + E1`` and their tensor and
union-of-subspaces relatives.

SNRs are calibrated exactly: ``SNR1 = ||W H||^2 / ||E1||^2`` and
``SNR2 = ||M S||^2 / ||E2||^2``.  An infinite SNR switches that noise off.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .kernels import cp_to_tensor, project_simplex
from .metrics import kruskal_rank

MODELS = ("nmf", "volmin", "tensor", "subspace")
MAX_REPEATS = 100


@dataclass(frozen=True)
class SynthParams:
    model: str = "nmf"
    I: int = 50
    J: int = 1000
    F: int = 7
    K: int = 10
    L: Optional[int] = None
    snr1_db: float = float("inf")
    snr2_db: float = float("inf")
    outlier_fraction: float = 0.0
    outlier_slabs: int = 0
    ranks: Optional[tuple] = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        dims = [self.I, self.J, self.F, self.K] + ([self.L] if self.model == "tensor" else [])
        if any(d is None or d < 1 for d in dims):
            raise ValueError(f"dimensions must be >= 1, got I,J,F,K,L = {dims}")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1)")
        if self.model == "tensor" and not 0 <= self.outlier_slabs < self.L:
            raise ValueError("outlier_slabs must lie in [0, L)")
        if self.ranks is not None:
            object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))

    def to_dict(self):
        d = asdict(self)
        if d["ranks"] is not None:
            d["ranks"] = list(d["ranks"])
        return d


@dataclass
class GroundTruth:
    """Everything needed to score a solver against the generating model.

    For the tensor model ``W`` is ``None`` and ``A, B, C`` hold the loadings
    (``A`` includes the row scaling); ``H`` is then the unscaled ``A``-tilde
    transposed so that its columns are the clustered points.
    """

    X: np.ndarray
    H: np.ndarray
    M: np.ndarray
    labels: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    outlier_mask: np.ndarray
    params: SynthParams
    W: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    @property
    def clean(self):
        """Noisy data before outlier replacement."""
        if self.W is not None:
            return self.W @ self.H + self.E1
        return cp_to_tensor(self.A, self.B, self.C) + self.E1

    @property
    def inliers(self):
        """Boolean mask of the points scored for clustering accuracy."""
        if self.params.model == "tensor":
            return np.ones(self.labels.size, dtype=bool)
        return ~self.outlier_mask


def _rng(params, rng):
    return np.random.default_rng(params.seed) if rng is None else rng


def _gain(signal, noise, snr_db):
    """Scale ``g`` with ``||signal||^2 / ||g noise||^2 = 10^(snr/10)``."""
    nn = float(np.sum(noise * noise))
    if not np.isfinite(snr_db) or nn == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(signal * signal) / (nn * 10.0 ** (snr_db / 10.0))))


def snr_db(signal, noise):
    nn = float(np.sum(noise * noise))
    if nn == 0.0:
        return float("inf")
    return 10.0 * np.log10(float(np.sum(signal * signal)) / nn)


def latent_noise(center, snr2_db, rng, feasible=None):
    """Perturb ``center`` to ``center + E2`` at exactly ``snr2_db``, keeping it feasible.

    ``feasible`` maps a matrix onto the constraint set (default: nonnegative
    part).  Projection, recentering and rescaling repeat until the scaled
    result is itself feasible.
    """
    feasible = feasible or (lambda H: np.maximum(H, 0.0))
    E2 = rng.standard_normal(center.shape)
    if not np.isfinite(snr2_db):
        return center.copy(), np.zeros_like(center)
    H = center + E2
    for _ in range(MAX_REPEATS):
        H = feasible(H)
        E2 = H - center
        E2 *= _gain(center, E2, snr2_db)
        H = center + E2
        if np.allclose(feasible(H), H, rtol=0.0, atol=1e-12):
            return feasible(H), E2
    raise RuntimeError(f"latent noise loop did not reach a feasible H in {MAX_REPEATS} repeats")


def data_noise(signal, snr1_db, rng):
    E1 = rng.standard_normal(signal.shape)
    return E1 * _gain(signal, E1, snr1_db)


def _tile_labels(J, K):
    return np.arange(J) % K


def _replace_outlier_columns(X, fraction, rng):
    J = X.shape[1]
    n = int(round(fraction * J))
    mask = np.zeros(J, dtype=bool)
    if n == 0:
        return X, mask
    cols = np.sort(rng.choice(J, size=n, replace=False))
    mask[cols] = True
    scale = float(np.median(np.linalg.norm(X, axis=0))) / np.sqrt(X.shape[0])
    X = X.copy()
    X[:, cols] = scale
    return X, mask


def gen_nmf_instance(params, rng=None):
    """Sparse identifiable NMF data with clustered columns in ``H``.

    The first ``min(F, K)`` centroids are unit vectors; the rest are
    ``U(0, 1)``.  With ``K < F`` some latent directions have no anchor.
    """
    p = params
    if p.K < p.F:
        warnings.warn(f"K={p.K} < F={p.F}: only {p.K} unit-vector anchors, "
                      "the NMF model is not identifiable", UserWarning, stacklevel=2)
    rng = _rng(p, rng)
    W = np.maximum(rng.standard_normal((p.I, p.F)), 0.0)
    M = np.hstack([np.eye(p.F)[:, : min(p.F, p.K)],
                   rng.uniform(size=(p.F, max(p.K - p.F, 0)))])
    labels = _tile_labels(p.J, p.K)
    MS = M[:, labels]
    H, E2 = latent_noise(MS, p.snr2_db, rng)
    WH = W @ H
    E1 = data_noise(WH, p.snr1_db, rng)
    X, mask = _replace_outlier_columns(WH + E1, p.outlier_fraction, rng)
    return GroundTruth(X=X, H=H, M=M, labels=labels, E1=E1, E2=E2,
                       outlier_mask=mask, params=p, W=W)


def gen_volmin_instance(params, rng=None):
    """Dense Gaussian ``W`` with ``H`` on the unit simplex.

    The first ``F`` centroids are the vertices of the simplex; the rest are
    uniform (flat Dirichlet) points inside it.  Latent noise is kept on the
    simplex by Euclidean projection.
    """
    p = params
    if p.K < p.F:
        raise ValueError(f"the vertex centroids need K >= F, got K={p.K}, F={p.F}")
    rng = _rng(p, rng)
    W = rng.standard_normal((p.I, p.F))
    M = np.hstack([np.eye(p.F), rng.dirichlet(np.ones(p.F), size=p.K - p.F).T])
    labels = _tile_labels(p.J, p.K)
    MS = M[:, labels]
    H, E2 = latent_noise(MS, p.snr2_db, rng, feasible=project_simplex)
    WH = W @ H
    E1 = data_noise(WH, p.snr1_db, rng)
    X, mask = _replace_outlier_columns(WH + E1, p.outlier_fraction, rng)
    return GroundTruth(X=X, H=H, M=M, labels=labels, E1=E1, E2=E2,
                       outlier_mask=mask, params=p, W=W)


def gen_tensor_instance(params, rng=None, max_retries=20):
    """Three-way PARAFAC data whose ``A`` rows are clustered.

    ``A = diag(d) (S M + E2)`` with ``M = 2 I + 1 1^T`` (``K x F``),
    ``d, B, C ~ U(0, 1)``.  ``outlier_slabs`` frontal slabs are then
    overwritten with ``U(0, 1)`` entries.  For ``F <= 8`` the generating
    factors are redrawn until ``k_A + k_B + k_C >= 2F + 2``.
    """
    p = params
    if p.L is None:
        raise ValueError("tensor model needs L")
    rng = _rng(p, rng)
    M = 2.0 * np.eye(p.K, p.F) + 1.0
    labels = _tile_labels(p.I, p.K)
    SM = M[labels]
    for _ in range(max_retries):
        At, E2 = latent_noise(SM, p.snr2_db, rng)
        d = rng.uniform(size=p.I)
        A = d[:, None] * At
        B = rng.uniform(size=(p.J, p.F))
        C = rng.uniform(size=(p.L, p.F))
        if p.F > 8:
            cert = None
            break
        cert = sum(kruskal_rank(Y) for Y in (A, B, C))
        if cert >= 2 * p.F + 2:
            break
    else:
        raise RuntimeError(f"no instance met the Kruskal condition in {max_retries} draws")
    T = cp_to_tensor(A, B, C)
    E1 = data_noise(T, p.snr1_db, rng)
    X = T + E1
    mask = np.zeros(p.L, dtype=bool)
    if p.outlier_slabs:
        slabs = np.sort(rng.choice(p.L, size=p.outlier_slabs, replace=False))
        mask[slabs] = True
        X[:, :, slabs] = rng.uniform(size=(p.I, p.J, p.outlier_slabs))
    return GroundTruth(X=X, H=At.T, M=M.T, labels=labels, E1=E1, E2=E2.T,
                       outlier_mask=mask, params=p, A=A, B=B, C=C, d=d,
                       extras={"kruskal_sum": cert})


def gen_subspace_instance(params, rng=None):
    """Latent points on a union of coordinate-block subspaces.

    Cluster ``k`` owns the latent rows ``F_k`` (consecutive blocks of sizes
    ``ranks``); its columns of ``H`` are ``U(0, 1)`` on those rows and zero
    elsewhere before latent noise is added.
    """
    p = params
    ranks = p.ranks or tuple([p.F // p.K] * p.K)
    if len(ranks) != p.K or sum(ranks) > p.F:
        raise ValueError(f"ranks {ranks} must have K={p.K} entries summing to <= F={p.F}")
    rng = _rng(p, rng)
    W = np.maximum(rng.standard_normal((p.I, p.F)), 0.0)
    labels = _tile_labels(p.J, p.K)
    H0 = np.zeros((p.F, p.J))
    start = np.concatenate([[0], np.cumsum(ranks)])
    for k in range(p.K):
        cols = labels == k
        H0[start[k]:start[k + 1], cols] = rng.uniform(size=(ranks[k], int(cols.sum())))
    H, E2 = latent_noise(H0, p.snr2_db, rng)
    WH = W @ H
    E1 = data_noise(WH, p.snr1_db, rng)
    X, mask = _replace_outlier_columns(WH + E1, p.outlier_fraction, rng)
    M = np.stack([H0[:, labels == k].mean(axis=1) for k in range(p.K)], axis=1)
    return GroundTruth(X=X, H=H, M=M, labels=labels, E1=E1, E2=E2,
                       outlier_mask=mask, params=p, W=W,
                       extras={"ranks": ranks, "H0": H0})


GENERATORS = {
    "nmf": gen_nmf_instance,
    "volmin": gen_volmin_instance,
    "tensor": gen_tensor_instance,
    "subspace": gen_subspace_instance,
}


def generate(params, rng=None):
    return GENERATORS[params.model](params, rng)
