"""Joint low-rank factorisation and latent clustering.

Solvers
-------
jnkm   joint NMF and K-means
jvkm   joint volume-minimisation factorisation and K-means
jtkm   joint nonnegative PARAFAC and K-means on one mode
jnks   joint NMF and K-subspace clustering

Baselines, scoring and synthetic data live in ``baselines``, ``metrics``
and ``synthgen``; ``harness`` holds the experiment runner and CLI.
"""

from .jnkm import JnkmParams, jnkm_solve
from .jnks import JnksParams, jnks_solve
from .jtkm import JtkmParams, jtkm_solve, ntf_solve
from .jvkm import JvkmParams, jvkm_solve
from .metrics import clustering_accuracy, matched_mse
from .synthgen import SynthParams, generate

__all__ = [
    "JnkmParams", "jnkm_solve", "JnksParams", "jnks_solve", "JtkmParams", "jtkm_solve",
    "ntf_solve", "JvkmParams", "jvkm_solve", "clustering_accuracy", "matched_mse",
    "SynthParams", "generate",
]
