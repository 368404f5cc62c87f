"""Adapters that run one named method on a ground-truth instance.

Every adapter returns an :class:`AlgoOutput`.  Joint solvers start from the
answer of their two-stage counterpart (NMF-KM for JNKM/JNKS, VolMin-KM for
JVKM, NTF-KM for JTKM); that shared stage is computed once per trial and
cached so both methods see the same starting point.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .. import baselines as bl
from ..clustering import kmeans_centroids, kmeans_lloyd
from ..jnkm import JnkmParams, jnkm_init, jnkm_solve
from ..jnks import JnksParams, jnks_init, jnks_solve
from ..jtkm import JtkmParams, jtkm_init, jtkm_solve, ntf_solve
from ..jvkm import JvkmParams, JvkmState, jvkm_solve
from ..kernels import unfold
from ..metrics import matched_mse


@dataclass
class AlgoOutput:
    labels: np.ndarray
    mse_linear: Optional[float] = None
    converged: bool = True
    iterations: int = 0


class TrialContext:
    """Per-trial random streams and the shared-stage cache."""

    def __init__(self, seed, trial_index):
        self.seed = int(seed)
        self.trial_index = int(trial_index)
        self.cache = {}

    def rng(self, name):
        key = zlib.crc32(name.encode())
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.trial_index, 1, key))
        return np.random.default_rng(ss)

    def stage(self, key, compute):
        if key not in self.cache:
            self.cache[key] = compute(self.rng(repr(key)))
        return self.cache[key]


def instance_rng(seed, trial_index):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial_index), 0)))


def _points(gt):
    """Columns to cluster when a method works on raw data."""
    if gt.X.ndim == 3:
        return unfold(gt.X, 1)
    return gt.X


def _fk(gt, params):
    return int(params.get("F", gt.params.F)), int(params.get("K", gt.params.K))


def _tensor_mse(gt, A, B, C):
    return float(np.mean([matched_mse(gt.A, A), matched_mse(gt.B, B), matched_mse(gt.C, C)]))


# --------------------------------------------------------------------------
# shared stages


def _nmf_km_stage(gt, ctx, F, K, mu_balance=0.0, n_init=1):
    def compute(rng):
        nmf = bl.nmf_solve(gt.X, F, mu_balance=mu_balance, rng=rng)
        km = kmeans_lloyd(nmf.H, K, rng=rng, n_init=n_init)
        return nmf, km.labels
    return ctx.stage(("nmf_km", F, K, float(mu_balance), int(n_init)), compute)


def _volmin_km_stage(gt, ctx, F, K, beta, warmup, max_outer, n_init):
    def compute(rng):
        params = JvkmParams(F=F, K=K, beta=beta, lam=0.0, max_outer=max_outer, warmup=warmup)
        st = jvkm_solve(gt.X, params, rng=rng)
        km = kmeans_lloyd(st.H, K, rng=rng, n_init=n_init)
        return st, km.labels
    return ctx.stage(("volmin_km", F, K, float(beta), int(warmup), int(max_outer), int(n_init)),
                     compute)


def _ntf_km_stage(gt, ctx, F, K, eta, reg, n_init):
    def compute(rng):
        ntf = ntf_solve(gt.X, F, eta=eta, reg=reg, rng=rng)
        km = kmeans_lloyd(ntf[0].T, K, rng=rng, n_init=n_init)
        return ntf, km.labels
    return ctx.stage(("ntf_km", F, K, float(eta), reg, int(n_init)), compute)


# --------------------------------------------------------------------------
# adapters


def run_kmeans(gt, params, ctx):
    _, K = _fk(gt, params)
    r = kmeans_lloyd(_points(gt), K, rng=ctx.rng("kmeans"), n_init=int(params.get("n_init", 1)))
    return AlgoOutput(r.labels, None, True, r.n_iter)


def run_rkm(gt, params, ctx):
    F, K = _fk(gt, params)
    st = bl.rkm_solve(_points(gt), F, K, rng=ctx.rng("rkm"))
    return AlgoOutput(st.labels, None, st.converged, st.n_iter)


def run_fkm(gt, params, ctx):
    F, K = _fk(gt, params)
    st = bl.fkm_solve(_points(gt), F, K, rng=ctx.rng("fkm"))
    return AlgoOutput(st.labels, None, st.converged, st.n_iter)


def run_nmf_km(gt, params, ctx):
    F, K = _fk(gt, params)
    nmf, labels = _nmf_km_stage(gt, ctx, F, K, params.get("mu_balance", 0.0),
                                params.get("n_init", 1))
    return AlgoOutput(labels, matched_mse(gt.W, nmf.W), nmf.converged, nmf.n_iter)


def run_jnkm(gt, params, ctx):
    F, K = _fk(gt, params)
    p = JnkmParams(F=F, K=K, **{k: v for k, v in params.items() if k not in ("F", "K")})
    nmf, labels = _nmf_km_stage(gt, ctx, F, K, 0.0, p.n_init)
    st = jnkm_solve(gt.X, p, init=jnkm_init(gt.X, p, nmf=nmf, labels=labels))
    return AlgoOutput(st.labels, matched_mse(gt.W, st.W), st.converged, st.n_iter)


def _volmin_args(params):
    return (float(params.get("beta", 0.1)), int(params.get("warmup", 50)),
            int(params.get("max_outer", 200)), int(params.get("n_init", 1)))


def run_volmin_km(gt, params, ctx):
    F, K = _fk(gt, params)
    st, labels = _volmin_km_stage(gt, ctx, F, K, *_volmin_args(params))
    return AlgoOutput(labels, matched_mse(gt.W, st.W), st.converged, st.n_iter)


def run_jvkm(gt, params, ctx):
    F, K = _fk(gt, params)
    p = JvkmParams(F=F, K=K, **{k: v for k, v in params.items() if k not in ("F", "K")})
    st0, labels = _volmin_km_stage(gt, ctx, F, K, p.beta, p.warmup, p.max_outer, p.n_init)
    init = JvkmState(W=st0.W, H=st0.H, M=kmeans_centroids(st0.H, labels, K), labels=labels)
    st = jvkm_solve(gt.X, p, init=init)
    return AlgoOutput(st.labels, matched_mse(gt.W, st.W), st.converged, st.n_iter)


def run_ntf(gt, params, ctx):
    F, K = _fk(gt, params)
    ntf, labels = _ntf_km_stage(gt, ctx, F, K, float(params.get("eta", 0.1)),
                                params.get("reg", "fro"), int(params.get("n_init", 1)))
    A, B, C, run = ntf
    return AlgoOutput(labels, _tensor_mse(gt, A, B, C), run.converged, run.n_iter)


def run_jtkm(gt, params, ctx):
    F, K = _fk(gt, params)
    p = JtkmParams(F=F, K=K, **{k: v for k, v in params.items() if k not in ("F", "K")})
    ntf, labels = _ntf_km_stage(gt, ctx, F, K, p.eta, p.reg, p.n_init)
    st = jtkm_solve(gt.X, p, init=jtkm_init(gt.X, p, ntf=ntf, labels=labels))
    return AlgoOutput(st.labels, _tensor_mse(gt, st.scaled_A, st.B, st.C),
                      st.converged, st.n_iter)


def run_jnks(gt, params, ctx):
    F, K = _fk(gt, params)
    kw = {k: v for k, v in params.items() if k not in ("F", "K")}
    if "ranks" not in kw and gt.extras.get("ranks") is not None:
        kw["ranks"] = gt.extras["ranks"]
    p = JnksParams(F=F, K=K, **kw)
    nmf, labels = _nmf_km_stage(gt, ctx, F, K, 0.0, p.n_init)
    st = jnks_solve(gt.X, p, init=jnks_init(gt.X, p, nmf=nmf, labels=labels))
    return AlgoOutput(st.labels, matched_mse(gt.W, st.W), st.converged, st.n_iter)


MATRIX = ("nmf", "volmin", "subspace")
ALL = MATRIX + ("tensor",)


@dataclass(frozen=True)
class AlgoSpec:
    run: Callable
    models: tuple


REGISTRY = {
    "kmeans": AlgoSpec(run_kmeans, ALL),
    "rkm": AlgoSpec(run_rkm, ALL),
    "fkm": AlgoSpec(run_fkm, ALL),
    "nmf_km": AlgoSpec(run_nmf_km, MATRIX),
    "jnkm": AlgoSpec(run_jnkm, MATRIX),
    "volmin_km": AlgoSpec(run_volmin_km, MATRIX),
    "jvkm": AlgoSpec(run_jvkm, MATRIX),
    "ntf": AlgoSpec(run_ntf, ("tensor",)),
    "jtkm": AlgoSpec(run_jtkm, ("tensor",)),
    "jnks": AlgoSpec(run_jnks, MATRIX),
}
