import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jointfac.baselines import nmf_solve
from jointfac.jnkm import (BLOCKS as JNKM_BLOCKS, JnkmParams, JnkmState, d_block, h_block,
                           jnkm_cost, jnkm_init, jnkm_solve, jnkm_step_block, w_block)
from jointfac.jnks import JnksParams, jnks_cost, jnks_init, jnks_solve, jnks_step_block
from jointfac.jtkm import (BLOCKS as JTKM_BLOCKS, JtkmParams, _factor_nls, jtkm_cost,
                           jtkm_init, jtkm_solve, jtkm_step_block, log_transform,
                           ntf_solve, permute_modes)
from jointfac.jvkm import (BLOCKS as JVKM_BLOCKS, JvkmParams, jvkm_cost, jvkm_init,
                           jvkm_solve, jvkm_step_block, volume_term)
from jointfac.kernels import cp_to_tensor, khatri_rao, unfold
from jointfac.metrics import clustering_accuracy
from jointfac.synthgen import SynthParams, generate

seeds = st.integers(0, 2**16)
FIELDS = {
    "jnkm": {"H": "H", "W": "W", "D": "d", "Z": "Z", "M": "M", "S": "labels"},
    "jvkm": {"W": "W", "H": "H", "M": "M", "S": "labels"},
    "jtkm": {"A": "A", "B": "B", "C": "C", "D": "d", "Z": "Z", "M": "M", "S": "labels"},
}


def _nmf_data(seed, snr=10.0, **kw):
    p = dict(model="nmf", I=15, J=40, F=3, K=4, snr1_db=snr, snr2_db=snr, seed=seed)
    p.update(kw)
    return generate(SynthParams(**p))


def _jnkm_state(seed):
    gt = _nmf_data(seed)
    params = JnkmParams(F=3, K=4)
    st0 = jnkm_init(gt.X, params, rng=seed)
    # perturb away from the initial fixed relations so every block has work to do
    rng = np.random.default_rng(seed)
    st0 = replace(st0, H=st0.H * rng.uniform(0.5, 1.5, st0.H.shape),
                  d=st0.d * rng.uniform(0.8, 1.2, st0.d.shape))
    return gt.X, params, st0


def _unchanged_except(before, after, field_map, block):
    for b, name in field_map.items():
        if b != block:
            assert np.array_equal(getattr(before, name), getattr(after, name)), (block, name)


# --------------------------------------------------------------------------
# joint NMF + K-means

def test_jnkm_cost_zero_on_exact_model():
    rng = np.random.default_rng(0)
    W = rng.uniform(size=(5, 2))
    M = np.eye(2)
    labels = np.array([0, 1, 1, 0])
    H = M[:, labels]
    d = np.array([1.0, 2.0, 3.0, 4.0])
    st0 = JnkmState(W=W, H=H, d=d, Z=H.copy(), M=M, labels=labels)
    X = W @ H * d
    assert jnkm_cost(st0, X, JnkmParams(F=2, K=2, eta=0.0)) == 0.0


def test_jnkm_cost_matches_scalar_loop():
    X, params, s = _jnkm_state(1)
    I, J = X.shape
    F = s.W.shape[1]
    total = 0.0
    for i in range(I):
        for j in range(J):
            total += (X[i, j] - sum(s.W[i, f] * s.H[f, j] for f in range(F)) * s.d[j]) ** 2
    for f in range(F):
        for j in range(J):
            total += params.lam * (s.H[f, j] - s.M[f, s.labels[j]]) ** 2
            total += params.mu * (s.H[f, j] - s.Z[f, j]) ** 2
        for i in range(I):
            total += params.eta * s.W[i, f] ** 2
    assert np.isclose(jnkm_cost(s, X, params), total, rtol=1e-10)


def test_jnkm_cost_without_penalties_is_residual():
    X, params, s = _jnkm_state(2)
    p0 = replace(params, lam=0.0, mu=0.0, eta=0.0)
    assert np.isclose(jnkm_cost(s, X, p0), np.sum((X - s.W @ s.H * s.d) ** 2))


@settings(max_examples=15)
@given(seeds, st.sampled_from(JNKM_BLOCKS))
def test_jnkm_block_only_changes_itself_and_never_increases_cost(seed, block):
    X, params, s = _jnkm_state(seed)
    after = jnkm_step_block(s, X, params, block)
    _unchanged_except(s, after, FIELDS["jnkm"], block)
    before_c, after_c = jnkm_cost(s, X, params), jnkm_cost(after, X, params)
    assert after_c <= before_c + 1e-12 * max(1.0, before_c)


def test_jnkm_d_block_recovers_column_scale():
    rng = np.random.default_rng(3)
    W = rng.uniform(size=(6, 2))
    H = rng.uniform(size=(2, 9))
    assert np.allclose(d_block(2 * W @ H, W, H), 2.0)
    H[:, 0] = 0
    assert d_block(W @ H, W, H)[0] == 1.0


def test_jnkm_z_block_unit_columns():
    X, params, s = _jnkm_state(4)
    s = replace(s, H=s.H.copy())
    s.H[:, 0] = 0.0
    Z = jnkm_step_block(s, X, params, "Z").Z
    assert np.allclose(np.linalg.norm(Z, axis=0), 1.0)
    assert np.array_equal(Z[:, 0], np.eye(3)[0])


def test_jnkm_d_is_exact_one_dimensional_minimiser():
    X, params, s = _jnkm_state(5)
    s = jnkm_step_block(s, X, params, "D")
    base = jnkm_cost(s, X, params)
    for j in range(0, X.shape[1], 7):
        for delta in (1e-4, -1e-4):
            d = s.d.copy()
            d[j] += delta
            assert jnkm_cost(replace(s, d=d), X, params) >= base


def test_jnkm_mbi_step_takes_best_block():
    X, params, s = _jnkm_state(6)
    p = replace(params, schedule="mbi", max_outer=1)
    best = min(jnkm_cost(jnkm_step_block(s, X, p, b), X, p) for b in JNKM_BLOCKS)
    out = jnkm_solve(X, p, init=s)
    assert out.cost_trace[1] == best


def test_jnkm_penalties_off_blocks_are_plain_nmf_steps():
    # with unit scales and no penalties one H then W step is one ANLS sweep
    gt = _nmf_data(7)
    nmf = nmf_solve(gt.X, 3, rng=0, max_iters=5)
    W, H = nmf.W, nmf.H
    H1 = h_block(gt.X, W, np.ones(gt.X.shape[1]), np.zeros_like(H), 0.0, H0=H).x
    W1, _ = w_block(gt.X, H1, 0.0, W0=W)
    ref = nmf_solve(gt.X, 3, init=(W, H), max_iters=1)
    assert np.allclose(ref.H, H1, atol=1e-10)
    assert np.allclose(ref.W, W1, atol=1e-10)


def test_jnkm_solve_monotone_and_feasible():
    gt = _nmf_data(8)
    st1 = jnkm_solve(gt.X, JnkmParams(F=3, K=4, max_outer=50), rng=8)
    t = np.asarray(st1.cost_trace)
    assert np.all(t[1:] <= t[:-1] * (1 + 1e-9))
    assert st1.H.min() >= 0 and st1.W.min() >= 0
    assert st1.labels.shape == (gt.X.shape[1],)


def test_jnkm_rejects_bad_inputs():
    with pytest.raises(ValueError):
        JnkmParams(F=2, K=2, lam=-1.0)
    with pytest.raises(ValueError):
        jnkm_solve(np.full((3, 3), np.nan), JnkmParams(F=1, K=1))
    X, params, s = _jnkm_state(9)
    with pytest.raises(ValueError):
        jnkm_step_block(s, X, params, "Q")


def test_jnkm_noiseless_small_recovery():
    gt = _nmf_data(10, snr=np.inf, I=20, J=120, F=3, K=5)
    st1 = jnkm_solve(gt.X, JnkmParams(F=3, K=5), rng=10)
    assert clustering_accuracy(gt.labels, st1.labels) == 1.0


# --------------------------------------------------------------------------
# joint VolMin + K-means

def test_volume_term_examples():
    rng = np.random.default_rng(0)
    assert volume_term(rng.standard_normal((4, 1))) == 0.0
    assert np.isclose(volume_term(np.ones((3, 4)) * 2.5), 0.0)
    W = rng.standard_normal((5, 4))
    pairs = sum(np.sum((W[:, f] - W[:, g]) ** 2) for f in range(4) for g in range(f + 1, 4))
    assert np.isclose(volume_term(W), pairs, rtol=1e-10)


def _volmin_state(seed):
    gt = generate(SynthParams(model="volmin", I=12, J=60, F=3, K=4,
                              snr1_db=15.0, snr2_db=10.0, seed=seed))
    params = JvkmParams(F=3, K=4, warmup=5)
    return gt, params, jvkm_init(gt.X, params, rng=seed)


@settings(max_examples=15)
@given(seeds, st.sampled_from(JVKM_BLOCKS))
def test_jvkm_block_only_changes_itself_and_never_increases_cost(seed, block):
    gt, params, s = _volmin_state(seed)
    after = jvkm_step_block(s, gt.X, params, block)
    _unchanged_except(s, after, FIELDS["jvkm"], block)
    c0, c1 = jvkm_cost(s, gt.X, params), jvkm_cost(after, gt.X, params)
    assert c1 <= c0 + 1e-12 * max(1.0, c0)


def test_jvkm_h_stays_on_simplex():
    gt, params, s = _volmin_state(1)
    out = jvkm_solve(gt.X, replace(params, max_outer=20), init=s)
    assert out.H.min() >= -1e-12
    assert np.allclose(out.H.sum(axis=0), 1.0, atol=1e-9)


def test_jvkm_lambda_zero_skips_clustering():
    gt, params, _ = _volmin_state(2)
    p0 = replace(params, lam=0.0, max_outer=10)
    out = jvkm_solve(gt.X, p0, rng=2)
    assert out.M is None and out.labels is None
    t = np.asarray(out.cost_trace)
    assert np.all(t[1:] <= t[:-1] * (1 + 1e-9))


def test_jvkm_noiseless_recovers_w():
    from jointfac.metrics import matched_mse_db
    gt = generate(SynthParams(model="volmin", I=20, J=300, F=3, K=6, seed=3))
    out = jvkm_solve(gt.X, JvkmParams(F=3, K=6), rng=3)
    assert matched_mse_db(gt.W, out.W) <= -30


# --------------------------------------------------------------------------
# joint tensor factorisation + K-means

def _tensor_state(seed, reg="fro"):
    gt = generate(SynthParams(model="tensor", I=12, J=8, L=7, F=2, K=3,
                              snr1_db=15.0, snr2_db=15.0, seed=seed))
    params = JtkmParams(F=2, K=3, reg=reg)
    s = jtkm_init(gt.X, params, rng=seed)
    rng = np.random.default_rng(seed)
    return gt.X, params, replace(s, A=s.A * rng.uniform(0.5, 1.5, s.A.shape))


@settings(max_examples=15)
@given(seeds, st.sampled_from(JTKM_BLOCKS), st.sampled_from(["fro", "l1"]))
def test_jtkm_block_only_changes_itself_and_never_increases_cost(seed, block, reg):
    T, params, s = _tensor_state(seed, reg)
    after = jtkm_step_block(s, T, params, block)
    _unchanged_except(s, after, FIELDS["jtkm"], block)
    c0, c1 = jtkm_cost(s, T, params), jtkm_cost(after, T, params)
    assert c1 <= c0 + 1e-12 * max(1.0, c0)


def test_jtkm_lambda_zero_factor_step_is_ntf_step():
    T, params, s = _tensor_state(1)
    p0 = replace(params, lam=0.0)
    B_joint = jtkm_step_block(s, T, p0, "B").B
    B_plain, _ = _factor_nls(unfold(T, 2), khatri_rao(s.C, s.scaled_A), p0.eta, "fro", s.B)
    assert np.array_equal(B_joint, B_plain)


def test_ntf_exact_rank_one():
    rng = np.random.default_rng(2)
    a, b, c = (rng.uniform(0.5, 1.5, size=(n, 1)) for n in (6, 5, 4))
    T = cp_to_tensor(a, b, c)
    A, B, C, run = ntf_solve(T, 1, eta=0.0, rng=2, tol=1e-14, max_iters=500)
    rel = np.sum((T - cp_to_tensor(A, B, C)) ** 2) / np.sum(T**2)
    assert rel <= 1e-8
    t = np.asarray(run.cost_trace)
    # once the fit is exact the trace is rounding noise near zero
    assert np.all(t[1:] <= t[:-1] * (1 + 1e-9) + 1e-20 * t[0])


def test_ntf_overparameterised_fit_is_no_worse():
    rng = np.random.default_rng(3)
    T = cp_to_tensor(*(rng.uniform(size=(n, 2)) for n in (5, 5, 5)))
    _, _, _, r2 = ntf_solve(T, 2, eta=0.0, rng=3)
    _, _, _, r3 = ntf_solve(T, 3, eta=0.0, rng=3)
    assert r3.cost_trace[-1] <= 1e-6 * np.sum(T**2) or r3.cost_trace[-1] <= r2.cost_trace[-1]


def test_permute_modes_and_cluster_mode():
    T = np.arange(24.0).reshape(2, 3, 4)
    assert permute_modes(T, 1).shape == (2, 3, 4)
    assert permute_modes(T, 2).shape == (3, 2, 4)
    assert permute_modes(T, 3).shape == (4, 2, 3)
    gt = generate(SynthParams(model="tensor", I=12, J=8, L=7, F=2, K=3, seed=4))
    moved = np.moveaxis(gt.X, 0, 1)
    out = jtkm_solve(moved, JtkmParams(F=2, K=3, cluster_mode=2), rng=4)
    assert out.A.shape == (12, 2)
    assert clustering_accuracy(gt.labels, out.labels) == 1.0


def test_log_transform():
    T = np.array([[[0.0, 1.0], [2.0, 8.0]]])
    assert log_transform(T).tolist() == [[[0.0, 1.0], [2.0, 4.0]]]


def test_jtkm_rejects_bad_params():
    with pytest.raises(ValueError):
        JtkmParams(F=2, K=2, reg="l2")
    with pytest.raises(ValueError):
        JtkmParams(F=2, K=2, cluster_mode=4)


# --------------------------------------------------------------------------
# joint NMF + K-subspace

def _subspace_data(seed, snr=20.0):
    return generate(SynthParams(model="subspace", I=10, J=80, F=4, K=2, ranks=(2, 2),
                                snr1_db=30.0, snr2_db=snr, seed=seed))


@settings(max_examples=15)
@given(seeds, st.sampled_from(["H", "W", "D", "Z", "U", "S"]), st.sampled_from([0.0, 10.0]))
def test_jnks_block_never_increases_cost(seed, block, mu):
    gt = _subspace_data(seed)
    params = JnksParams(F=4, K=2, ranks=(2, 2), mu_split=mu)
    if block not in params.blocks:
        return
    s = jnks_init(gt.X, params, rng=seed)
    s = replace(s, H=s.H * np.random.default_rng(seed).uniform(0.7, 1.3, s.H.shape))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        after = jnks_step_block(s, gt.X, params, block)
    c0, c1 = jnks_cost(s, gt.X, params), jnks_cost(after, gt.X, params)
    assert c1 <= c0 + 1e-12 * max(1.0, c0)


def test_jnks_single_full_rank_subspace_has_no_penalty():
    gt = _subspace_data(1)
    params = JnksParams(F=4, K=1, ranks=(4,))
    s = jnks_init(gt.X, params, rng=1)
    p_nopen = replace(params, lam=0.0)
    assert np.isclose(jnks_cost(s, gt.X, params), jnks_cost(s, gt.X, p_nopen))


def test_jnks_h_block_kkt():
    gt = _subspace_data(2)
    params = JnksParams(F=4, K=2, ranks=(2, 2))
    s = jnks_init(gt.X, params, rng=2)
    H = jnks_step_block(s, gt.X, params, "H").H
    # gradient of the per-column objective must satisfy complementarity
    W, lam = s.W, params.lam
    for j in range(0, gt.X.shape[1], 9):
        k = s.labels[j]
        U = s.model.bases[k]
        P = np.eye(4) - U @ U.T
        g = 2 * W.T @ (W @ H[:, j] - gt.X[:, j]) + 2 * lam * P @ (H[:, j] - s.model.means[:, k])
        assert np.max(np.abs(np.minimum(H[:, j], g))) <= 1e-6 * max(1.0, np.abs(g).max())


def test_jnks_noiseless_two_subspaces():
    gt = generate(SynthParams(model="subspace", I=10, J=80, F=4, K=2, ranks=(2, 2), seed=3))
    out = jnks_solve(gt.X, JnksParams(F=4, K=2, ranks=(2, 2)), rng=3)
    assert clustering_accuracy(gt.labels, out.labels) == 1.0
    t = np.asarray(out.cost_trace)
    assert np.all(t[1:] <= t[:-1] * (1 + 1e-9))


def test_jnks_small_cluster_warns():
    gt = _subspace_data(4)
    params = JnksParams(F=4, K=2, ranks=(2, 2))
    s = jnks_init(gt.X, params, rng=4)
    labels = np.zeros_like(s.labels)
    labels[:2] = 1
    with pytest.warns(RuntimeWarning, match="too small"):
        out = jnks_step_block(replace(s, labels=labels), gt.X, params, "U")
    assert out.degenerate_fits == 1


def test_jnks_params_validate_ranks():
    assert JnksParams(F=4, K=2).ranks == (2, 2)
    with pytest.raises(ValueError):
        JnksParams(F=4, K=2, ranks=(5, 1))
