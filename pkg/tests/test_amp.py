import io
import json
import time

import numpy as np
import pytest

from musrldpc.amp import (UserCodebook, bp_denoise, combine_effective_observations,
                          decode_cell_free, decode_single_cell, effective_observation,
                          estimate_tau2, onsager_divergence, residual, section_posterior,
                          user_contribution)
from musrldpc.channel import Topology, ebn0_to_sigma2, gmac_transmit
from musrldpc.galois import make_field
from musrldpc.nbldpc import BeliefState, bp_denoiser_round, build_ldpc, ldpc_encode
from musrldpc.srldpc import SensingMatrix, bits_to_symbols, sr_encode, to_sparse
from oracles import enumerate_codewords, exact_marginals, reference_amp, simplex_grid_argmin


@pytest.fixture(scope="module")
def desk_code():
    return build_ldpc(make_field(4), 64, 8, 3, seed=0)


def _transmit(code, n, K, ebn0_db, seed, noise=True):
    rng = np.random.default_rng(seed)
    books, xs, msgs = [], [], []
    for k in range(K):
        A = SensingMatrix((seed, k), n, code.L, code.q)
        bits = rng.integers(0, 2, size=code.K_sym * code.field.p)
        v = ldpc_encode(code, bits_to_symbols(bits, code.field.p))
        books.append(UserCodebook(A, code, k))
        xs.append(sr_encode(A, to_sparse(v, code.q)))
        msgs.append(bits)
    sigma2 = ebn0_to_sigma2(ebn0_db, code.L, len(msgs[0])) if noise else 0.0
    return books, xs, np.array(msgs), sigma2, rng


def test_tau2_estimate():
    assert estimate_tau2(np.zeros(10)) == 0
    z = np.random.default_rng(0).normal(0, np.sqrt(0.4), 100_000)
    assert estimate_tau2(z) == pytest.approx(0.4, rel=0.03)
    assert estimate_tau2(3 * z) == pytest.approx(9 * estimate_tau2(z))


def test_effective_observation():
    A = SensingMatrix(1, 2000, 4, 8)
    s = np.random.default_rng(1).dirichlet(np.ones(8), size=4)
    np.testing.assert_array_equal(effective_observation(A, np.zeros(2000), s), s)
    r = effective_observation(A, A.dense()[:, 5], np.zeros((4, 8)))
    assert r.ravel()[5] == pytest.approx(1, abs=0.1)
    z1, z2 = np.random.default_rng(2).standard_normal((2, 2000))
    lhs = effective_observation(A, z1 + 2 * z2, s) - s
    rhs = (effective_observation(A, z1, s) - s) + 2 * (effective_observation(A, z2, s) - s)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_section_posterior_values():
    np.testing.assert_allclose(section_posterior(np.zeros((3, 16)), 0.7), 1 / 16)
    alpha = section_posterior(np.eye(4)[0], 0.25)
    assert alpha[0] == pytest.approx(1 / (1 + 3 * np.exp(-4)), abs=1e-12)
    assert alpha[0] == pytest.approx(0.9479, abs=1e-4)
    r = np.random.default_rng(3).standard_normal((5, 16))
    np.testing.assert_allclose(section_posterior(r + 7.3, 0.4), section_posterior(r, 0.4), atol=1e-15)


def test_section_posterior_matches_literal_formula():
    rng = np.random.default_rng(4)
    q = 16
    for tau2 in (0.05, 0.3, 2.0):
        r = rng.normal(0, 0.5, size=(8, q))
        d2 = ((r[:, None, :] - np.eye(q)[None, :, :]) ** 2).sum(-1)
        w = np.exp(-d2 / (2 * tau2))
        literal = w / w.sum(-1, keepdims=True)
        np.testing.assert_allclose(section_posterior(r, tau2), literal, atol=1e-12, rtol=0)


def test_section_posterior_zero_variance_is_one_hot():
    out = section_posterior(np.array([[0.1, 0.9, 0.3], [0.5, 0.5, 0.0]]), 0.0)
    np.testing.assert_array_equal(out, [[0, 1, 0], [1, 0, 0]])


def test_bp_denoise_zero_iterations_is_posterior(desk_code):
    r = np.random.default_rng(5).normal(0, 0.5, size=(64, 16))
    np.testing.assert_array_equal(bp_denoise(desk_code, r, 0.3, 0), section_posterior(r, 0.3))


def test_bp_denoise_on_tree_matches_exhaustive(tree_code, gf4):
    words = enumerate_codewords(tree_code.dense().tolist(), 4, gf4.modulus, gf4.p)
    r = np.random.default_rng(6).normal(0.2, 0.6, size=(7, 4))
    exact = exact_marginals(words, section_posterior(r, 0.5))
    np.testing.assert_allclose(bp_denoise(tree_code, r, 0.5, 6), exact, atol=1e-8)


def test_bp_denoise_concentrates_on_valid_codeword(desk_code):
    v = ldpc_encode(desk_code, np.random.default_rng(7).integers(0, 16, size=desk_code.K_sym))
    out = bp_denoise(desk_code, to_sparse(v, 16), 0.01, 1)
    assert (out.max(axis=1) > 0.99).all()
    np.testing.assert_array_equal(out.argmax(axis=1), v)


def test_onsager_closed_forms():
    assert onsager_divergence(np.eye(8)[[1, 2, 3]], 0.5) == 0
    assert onsager_divergence(np.full((10, 16), 1 / 16), 0.5) == pytest.approx((10 - 10 / 16) / 0.5)


def test_onsager_matches_finite_difference_jacobian_trace(desk_code):
    L, q, tau2, h = 6, 8, 0.4, 1e-5
    r = np.random.default_rng(8).normal(0, 0.6, size=(L, q))

    def eta(x):
        return section_posterior(x, tau2)

    trace = 0.0
    for idx in np.ndindex(L, q):
        e = np.zeros((L, q))
        e[idx] = h
        trace += (eta(r + e)[idx] - eta(r - e)[idx]) / (2 * h)
    assert onsager_divergence(eta(r), tau2) == pytest.approx(trace, rel=1e-3)


def test_user_contribution_and_residual():
    A = SensingMatrix(9, 50, 4, 4)
    v = np.array([0, 3, 1, 2])
    s = to_sparse(v, 4)
    x = sr_encode(A, s)
    np.testing.assert_array_equal(user_contribution(A, s, np.ones(50), 0.0, 50), x)
    z1, z2 = np.random.default_rng(10).standard_normal((2, 50))
    f = lambda z: user_contribution(A, s, z, 2.5, 50)
    np.testing.assert_allclose(f(z1 + z2) - f(z2), f(z1) - x, atol=1e-12)
    np.testing.assert_allclose(f(z1), x - 0.05 * z1, atol=1e-12)
    y = np.random.default_rng(11).standard_normal(50)
    np.testing.assert_array_equal(residual(y, []), y)
    np.testing.assert_array_equal(residual(x, [x]), np.zeros(50))


def test_combining_weights():
    r1, r2 = np.ones((2, 3)), np.zeros((2, 3))
    r, w, t = combine_effective_observations([r1, r2], [0.5, 0.5])
    np.testing.assert_allclose(w, [0.5, 0.5])
    np.testing.assert_allclose(r, 0.5)
    r, w, t = combine_effective_observations([r1, r2], [1.0, 3.0])
    np.testing.assert_allclose(w, [0.75, 0.25])
    assert t == pytest.approx(0.75)
    np.testing.assert_allclose(r, 0.75)
    grid_w, grid_cost, step = simplex_grid_argmin([1.0, 3.0])
    np.testing.assert_allclose(w, grid_w, atol=step)
    assert t == pytest.approx(grid_cost, abs=1e-6)
    r, w, t = combine_effective_observations([r1], [0.2])
    assert (r == r1).all() and w.tolist() == [1.0] and t == 0.2
    r, w, t = combine_effective_observations([r1, r2], [0.4, 0.0])
    assert (r == r2).all() and t == 0.0


@pytest.mark.parametrize("tau2s", [[0.3, 0.7, 1.9], [2.0, 2.0, 0.1, 5.0]])
def test_combined_variance_is_optimal(tau2s):
    tau2s = np.array(tau2s)
    _, w, t = combine_effective_observations([np.zeros(2)] * len(tau2s), tau2s)
    assert w.sum() == pytest.approx(1)
    assert (w**2 * tau2s).sum() == pytest.approx(t)
    rng = np.random.default_rng(12)
    for c in rng.dirichlet(np.ones(len(tau2s)), size=500):
        assert (c**2 * tau2s).sum() >= t - 1e-12


def test_noiseless_toy_recovery(tree_code):
    v = ldpc_encode(tree_code, np.array([3, 1, 0, 2]))
    A = SensingMatrix(1, 20, 7, 4)
    res = decode_single_cell(sr_encode(A, to_sparse(v, 4)), [UserCodebook(A, tree_code)],
                             sigma2=0.0, T_amp=25)
    np.testing.assert_array_equal(res.symbols[0], v)
    assert res.syndrome_ok.all()


@pytest.mark.parametrize("K", [1, 4])
def test_noiseless_desk_recovery(desk_code, K):
    books, xs, msgs, _, _ = _transmit(desk_code, 280 * K, K, 0, seed=K, noise=False)
    res = decode_single_cell(sum(xs), books, sigma2=0.0)
    np.testing.assert_array_equal(res.bits, msgs)
    assert not res.aborted


def test_single_user_matches_reference_loop(desk_code):
    books, xs, msgs, sigma2, rng = _transmit(desk_code, 280, 1, 5.0, seed=21)
    y = gmac_transmit(xs, sigma2, rng)
    res = decode_single_cell(y, books, T_amp=12, early_stop=False)
    A = books[0].matrix.dense()
    ref = reference_amp(A, y, lambda a: bp_denoiser_round(desk_code, a, BeliefState.fresh(desk_code), 1),
                        64, 16, 12)
    np.testing.assert_allclose(res.beliefs[0], ref, atol=1e-9)
    np.testing.assert_array_equal(res.symbols[0], ref.argmax(axis=1))


def test_single_ap_cell_free_is_single_cell(desk_code):
    books, xs, _, sigma2, rng = _transmit(desk_code, 560, 2, 3.0, seed=22)
    y = gmac_transmit(xs, sigma2, rng)
    a = decode_single_cell(y, books, T_amp=10, early_stop=False)
    b = decode_cell_free([y], Topology.single_cell(2), books, T_amp=10, early_stop=False)
    assert (a.beliefs == b.beliefs).all()
    assert (a.bits == b.bits).all()
    assert a.tau2_history == b.tau2_history


def test_early_stop_does_not_change_answer(desk_code):
    for seed in range(5):
        books, xs, msgs, sigma2, rng = _transmit(desk_code, 560, 2, 4.5, seed=30 + seed)
        y = gmac_transmit(xs, sigma2, rng)
        fast = decode_single_cell(y, books, early_stop=True)
        slow = decode_single_cell(y, books, early_stop=False)
        assert fast.iterations <= slow.iterations
        assert (slow.bits != msgs).sum() <= (fast.bits != msgs).sum()


def test_states_remain_pmfs_and_trace_records(desk_code):
    books, xs, _, sigma2, rng = _transmit(desk_code, 560, 2, 2.0, seed=40)
    buf = io.StringIO()
    res = decode_single_cell(gmac_transmit(xs, sigma2, rng), books, T_amp=6,
                             early_stop=False, trace=buf)
    np.testing.assert_allclose(res.beliefs.sum(-1), 1.0, atol=1e-9)
    assert (res.beliefs >= 0).all()
    records = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert [r["t"] for r in records] == list(range(6))
    assert set(records[0]) == {"t", "tau2", "residual_norm", "syndrome_ok"}
    assert records[0]["tau2"] == res.tau2_history[0]


def test_residual_shrinks_in_noiseless_run(desk_code):
    books, xs, _, _, _ = _transmit(desk_code, 560, 2, 0, seed=41, noise=False)
    res = decode_single_cell(sum(xs), books, T_amp=8, early_stop=False)
    norms = [r[0] for r in res.residual_norms]
    assert norms[-1] < 1e-6 * norms[0]


def test_cell_free_topology_decodes_noiseless(desk_code):
    topo = Topology.from_edges(2, 3, [[0, 0], [0, 1], [1, 1], [1, 2]])
    books, xs, msgs, _, _ = _transmit(desk_code, 560, 3, 0, seed=42, noise=False)
    ys = [xs[0] + xs[1], xs[1] + xs[2]]
    res = decode_cell_free(ys, topo, books)
    np.testing.assert_array_equal(res.bits, msgs)
    assert len(res.tau2_history[0]) == 2


def test_non_finite_observation_aborts(desk_code):
    books, xs, _, _, _ = _transmit(desk_code, 280, 1, 0, seed=43, noise=False)
    y = xs[0].copy()
    y[3] = np.inf
    res = decode_single_cell(y, books)
    assert res.aborted and "non-finite" in res.abort_reason


def test_geometry_checks(desk_code):
    with pytest.raises(ValueError, match="geometry"):
        UserCodebook(SensingMatrix(0, 50, 32, 16), desk_code)
    books = [UserCodebook(SensingMatrix(0, 50, 64, 16), desk_code),
             UserCodebook(SensingMatrix(1, 60, 64, 16), desk_code)]
    with pytest.raises(ValueError):
        decode_single_cell(np.zeros(50), books)


def test_per_iteration_cost_linear_in_users(desk_code):
    n, T = 2240, 10
    times = []
    for K in (1, 2, 4, 8):
        books, xs, _, sigma2, rng = _transmit(desk_code, n, K, 3.0, seed=50 + K)
        y = gmac_transmit(xs, sigma2, rng)
        decode_single_cell(y, books, T_amp=1, early_stop=False)
        best = np.inf
        for _ in range(5):
            t0 = time.perf_counter()
            decode_single_cell(y, books, T_amp=T, early_stop=False)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    Ks = np.array([1, 2, 4, 8])
    slope, icpt = np.polyfit(Ks, times, 1)
    fit = slope * Ks + icpt
    assert slope > 0
    assert (np.array(times) <= 1.3 * fit).all(), (times, fit.tolist())
