from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from linksel import analysis
from linksel.analysis import (HklRule, SteadyStateInputs, UnstableConfiguration, complexity_counts,
                              hkl_rule, instrumented_combine_counts, mmse, mse_prediction,
                              moments_from_rows, steady_state_K_es_lms, steady_state_K_es_rls,
                              steady_state_K_si_lms, steady_state_K_si_rls, tracking_mse)
from linksel.combine import SiParams
from linksel.signals import RegressorModel, WsnSignal, fixture_path
from linksel.sim import Scenario, run_scenario
from linksel.topology import Topology, metropolis_matrix


# MMSE ---------------------------------------------------------------------

def test_mmse_without_correlation():
    assert mmse(2.5, np.zeros(3), np.eye(3)) == 2.5


def test_mmse_linear_model_hits_noise_floor():
    w0 = np.array([0.5, -1.0, 2.0])
    sn2 = 1e-3
    assert mmse(w0 @ w0 + sn2, w0, np.eye(3)) == pytest.approx(sn2, abs=1e-12)


def test_mmse_against_inverse_oracle():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(5, 5))
    R = A @ A.T + 5 * np.eye(5)
    p = rng.normal(size=5)
    sd2 = 10.0
    assert mmse(sd2, p, R) == pytest.approx(sd2 - p @ np.linalg.inv(R) @ p, abs=1e-10)


def test_mmse_singular():
    with pytest.raises(ValueError):
        mmse(1.0, np.ones(2), np.zeros((2, 2)))


# steady-state fixed points -------------------------------------------------

def _single(mu=0.045, J=1e-3, lam=1.0, M=4):
    return SteadyStateInputs(M=M, mu=[mu], sigma_x2=[lam], j_min=[J])


def test_isolated_node_is_classical_lms():
    mu, J, lam = 0.045, 1e-3, 1.3
    K = steady_state_K_es_lms(_single(mu, J, lam), np.array([[1.0]]))
    assert K.shape == (1, 4)
    np.testing.assert_allclose(K, mu ** 2 * J * lam / (1 - (1 - mu * lam) ** 2), rtol=1e-14)
    # closed form simplification mu J / (2 - mu lam)
    np.testing.assert_allclose(K, mu * J / (2 - mu * lam), rtol=1e-12)


def test_vanishing_step_size():
    vals = [steady_state_K_es_lms(_single(mu), np.array([[1.0]]))[0, 0] for mu in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-9


def test_cross_terms_enter_the_sum(line3):
    C = metropolis_matrix(line3)
    inp = SteadyStateInputs.from_noise(2, 0.05, [1e-3, 2e-3, 3e-3], [1.0, 2.0, 0.5])
    K = steady_state_K_es_lms(inp, C)[:, 0]
    g = 1 - inp.mu * inp.sigma_x2
    for k in range(3):
        c = C[k]
        num = sum(c[l] ** 2 * inp.mu[l] ** 2 * inp.j_min[l] * inp.sigma_x2[l] for l in range(3))
        den = 1 - sum(c[l] ** 2 * g[l] ** 2 for l in range(3))
        den -= 2 * sum(c[l] * c[q] * g[l] * g[q] for l in range(3) for q in range(l + 1, 3))
        assert K[k] == pytest.approx(num / den, rel=1e-12)


def test_correlated_wiener_errors_add_cross_terms(line3):
    C = metropolis_matrix(line3)
    a = SteadyStateInputs.from_noise(2, 0.05, [1e-3] * 3, 1.0)
    b = SteadyStateInputs.from_noise(2, 0.05, [1e-3] * 3, 1.0, cross="correlated")
    assert np.all(steady_state_K_es_lms(b, C) > steady_state_K_es_lms(a, C))


def test_unstable_configuration_is_reported():
    with pytest.raises(UnstableConfiguration):
        steady_state_K_es_lms(_single(mu=2.5), np.array([[1.0]]))


def test_zero_rho_si_equals_full_es(line3):
    C = metropolis_matrix(line3)
    inp = SteadyStateInputs.from_noise(3, [0.03, 0.04, 0.05], [1e-3, 5e-3, 2e-3], 1.0)
    noise = inp.j_min
    rows, rules = analysis.si_weight_rows(line3, SiParams(0.0, 10.0), noise, noise)
    es = steady_state_K_es_lms(inp, C)          # every alpha = 1
    np.testing.assert_allclose(steady_state_K_si_lms(inp, C, rules), es, rtol=1e-12, atol=0)
    np.testing.assert_allclose(steady_state_K_si_rls(inp, C, rules, i=500),
                               steady_state_K_es_rls(inp, C, i=500), rtol=1e-12, atol=0)


def test_hkl_rule_shape():
    topo = Topology.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    noise = np.array([1e-3, 1e-2, 5e-4, 2e-3])
    rule = hkl_rule(topo, 0, noise, SiParams(4e-3, 10.0), noise[0])
    h = rule.offsets(4)
    assert np.count_nonzero(h > 0) == 1 and np.count_nonzero(h < 0) == 1
    assert h[rule.largest] == -h[rule.smallest] == pytest.approx(4e-3 * 10 / (1 + 10 * 1e-3))
    assert (rule.largest, rule.smallest) == (1, 2)
    c = metropolis_matrix(topo)[0]
    assert abs((c - h).sum() - 1) < 1e-15


def test_hkl_rule_caps_at_available_weight():
    topo = Topology.from_edges(3, [(0, 1), (0, 2)])
    noise = np.array([1e-3, 1e-2, 1e-4])
    rule = hkl_rule(topo, 0, noise, SiParams(0.5, 10.0), noise[0])
    assert rule.magnitude == pytest.approx(metropolis_matrix(topo)[0, 1])


def test_rls_requires_enough_samples():
    with pytest.raises(ValueError):
        steady_state_K_es_rls(_single(M=4), np.array([[1.0]]), i=5)


def test_rls_decreases_in_time(line3):
    C = metropolis_matrix(line3)
    inp = SteadyStateInputs.from_noise(10, 0.0, [1e-3, 2e-3, 1e-3], 1.0)
    vals = [steady_state_K_es_rls(inp, C, i)[:, 0] for i in range(13, 2000, 37)]
    assert np.all(np.diff(np.array(vals), axis=0) < 0)
    pred = mse_prediction(steady_state_K_es_rls(inp, C, 10 ** 7), inp)
    np.testing.assert_allclose(pred.mse, inp.j_min, rtol=1e-5)


def test_single_node_rls_decays_like_inverse_time():
    inp = _single(M=4)
    k1 = steady_state_K_es_rls(inp, np.array([[1.0]]), 1004)[0, 0]
    k2 = steady_state_K_es_rls(inp, np.array([[1.0]]), 2004)[0, 0]
    assert k1 / k2 == pytest.approx(2000 / 1000, rel=1e-3)


def test_coupled_reading_matches_decoupled_for_isolated_node():
    inp = _single()
    np.testing.assert_allclose(steady_state_K_es_lms(inp, np.array([[1.0]]), coupling="coupled"),
                               steady_state_K_es_lms(inp, np.array([[1.0]])), rtol=1e-10)


@given(st.floats(1e-4, 0.5), st.floats(1e-5, 1.0), st.floats(0.1, 3.0), st.integers(1, 20))
def test_prediction_above_floor(mu, J, lam, M):
    inp = SteadyStateInputs(M=M, mu=[mu], sigma_x2=[lam], j_min=[J])
    if mu * lam >= 2:
        return
    K = steady_state_K_es_lms(inp, np.array([[1.0]]))
    assert np.all(K >= 0)
    for tf in ("length", "trace"):
        assert np.all(mse_prediction(K, inp, tf).mse >= inp.j_min)


# tracking -----------------------------------------------------------------

def test_tracking_with_zero_Q_is_unchanged():
    inp = _single()
    base = mse_prediction(steady_state_K_es_lms(inp, np.array([[1.0]])), inp)
    out = tracking_mse(base, inp, np.zeros((4, 4)))
    np.testing.assert_array_equal(out.mse, base.mse)


def test_tracking_term_value():
    inp = SteadyStateInputs(M=10, mu=[0.045], sigma_x2=[1.0], j_min=[1e-3])
    base = mse_prediction(steady_state_K_es_lms(inp, np.array([[1.0]])), inp)
    out = tracking_mse(base, inp, 0.01 * np.eye(10))
    assert out.tracking[0] == pytest.approx(1.0, abs=1e-15)
    assert out.mse[0] - base.mse[0] == pytest.approx(1.0, abs=1e-15)
    assert out.mse[0] >= base.mse[0]


@given(st.floats(0.0, 0.1), st.integers(1, 12), st.floats(0.1, 4.0))
def test_tracking_difference_is_exact(sz2, M, sx2):
    inp = SteadyStateInputs(M=M, mu=[0.01], sigma_x2=[sx2], j_min=[1e-3])
    base = mse_prediction(steady_state_K_es_lms(inp, np.array([[1.0]])), inp)
    out = tracking_mse(base, inp, sz2 * np.eye(M))
    assert out.mse[0] - base.mse[0] == pytest.approx(M * sx2 * M * sz2, rel=1e-12, abs=1e-15)


def test_tracking_rejects_indefinite_Q():
    inp = _single()
    base = mse_prediction(steady_state_K_es_lms(inp, np.array([[1.0]])), inp)
    with pytest.raises(ValueError):
        tracking_mse(base, inp, -np.eye(4))


# Monte-Carlo cross-checks on a 3-node line -----------------------------------

def _line_run(line3, alg, n_iter, lam=0.97):
    sig = WsnSignal(RegressorModel(np.zeros(3), np.full(3, 1e-3), 10))
    return run_scenario(Scenario(line3, sig, alg, n_iter=n_iter, runs=100, mu=0.045, lam=lam,
                                 delta=0.81, seed=5))


def test_es_lms_fixed_point_against_simulation(line3):
    res = _line_run(line3, "es-lms", 5000)
    inp = SteadyStateInputs.from_noise(10, 0.045, np.full(3, 1e-3), 1.0)
    K = steady_state_K_es_lms(inp, res.weight_moments)[:, 0]
    simulated = res.steady_state("msd") / 10
    np.testing.assert_allclose(K, simulated, rtol=0.10)


@pytest.mark.xfail(strict=True, reason="the RLS fixed point treats the 1/(i-M) decay as "
                   "stationary and lands well below the simulated weight-error power; "
                   "see the decisions log")
@pytest.mark.parametrize("alg", ["es-rls", "si-rls"])
def test_rls_fixed_point_against_simulation(line3, alg):
    res = _line_run(line3, alg, 1000, lam=1.0)
    inp = SteadyStateInputs.from_noise(10, 0.0, np.full(3, 1e-3), 1.0)
    K = steady_state_K_es_rls(inp, res.weight_moments, 1000)[:, 0]
    assert np.all(K > 0) and np.all(np.isfinite(K))
    np.testing.assert_allclose(K, res.msd[-1] / 10, rtol=0.10)


# complexity ---------------------------------------------------------------

def test_lms_adaptation_counts():
    assert complexity_counts("lms", 10) == (82, 80, 0)


def test_rls_adaptation_counts():
    assert complexity_counts("rls", 10)[0] == 561


def test_es_lms_counts():
    assert complexity_counts("es-lms", 10, T=5, t=3)[0] == 482


def _binom(T, t):
    return factorial(T) // (factorial(t) * factorial(T - t))


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 30), st.integers(1, 10))
def test_complexity_formulas_against_binomial_oracle(T, t, M, n):
    if t > T:
        with pytest.raises(ValueError):
            complexity_counts("es-lms", M, T=T, t=t)
        return
    C = _binom(T, t)
    assert complexity_counts("es-lms", M, T=T, t=t) == (((t + 1) * C + 8) * M + 2, (t * C + 8) * M, 0)
    assert complexity_counts("es-rls", M, T=T, t=t) == (
        4 * M * M + ((t + 1) * C + 16) * M + 1, 4 * M * M + (t * C + 12) * M - 1, 1)
    assert complexity_counts("es-combine", M, T=T, t=t) == (M * (t + 1) * C, M * t * C, 0)
    assert complexity_counts("si-lms", M, n_neighbors=n) == (
        (8 + 2 * n) * M + 3 * n + 2, (8 + n) * M + 2 * n, n)
    assert complexity_counts("si-rls", M, n_neighbors=n) == (
        4 * M * M + (16 + 2 * n) * M + 3 * n + 1, 4 * M * M + (12 + n) * M + 2 * n - 1, n + 1)


def test_instrumented_counts_same_order_as_tables():
    topo = Topology.load(fixture_path("wsn20.txt"))
    M = 10
    for k in range(topo.n_nodes):
        T = topo.degree(k)
        es = instrumented_combine_counts(topo, k, "exhaustive", M)[0]
        table = sum(complexity_counts("es-combine", M, T=T, t=t)[0] for t in range(1, T + 1))
        assert 0.1 < es / table < 10
        si = instrumented_combine_counts(topo, k, "sparsity", M)[0]
        assert 0.1 < si / complexity_counts("si-combine", M, n_neighbors=T)[0] < 10
