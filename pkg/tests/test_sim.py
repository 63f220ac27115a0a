import warnings
from dataclasses import replace

import numpy as np
import pytest

from linksel import config as cfgmod
from linksel.adapt import DivergenceError, NodeState, lms_adapt, rls_adapt
from linksel.combine import (CombineInput, SiParams, combine_exhaustive, combine_fixed,
                             combine_sparsity)
from linksel.experiments import sweep_snr
from linksel.signals import Measurement, RegressorModel, WsnSignal
from linksel.sim import Scenario, ScenarioError, run_scenario, snr_to_noise_var
from linksel.topology import Topology, enumerate_candidate_sets


def _wsn(topo, M=4, noise=1e-3, alphas=None, seed=0):
    n = topo.n_nodes
    alphas = np.random.default_rng(seed).uniform(0, 0.5, n) if alphas is None else alphas
    return WsnSignal(RegressorModel(alphas, np.broadcast_to(noise, (n,)), M))


def test_single_node_lms_reaches_noise_floor():
    topo = Topology(np.zeros((1, 1), dtype=bool))
    sig = WsnSignal(RegressorModel(np.zeros(1), np.full(1, 1e-3), 10))
    res = run_scenario(Scenario(topo, sig, "diff-lms", n_iter=2000, runs=1, mu=0.045))
    final = res.mse_prior[-200:].mean()
    # classical J_min (1 + mu M sigma_x^2 / 2), judged within 3 dB
    target = 1e-3 * (1 + 0.045 * 10 / 2)
    assert abs(10 * np.log10(final / target)) < 3


def test_identical_seeds_identical_results(line3):
    sc = Scenario(line3, _wsn(line3), "es-rls", n_iter=60, runs=3, seed=4)
    a, b = run_scenario(sc), run_scenario(sc)
    for field in ("mse", "mse_prior", "msd", "weight_moments"):
        assert getattr(a, field).tobytes() == getattr(b, field).tobytes()


def test_parallel_equals_serial(five_node):
    sc = Scenario(five_node, _wsn(five_node), "si-lms", n_iter=40, runs=6, batch_size=2, seed=1)
    a = run_scenario(sc)
    b = run_scenario(sc, workers=2)
    assert a.mse.tobytes() == b.mse.tobytes()
    assert a.weight_mean.tobytes() == b.weight_mean.tobytes()


def test_zero_rho_si_reproduces_diffusion(five_node):
    sc = Scenario(five_node, _wsn(five_node), "si-lms", n_iter=100, runs=4, si=SiParams(0.0, 10.0))
    a = run_scenario(sc)
    b = run_scenario(sc.with_algorithm("diff-lms"))
    assert a.mse.tobytes() == b.mse.tobytes()
    assert a.msd.tobytes() == b.msd.tobytes()


@pytest.mark.parametrize("alg", ["diff-lms", "diff-rls", "es-lms", "es-rls", "si-lms", "si-rls"])
def test_engine_matches_per_node_reference(five_node, alg):
    """Rebuild one run with the single-node functions and the two-phase schedule."""
    topo = five_node
    sig = _wsn(topo, M=3)
    sc = Scenario(topo, sig, alg, n_iter=40, runs=1, mu=0.05, lam=0.97, delta=0.81,
                  si=SiParams(0.02, 10.0), trace_runs=0)
    res = run_scenario(sc)
    data = sig.draw(sc.n_iter, sc.seed, [0])
    N, M = topo.n_nodes, 3
    states = [NodeState(M, mu=0.05, lam=0.97, delta=0.81) for _ in range(N)]
    adapt = lms_adapt if sc.adaptation == "lms" else rls_adapt
    for i in range(sc.n_iter):
        X, d, w0 = data.step(i)
        psi = np.array([adapt(states[k], Measurement(k, i + 1, d[0, k], X[0, k]))
                        for k in range(N)])
        omegas = []
        for k in range(N):
            inp = CombineInput.from_network(topo, k, d[0, k], X[0, k], psi)
            if sc.policy == "fixed":
                om = combine_fixed(inp)
            elif sc.policy == "exhaustive":
                om, _ = combine_exhaustive(inp, enumerate_candidate_sets(topo, k), topo)
            else:
                om, _ = combine_sparsity(inp, sc.si)
            omegas.append(om)
        for k in range(N):
            states[k].omega = omegas[k]          # written only after every node combined
        err = d[0] - np.einsum("km,km->k", np.array(omegas), X[0])
        np.testing.assert_allclose(res.mse[i], err ** 2, rtol=1e-9, atol=1e-15)


def test_validation():
    topo = Topology.from_edges(2, [(0, 1)])
    sig = _wsn(topo, M=10)
    with pytest.raises(ScenarioError):
        Scenario(topo, sig, "diff-lms", n_iter=10).validate()
    with pytest.raises(ScenarioError):
        Scenario(topo, sig, "magic").validate()
    with pytest.raises(ScenarioError):
        Scenario(topo, sig, runs=0).validate()
    with pytest.warns(RuntimeWarning):
        Scenario(topo, sig, "diff-lms", mu=2.5).validate()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        Scenario(topo, sig, "diff-lms", mu=0.045).validate()


def test_divergence_aborts(line3):
    sc = Scenario(line3, _wsn(line3, alphas=np.zeros(3)), "diff-lms", n_iter=3000, runs=1, mu=3.0)
    with pytest.warns(RuntimeWarning), pytest.raises(DivergenceError):
        run_scenario(sc)


def test_snr_conversion():
    assert snr_to_noise_var(30) == pytest.approx(1e-3)
    assert snr_to_noise_var(0, 2.0) == pytest.approx(2.0)


def _small_config(algs, runs=6, iters=300):
    cfg = cfgmod.preset("wsn-static")
    return cfgmod.apply_overrides(cfg, [f"algorithms=[{','.join(algs)}]", f"run.runs={runs}",
                                        f"run.n_iter={iters}"])


def test_sweep_rejects_empty_list():
    with pytest.raises(ValueError):
        sweep_snr(_small_config(["diff-lms"]), [])


def test_sweep_is_monotone_and_vanishes_at_high_snr():
    cfg = _small_config(["diff-lms", "es-rls"])
    comps = sweep_snr(cfg, [0, 10, 20, 30, 200])
    for alg in ("diff-lms", "es-rls"):
        vals = [c.simulated for c in comps if c.algorithm == alg]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-6


@pytest.fixture(scope="module")
def wsn_results():
    cfg = _small_config(["diff-lms", "diff-rls", "es-lms", "es-rls", "si-lms", "si-rls"],
                        runs=30, iters=1000)
    return {a: run_scenario(cfgmod.build_scenario(cfg, a)) for a in cfg["algorithms"]}


def _floor_check(res, metric):
    sc = res.scenario
    floor = sc.signal.noise_variances.mean()
    window = getattr(res, metric)[res.steady_window].mean(axis=1)
    # per-instant network MSE over R runs: spread of the window mean
    se = window.std(ddof=1) / np.sqrt(len(window))
    return window.mean() >= floor - 3 * se


@pytest.mark.parametrize("alg", ["diff-lms", "diff-rls", "es-lms", "es-rls", "si-lms", "si-rls"])
def test_a_priori_mse_stays_above_mmse(wsn_results, alg):
    assert _floor_check(wsn_results[alg], "mse_prior")


@pytest.mark.xfail(strict=True, reason="the error after combining is fitted to the same "
                   "sample it is measured on, so it can dip below the Wiener floor")
def test_combined_estimate_mse_stays_above_mmse(wsn_results):
    assert all(_floor_check(r, "mse") for r in wsn_results.values())


@pytest.mark.xfail(strict=True, reason="with a static target the error-pattern criterion keeps "
                   "switching sets at the noise level; see the decisions log")
def test_es_selection_stabilises(wsn_results):
    for alg in ("es-lms", "es-rls"):
        assert wsn_results[alg].change_rate.max() < 0.05


def _per_run_steady_mse(sc, runs):
    out = []
    for r in range(runs):
        res = run_scenario(replace(sc, runs=1, seed=1000 + r))
        out.append(res.steady_state_network())
    return np.array(out)


@pytest.mark.xfail(strict=True, reason="exhaustive search fits the combined estimate to the "
                   "current sample, which lowers the measured MSE even when every link is "
                   "equally good; see the decisions log")
def test_es_matches_fixed_with_ideal_links():
    from scipy.stats import ttest_ind
    topo = Topology.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    sig = _wsn(topo, M=4, alphas=np.zeros(4))
    base = Scenario(topo, sig, "diff-lms", n_iter=400, runs=1, trace_runs=0)
    fixed = _per_run_steady_mse(base, 100)
    es = _per_run_steady_mse(base.with_algorithm("es-lms"), 100)
    assert ttest_ind(es, fixed, equal_var=False).pvalue > 0.05
