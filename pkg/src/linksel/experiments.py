"""
Glue between the simulator and the closed-form predictors: theory for a
finished run, SNR sweeps and the comparison records the CLI reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .config import build_scenario
from .sim import ALGORITHMS, run_scenario, snr_to_noise_var
from .topology import metropolis_matrix


def _inputs(scenario, cross="independent"):
    sig = scenario.signal
    return analysis.SteadyStateInputs.from_noise(
        scenario.M, scenario.step_sizes(), sig.noise_variances,
        sig.regressor_variance(), cross=cross)


def _tracking_Q(scenario):
    proc = scenario.signal.process
    return proc.covariance(scenario.M) if proc.mode == "markov" else None


def _rls_index(scenario):
    # middle of the steady-state window, 1-based
    n = max(1, int(round(scenario.steady_fraction * scenario.n_iter)))
    return scenario.n_iter - n // 2


def predict_from_result(result, coupling="decoupled", trace_factor="length", cross="independent"):
    """Prediction using the weights the simulation actually settled on.

    The decoupled form takes the per-node second moments of the combination
    weights over the steady-state window; the coupled form takes their mean.
    """
    sc = result.scenario
    weights = result.weight_moments if coupling == "decoupled" else result.weight_mean
    pred = analysis.predict(sc.algorithm, _inputs(sc, cross), weights, i=_rls_index(sc),
                            Q=_tracking_Q(sc), coupling=coupling, trace_factor=trace_factor)
    pred.meta["weights"] = "simulated"
    return pred


def predict_from_rule(scenario, coupling="decoupled", trace_factor="length", cross="independent"):
    """Prediction without simulation.

    ES and diffusion use every link (all indicators one). SI uses the
    asymptotic offsets of :func:`analysis.hkl_rule`, ranking neighbors by
    noise variance and taking ``|e_0k| = sigma_n,k^2``.
    """
    sc = scenario
    noise = sc.signal.noise_variances
    if sc.policy == "sparsity":
        rows, _ = analysis.si_weight_rows(sc.topology, sc.si, noise, noise)
    else:
        rows = metropolis_matrix(sc.topology)
    weights = rows if coupling == "coupled" else analysis.moments_from_rows(rows)
    pred = analysis.predict(sc.algorithm, _inputs(sc, cross), weights, i=_rls_index(sc),
                            Q=_tracking_Q(sc), coupling=coupling, trace_factor=trace_factor)
    pred.meta["weights"] = "rule"
    return pred


@dataclass
class Comparison:
    """Predicted against simulated steady-state network MSE."""

    algorithm: str
    snr_db: float
    simulated: float
    prediction: analysis.TheoryPrediction
    rule_prediction: analysis.TheoryPrediction
    metric: str
    extra: dict = field(default_factory=dict)

    @property
    def simulated_db(self):
        return 10 * np.log10(self.simulated)

    @property
    def gap_db(self):
        return self.prediction.network_db - self.simulated_db

    def passes(self, tolerance_db):
        return abs(self.gap_db) <= tolerance_db

    def to_dict(self):
        return {
            "algorithm": self.algorithm,
            "snr_db": self.snr_db,
            "metric": self.metric,
            "simulated_mse": self.simulated,
            "simulated_db": self.simulated_db,
            "predicted_db": self.prediction.network_db,
            "gap_db": self.gap_db,
            "tracking_term": float(self.prediction.tracking.mean()),
            "prediction": self.prediction.to_dict(),
            "rule_prediction": self.rule_prediction.to_dict(),
            **self.extra,
        }


def compare(result, theory, snr_db=None):
    """Build a :class:`Comparison` from a finished run and a theory config section."""
    kw = dict(coupling=theory["coupling"], trace_factor=theory["trace_factor"],
              cross=theory["cross"])
    pred = predict_from_result(result, **kw)
    rule = predict_from_rule(result.scenario, **kw)
    metric = theory["metric"]
    other = "mse_prior" if metric == "mse" else "mse"
    return Comparison(
        algorithm=result.scenario.algorithm, snr_db=snr_db,
        simulated=result.steady_state_network(metric), prediction=pred,
        rule_prediction=rule, metric=metric,
        extra={f"simulated_db_{other}": result.steady_state_db(other)})


def sweep_snr(config, snr_list, algorithms=None, workers=None, on_result=None):
    """Simulate and predict every algorithm at every SNR.

    The nominal noise level becomes ``sigma_x^2 / SNR``; elevated nodes keep
    their multiplier. Returns a list of :class:`Comparison`.
    """
    snr_list = list(snr_list)
    if not snr_list:
        raise ValueError("SNR list is empty")
    algorithms = list(algorithms or config["algorithms"])
    workers = workers or config["run"]["workers"]
    out = []
    for snr in snr_list:
        for alg in algorithms:
            probe = build_scenario(config, alg)
            sx = float(np.mean(probe.signal.regressor_variance()))
            sc = build_scenario(config, alg, base_var=float(snr_to_noise_var(snr, sx)))
            res = run_scenario(sc, workers=workers)
            if on_result is not None:
                on_result(snr, res)
            out.append(compare(res, config["theory"], snr_db=float(snr)))
    return out


def link_selection_gains(results):
    """dB gain of each link-selection algorithm over its fixed counterpart."""
    from .sim import LINK_SELECTION
    gains = {}
    for alg, base in LINK_SELECTION.items():
        if alg in results and base in results:
            gains[alg] = results[base].steady_state_db() - results[alg].steady_state_db()
    return gains


def time_to_fraction(curve, fraction=0.1, initial=None, limit=None):
    """First 1-based instant where ``curve`` drops to ``fraction`` of ``initial``.

    Returns ``None`` if it never does within ``limit`` instants.
    """
    curve = np.asarray(curve, dtype=float)
    if limit is not None:
        curve = curve[:limit]
    ref = curve[0] if initial is None else initial
    hit = np.flatnonzero(curve <= fraction * ref)
    return int(hit[0]) + 1 if hit.size else None


__all__ = ["Comparison", "compare", "predict_from_result", "predict_from_rule", "sweep_snr",
           "link_selection_gains", "time_to_fraction", "ALGORITHMS"]
