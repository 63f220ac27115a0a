"""
Monte-Carlo engine.

Each instant follows the two-phase schedule: every node adapts on its own
measurement, then every node combines the local estimates of its
neighborhood. Runs are processed in fixed-size batches that are vectorised
over runs and nodes; per-batch sums are reduced in batch order, so results do
not depend on how batches are scheduled.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .adapt import DivergenceError, check_finite, lms_update, rls_update, stability_bound
from .combine import SiParams, make_combiner

ALGORITHMS = {
    "diff-lms": ("lms", "fixed"),
    "diff-rls": ("rls", "fixed"),
    "es-lms": ("lms", "exhaustive"),
    "es-rls": ("rls", "exhaustive"),
    "si-lms": ("lms", "sparsity"),
    "si-rls": ("rls", "sparsity"),
}
LINK_SELECTION = {"es-lms": "diff-lms", "es-rls": "diff-rls",
                  "si-lms": "diff-lms", "si-rls": "diff-rls"}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one simulated experiment.

    ``mu`` may be a scalar or one step size per node. ``steady_fraction`` sets
    the trailing share of iterations averaged for steady-state figures.
    """

    topology: object
    signal: object
    algorithm: str = "diff-lms"
    n_iter: int = 1000
    runs: int = 100
    mu: object = 0.045
    lam: float = 0.97
    delta: float = 0.81
    si: SiParams = field(default_factory=lambda: SiParams(4e-3, 10.0))
    degrees: str = "induced"
    seed: int = 0
    batch_size: int = 50
    trace_runs: int = 1
    steady_fraction: float = 0.1
    name: str = "custom"

    @property
    def M(self):
        return self.signal.M

    @property
    def n_nodes(self):
        return self.topology.n_nodes

    @property
    def adaptation(self):
        return ALGORITHMS[self.algorithm][0]

    @property
    def policy(self):
        return ALGORITHMS[self.algorithm][1]

    def step_sizes(self):
        return np.broadcast_to(np.asarray(self.mu, dtype=float), (self.n_nodes,)).copy()

    def with_algorithm(self, algorithm):
        return replace(self, algorithm=algorithm)

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ScenarioError(f"unknown algorithm {self.algorithm!r}; "
                                f"choose from {sorted(ALGORITHMS)}")
        if self.n_iter <= self.M:
            raise ScenarioError(f"need more iterations than unknowns (I={self.n_iter}, M={self.M})")
        if self.runs < 1 or self.batch_size < 1:
            raise ScenarioError("runs and batch_size must be positive")
        if self.signal.n_nodes != self.n_nodes:
            raise ScenarioError("signal and topology disagree on the number of nodes")
        if not 0 < self.lam <= 1 or self.delta <= 0:
            raise ScenarioError("need 0 < lam <= 1 and delta > 0")
        if np.any(self.step_sizes() <= 0):
            raise ScenarioError("step sizes must be positive")
        if not 0 < self.steady_fraction <= 1:
            raise ScenarioError("steady_fraction must lie in (0, 1]")
        if self.degrees not in ("induced", "full"):
            raise ScenarioError(f"unknown degree convention {self.degrees!r}")
        if self.adaptation == "lms":
            self._check_step_sizes()
        return self

    def _check_step_sizes(self):
        mu = self.step_sizes()
        var = np.asarray(self.signal.regressor_variance(), dtype=float)
        for k in range(self.n_nodes):
            bound = stability_bound(var[k] * np.eye(1))
            if mu[k] >= bound:
                warnings.warn(f"step size {mu[k]:g} at node {k} exceeds the "
                              f"stability bound {bound:g}", RuntimeWarning, stacklevel=3)


@dataclass
class SimResult:
    """Run-averaged learning curves plus selection statistics.

    ``mse`` is ``E|d_k(i) - omega_k(i)^T x_k(i)|^2`` with the estimate after
    the combination at instant ``i``; ``mse_prior`` uses ``omega_k(i-1)``;
    ``msd`` is ``E||omega_k(i) - omega_0(i)||^2``. All are ``(I, N)``;
    ``msd_initial`` is the deviation of the starting estimates, ``(N,)``.
    """

    scenario: Scenario
    mse: np.ndarray
    mse_prior: np.ndarray
    msd: np.ndarray
    weight_mean: np.ndarray
    weight_moments: np.ndarray
    trace: dict
    change_rate: np.ndarray = None
    elapsed: float = 0.0
    msd_initial: np.ndarray = None

    @property
    def steady_window(self):
        I = self.mse.shape[0]
        n = max(1, int(round(self.scenario.steady_fraction * I)))
        return slice(I - n, I)

    def network(self, metric="mse"):
        return getattr(self, metric).mean(axis=1)

    def network_db(self, metric="mse"):
        return 10 * np.log10(self.network(metric))

    def steady_state(self, metric="mse"):
        """Per-node mean over the steady-state window (linear units)."""
        return getattr(self, metric)[self.steady_window].mean(axis=0)

    def steady_state_network(self, metric="mse"):
        return float(self.steady_state(metric).mean())

    def steady_state_db(self, metric="mse"):
        return 10 * np.log10(self.steady_state_network(metric))

    def gap(self):
        """Per-node distance to the true parameter, ``sqrt(msd)``."""
        return np.sqrt(self.msd)

    def initial_gap(self):
        return np.sqrt(self.msd_initial)


def _batches(runs, size):
    return [list(range(s, min(s + size, runs))) for s in range(0, runs, size)]


def _run_batch(scenario, runs):
    sc = scenario
    N, M, I = sc.n_nodes, sc.M, sc.n_iter
    B = len(runs)
    data = sc.signal.draw(I, sc.seed, runs)
    combiner = make_combiner(sc.policy, sc.topology, si=sc.si, degrees=sc.degrees)
    mu = sc.step_sizes()

    omega = np.zeros((B, N, M))
    P = np.broadcast_to(np.eye(M) / sc.delta, (B, N, M, M)).copy() if sc.adaptation == "rls" else None
    mse = np.zeros((I, N))
    mse_prior = np.zeros((I, N))
    msd = np.zeros((I, N))
    n_steady = max(1, int(round(sc.steady_fraction * I)))
    steady_from = I - n_steady
    change_from = I - max(2, int(round(0.2 * I)))
    w_sum = np.zeros((N, N))
    w2_sum = np.zeros((N, N, N))
    changes = np.zeros(N)
    n_keep = sum(1 for r in runs if r < sc.trace_runs)
    trace = None
    if n_keep:
        if sc.policy == "exhaustive":
            trace = np.empty((n_keep, I, N), dtype=np.int32)
        elif sc.policy == "sparsity":
            trace = np.empty((n_keep, I, N, N))
    prev_choice = None

    msd0 = np.zeros(N)
    for i in range(I):
        X, d, w0 = data.step(i)
        if i == 0:
            dev0 = omega - w0[:, None, :]
            msd0 = np.einsum("bnm,bnm->n", dev0, dev0)
        if sc.adaptation == "lms":
            psi, e_prior = lms_update(omega, X, d, mu)
        else:
            psi, e_prior = rls_update(omega, P, X, d, sc.lam)
        try:
            check_finite(psi, f"{sc.algorithm} at instant {i + 1}")
        except DivergenceError as exc:
            raise DivergenceError(f"{exc} (runs {runs[0]}..{runs[-1]})") from None

        omega, info = combiner(psi, X, d)
        e_post = d - np.einsum("bnm,bnm->bn", omega, X)
        mse[i] = (e_post ** 2).sum(axis=0)
        mse_prior[i] = (e_prior ** 2).sum(axis=0)
        dev = omega - w0[:, None, :]
        msd[i] = np.einsum("bnm,bnm->n", dev, dev)

        if sc.policy == "exhaustive":
            rows = combiner.table[np.arange(N), info]
            W = combiner.weights[rows]
            if trace is not None:
                trace[:, i] = info[:n_keep]
            if i >= change_from and prev_choice is not None:
                changes += (info != prev_choice).sum(axis=0)
            prev_choice = info
        elif sc.policy == "sparsity":
            W = info
            if trace is not None:
                trace[:, i] = info[:n_keep]
        else:
            W = None
        if i >= steady_from:
            if W is None:
                w_sum += B * combiner.C
                w2_sum += B * np.einsum("kl,kq->klq", combiner.C, combiner.C)
            else:
                w_sum += W.sum(axis=0)
                w2_sum += np.einsum("bkl,bkq->klq", W, W)

    return dict(mse=mse, mse_prior=mse_prior, msd=msd, msd0=msd0, w_sum=w_sum, w2_sum=w2_sum,
                changes=changes, trace=trace, n_steady=n_steady,
                n_change=I - change_from - 1)


def run_scenario(scenario, workers=1):
    """Simulate ``scenario.runs`` independent realizations.

    Raises
    ------
    DivergenceError
        If any estimate becomes non-finite or exceeds the divergence limit.
    """
    sc = scenario.validate()
    t0 = time.perf_counter()
    batches = _batches(sc.runs, sc.batch_size)
    if workers > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_batch, [sc] * len(batches), batches))
    else:
        parts = [_run_batch(sc, b) for b in batches]

    keys = ("mse", "mse_prior", "msd", "msd0", "w_sum", "w2_sum", "changes")
    tot = {k: np.zeros_like(parts[0][k]) for k in keys}
    for part in parts:                       # fixed reduction order
        for k in keys:
            tot[k] += part[k]
    R = sc.runs
    n_steady = parts[0]["n_steady"]
    traces = [p["trace"] for p in parts if p["trace"] is not None]
    trace = {"policy": sc.policy}
    if traces:
        trace["data"] = np.concatenate(traces)
    change_rate = None
    if sc.policy == "exhaustive":
        change_rate = tot["changes"] / (R * parts[0]["n_change"])
    return SimResult(
        scenario=sc,
        mse=tot["mse"] / R,
        mse_prior=tot["mse_prior"] / R,
        msd=tot["msd"] / R,
        msd_initial=tot["msd0"] / R,
        weight_mean=tot["w_sum"] / (R * n_steady),
        weight_moments=tot["w2_sum"] / (R * n_steady),
        trace=trace,
        change_rate=change_rate,
        elapsed=time.perf_counter() - t0,
    )


def snr_to_noise_var(snr_db, signal_var=1.0):
    return signal_var / 10 ** (np.asarray(snr_db, dtype=float) / 10)
