"""
Data models: regressors, measurements and the true parameter trajectory.

Two scenario families are provided:

* :class:`WsnSignal` -- per-node AR(1) scalar inputs fed through a length-``M``
  tapped delay line, as in the sensor-network experiments.
* :class:`GridSignal` -- DC state estimation on a power grid, where bus ``k``
  observes its linearised injection row.

All randomness is drawn from counter-based Philox generators keyed by
``(seed, run, stream, node)`` so any subset of runs can be regenerated in any
order (or in parallel) with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .topology import Topology, TopologyError

STREAMS = {"regressor": 0, "noise": 1, "parameter": 2, "init": 3, "excitation": 4}


def stream_rng(seed, run, stream, node=None):
    """Independent generator for one ``(run, stream[, node])`` triple."""
    key = (run, STREAMS[stream]) if node is None else (run, STREAMS[stream], node)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


# --------------------------------------------------------------------------
# parameter process

@dataclass(frozen=True)
class ParameterProcess:
    """Static or first-order Markov model of the unknown vector.

    ``omega(i+1) = beta * omega(i) + z(i)`` with ``z ~ N(0, sigma_z2 I)`` in
    Markov mode; Static mode keeps the vector fixed.
    """

    mode: str = "static"
    beta: float = 1.0
    sigma_z2: float = 0.0

    def __post_init__(self):
        if self.mode not in ("static", "markov"):
            raise ValueError(f"unknown parameter mode {self.mode!r}")
        if self.sigma_z2 < 0:
            raise ValueError("sigma_z2 must be non-negative")

    def covariance(self, M):
        """Perturbation covariance ``Q`` (zero in static mode)."""
        if self.mode == "static":
            return np.zeros((M, M))
        return self.sigma_z2 * np.eye(M)

    def initial(self, M, rng):
        """Draw ``omega_0(1)``.

        Markov processes with ``|beta| < 1`` start from their stationary law so
        the trajectory has no warm-up; otherwise entries are ``N(0, 1/M)``.
        """
        if self.mode == "markov" and abs(self.beta) < 1 and self.sigma_z2 > 0:
            var = self.sigma_z2 / (1 - self.beta ** 2)
        else:
            var = 1.0 / M
        return rng.normal(scale=np.sqrt(var), size=M)


def step_parameter(process, omega, rng=None, z=None):
    """Advance the true parameter one instant.

    ``z`` may be supplied directly (pre-drawn perturbation); otherwise it is
    drawn from ``rng``.
    """
    omega = np.asarray(omega, dtype=float)
    if process.mode == "static":
        return omega.copy()
    if z is None:
        z = rng.normal(scale=np.sqrt(process.sigma_z2), size=omega.shape)
    return process.beta * omega + z


def parameter_trajectory(process, omega_init, n_iter, rng):
    """``omega_0(1..n_iter)`` as an ``(n_iter, M)`` array."""
    M = len(omega_init)
    traj = np.empty((n_iter, M))
    traj[0] = omega_init
    if process.mode == "static" or n_iter == 1:
        traj[1:] = omega_init
        return traj
    z = rng.normal(scale=np.sqrt(process.sigma_z2), size=(n_iter - 1, M))
    for i in range(1, n_iter):
        traj[i] = process.beta * traj[i - 1] + z[i - 1]
    return traj


# --------------------------------------------------------------------------
# AR(1) regressors and measurements

@dataclass(frozen=True)
class Measurement:
    node: int
    time: int
    d: float
    x: np.ndarray


@dataclass(frozen=True)
class RegressorModel:
    """Per-node AR(1) input model with unit stationary variance.

    ``x_k(i) = u_k(i) + alpha_k x_k(i-1)`` with innovation variance
    ``1 - alpha_k**2``.
    """

    alphas: np.ndarray
    noise_var: np.ndarray
    M: int

    def __post_init__(self):
        alphas = np.atleast_1d(np.asarray(self.alphas, dtype=float))
        noise = np.broadcast_to(np.asarray(self.noise_var, dtype=float), alphas.shape).copy()
        if np.any(np.abs(alphas) >= 1):
            raise ValueError("AR(1) coefficients must lie in (-1, 1)")
        if np.any(noise < 0):
            raise ValueError("noise variances must be non-negative")
        if self.M < 1:
            raise ValueError("M must be positive")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "noise_var", noise)

    @property
    def n_nodes(self):
        return len(self.alphas)

    @property
    def innovation_var(self):
        return 1.0 - self.alphas ** 2

    @property
    def regressor_var(self):
        return np.ones(self.n_nodes)


def ar1_samples(alpha, n, rng):
    """``n`` consecutive samples of a stationary unit-variance AR(1) process."""
    out = np.empty(n)
    u = rng.normal(scale=np.sqrt(1.0 - alpha ** 2), size=n)
    prev = rng.normal()
    for j in range(n):
        prev = u[j] + alpha * prev
        out[j] = prev
    return out


def _ar1_filter(alpha, u, x0):
    from scipy.signal import lfilter
    y, _ = lfilter([1.0], [1.0, -alpha], u, zi=[alpha * x0])
    return y


class RegressorStream:
    """Streaming measurement source for one run of a :class:`RegressorModel`.

    Holds the last ``M - 1`` scalar samples per node. The delay line starts
    filled with stationary samples, so ``x_k(1)`` already has covariance
    ``R_k``.
    """

    def __init__(self, model, rng):
        self.model = model
        self.rng = rng
        M = model.M
        self._hist = np.stack(
            [ar1_samples(a, M, rng) for a in model.alphas])  # (N, M), oldest first
        self._time = np.zeros(model.n_nodes, dtype=int)

    def window(self, k):
        return self._hist[k, ::-1].copy()

    def next_measurement(self, k, omega0):
        """Advance node ``k`` one instant and return ``d_k = omega0^T x_k + n_k``."""
        a = self.model.alphas[k]
        u = self.rng.normal(scale=np.sqrt(1.0 - a ** 2))
        new = u + a * self._hist[k, -1]
        self._hist[k] = np.roll(self._hist[k], -1)
        self._hist[k, -1] = new
        x = self.window(k)
        n = self.rng.normal(scale=np.sqrt(self.model.noise_var[k]))
        self._time[k] += 1
        d = float(np.dot(omega0, x) + n)
        return Measurement(k, int(self._time[k]), d, x)


def next_measurement(stream, k, omega0):
    return stream.next_measurement(k, omega0)


# --------------------------------------------------------------------------
# batched generators used by the simulator

class SignalBatch:
    """Pre-drawn data for a batch of runs; ``step(i)`` yields one instant."""

    def __init__(self, omega, noise, regressors):
        self.omega = omega          # (B, I, M)
        self.noise = noise          # (B, I, N)
        self._regressors = regressors

    def step(self, i):
        X = self._regressors(i)
        w = self.omega[:, i]
        d = np.einsum("bnm,bm->bn", X, w) + self.noise[:, i]
        return X, d, w


@dataclass
class WsnSignal:
    """Sensor-network data: AR(1) inputs, Gaussian noise, static/Markov target."""

    model: RegressorModel
    process: ParameterProcess = field(default_factory=ParameterProcess)

    @property
    def M(self):
        return self.model.M

    @property
    def n_nodes(self):
        return self.model.n_nodes

    @property
    def noise_variances(self):
        return self.model.noise_var.copy()

    def regressor_variance(self):
        return self.model.regressor_var

    def draw(self, n_iter, seed, runs):
        M, N = self.M, self.n_nodes
        B = len(runs)
        xs = np.empty((B, n_iter + M - 1, N))
        noise = np.empty((B, n_iter, N))
        omega = np.empty((B, n_iter, M))
        sd = np.sqrt(self.model.noise_var)
        for b, r in enumerate(runs):
            for k in range(N):
                rng = stream_rng(seed, r, "regressor", k)
                a = self.model.alphas[k]
                u = rng.normal(scale=np.sqrt(1.0 - a ** 2), size=n_iter + M - 1)
                xs[b, :, k] = _ar1_filter(a, u, rng.normal())
                noise[b, :, k] = stream_rng(seed, r, "noise", k).normal(
                    scale=sd[k], size=n_iter)
            w0 = self.process.initial(M, stream_rng(seed, r, "init"))
            omega[b] = parameter_trajectory(
                self.process, w0, n_iter, stream_rng(seed, r, "parameter"))

        def regressors(i):
            # x_k(i) = [x(i), x(i-1), ..., x(i-M+1)]
            return xs[:, i:i + M][:, ::-1].transpose(0, 2, 1)

        return SignalBatch(omega, noise, regressors)


# --------------------------------------------------------------------------
# power grid

@dataclass(frozen=True)
class GridModel:
    """DC power-grid measurement model.

    Parameters
    ----------
    n_buses : int
    branches : sequence of (int, int)
        0-based bus pairs joined by a branch of unit reactance.
    noise_var : float or array
    excitation : {"gaussian", "none"}
        ``"none"`` uses the static Jacobian rows as regressors. ``"gaussian"``
        multiplies every non-zero Jacobian entry by an independent ``N(0, 1)``
        draw per instant, which keeps the rows' sparsity and signs on average
        while making the per-bus correlation matrices non-singular on their
        support. The static rows alone leave a flat angle profile unobservable
        (rows sum to zero) and give RLS no excitation off the row direction.
    """

    n_buses: int
    branches: tuple
    noise_var: object = 0.001
    excitation: str = "gaussian"
    process: ParameterProcess = field(default_factory=ParameterProcess)

    def __post_init__(self):
        branches = tuple((int(a), int(b)) for a, b in self.branches)
        for a, b in branches:
            if not (0 <= a < self.n_buses and 0 <= b < self.n_buses) or a == b:
                raise TopologyError(f"branch ({a}, {b}) references a non-existent bus")
        object.__setattr__(self, "branches", branches)
        if self.excitation not in ("gaussian", "none"):
            raise ValueError(f"unknown excitation {self.excitation!r}")

    @property
    def M(self):
        return self.n_buses

    @property
    def n_nodes(self):
        return self.n_buses

    @property
    def noise_variances(self):
        return np.broadcast_to(np.asarray(self.noise_var, dtype=float), (self.n_buses,)).copy()

    def topology(self):
        return Topology.from_edges(self.n_buses, self.branches)

    def true_state(self):
        return np.ones(self.n_buses)

    def regressor_variance(self):
        # per-mode eigenvalue used by the analysis: mean diagonal of R_k
        H = build_ieee14_jacobians(self)
        return (H ** 2).sum(axis=1) / self.M

    def draw(self, n_iter, seed, runs):
        H = build_ieee14_jacobians(self)
        N, M, B = self.n_buses, self.M, len(runs)
        sd = np.sqrt(self.noise_variances)
        noise = np.empty((B, n_iter, N))
        for b, r in enumerate(runs):
            for k in range(N):
                noise[b, :, k] = stream_rng(seed, r, "noise", k).normal(scale=sd[k], size=n_iter)
        omega = np.broadcast_to(self.true_state(), (B, n_iter, M))
        if self.excitation == "none":
            def regressors(i):
                return np.broadcast_to(H, (B, N, M))
        else:
            gains = np.empty((B, n_iter, N, M))
            for b, r in enumerate(runs):
                for k in range(N):
                    gains[b, :, k] = stream_rng(seed, r, "excitation", k).normal(
                        size=(n_iter, M))

            def regressors(i):
                return gains[:, i] * H
        return SignalBatch(omega, noise, regressors)


def build_ieee14_jacobians(grid):
    """Per-bus DC injection rows under unit branch susceptance.

    Row ``k`` holds ``deg(k)`` on the diagonal and ``-1`` for each bus joined
    to ``k`` by a branch. A bus with no branch measures its own angle only.
    """
    N = grid.n_buses
    H = np.zeros((N, N))
    for a, b in grid.branches:
        if not (0 <= a < N and 0 <= b < N):
            raise TopologyError(f"branch ({a}, {b}) references a non-existent bus")
        H[a, b] -= 1.0
        H[b, a] -= 1.0
        H[a, a] += 1.0
        H[b, b] += 1.0
    isolated = ~np.any(H != 0, axis=1)
    H[isolated, isolated] = 1.0
    return H


def read_branch_list(path):
    """Parse a branch fixture: one ``from to`` pair of 1-based bus ids per line."""
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            a, b = (int(t) for t in line.split())
        except ValueError:
            raise TopologyError(f"{path}:{lineno}: cannot parse {raw!r}") from None
        pairs.append((a - 1, b - 1))
    return pairs


def fixture_path(name):
    return Path(str(resources.files("linksel") / "data" / name))


def load_ieee14(noise_var=0.001, excitation="gaussian"):
    branches = read_branch_list(fixture_path("ieee14_branches.txt"))
    return GridModel(14, tuple(branches), noise_var=noise_var, excitation=excitation)
