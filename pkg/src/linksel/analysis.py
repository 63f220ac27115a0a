"""
Closed-form steady-state and tracking MSE predictors, MMSE and operation counts.

Inputs are assumed white (``R_k = sigma_x,k^2 I``), so every mode ``n`` of
the weight-error correlation obeys the same scalar fixed point and ``K_k^n``
does not depend on ``n``.

Combination weights enter through per-node second-moment matrices
``S_k[l, q] = E[a_kl a_kq]`` where ``a_kl`` is the weight node ``k`` gives to
``l`` after link selection (``alpha_kl c_kl`` for ES, ``c_kl - h_kl`` for SI).
With deterministic weights ``S_k`` is the outer product of the weight row,
and the sums over ``l != q`` pairs in the fixed-point expressions are
``l < q`` pairs counted twice, i.e. ``g^T S_k g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .topology import CandidateSet, metropolis_matrix, metropolis_weights


class UnstableConfiguration(ValueError):
    """A fixed-point denominator is not positive."""


def mmse(sigma_d2, p, R):
    """Wiener floor ``sigma_d^2 - p^T R^{-1} p``."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    try:
        sol = np.linalg.solve(R, p)
    except np.linalg.LinAlgError:
        raise ValueError("correlation matrix is singular") from None
    return float(sigma_d2 - p @ sol)


@dataclass
class SteadyStateInputs:
    """Per-node quantities shared by all predictors.

    Parameters
    ----------
    M : int
    mu : array (N,)
        LMS step sizes (unused by the RLS predictors).
    sigma_x2 : array (N,)
        Regressor variances; ``lambda_l^n = sigma_x2[l]`` and
        ``lambda_{l,q}^n = sqrt(sigma_x2[l] sigma_x2[q])``.
    j_min : array (N,)
        MMSE per node.
    e0_cross : array (N, N), optional
        ``E[e_{0-l} e_{0-q}^*]``. The diagonal is ``j_min``; off-diagonal
        entries default to zero (spatially independent noise).
    """

    M: int
    mu: np.ndarray
    sigma_x2: np.ndarray
    j_min: np.ndarray
    e0_cross: np.ndarray = None

    def __post_init__(self):
        self.j_min = np.atleast_1d(np.asarray(self.j_min, dtype=float))
        N = self.j_min.size
        self.mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (N,)).copy()
        self.sigma_x2 = np.broadcast_to(np.asarray(self.sigma_x2, dtype=float), (N,)).copy()
        if self.e0_cross is None:
            self.e0_cross = np.diag(self.j_min)
        self.e0_cross = np.asarray(self.e0_cross, dtype=float)
        if np.any(self.sigma_x2 <= 0):
            raise ValueError("regressor variances must be positive")

    @property
    def n_nodes(self):
        return self.j_min.size

    @classmethod
    def from_noise(cls, M, mu, noise_var, sigma_x2=1.0, cross="independent"):
        """Build inputs with ``J_min = sigma_n^2`` per node.

        ``cross="correlated"`` sets ``e_{0-l} e_{0-q}^* = sigma_n,l sigma_n,q``
        instead of zero.
        """
        j = np.atleast_1d(np.asarray(noise_var, dtype=float))
        if cross == "independent":
            e0 = np.diag(j)
        elif cross == "correlated":
            s = np.sqrt(j)
            e0 = np.outer(s, s)
        else:
            raise ValueError(f"unknown cross-term convention {cross!r}")
        return cls(M=M, mu=mu, sigma_x2=sigma_x2, j_min=j, e0_cross=e0)

    def lam(self):
        return self.sigma_x2

    def lam_cross(self):
        s = np.sqrt(self.sigma_x2)
        return np.outer(s, s)


# --------------------------------------------------------------------------
# weights at steady state

def moments_from_rows(A):
    """Second moments ``S[k] = a_k a_k^T`` of deterministic weight rows."""
    A = np.asarray(A, dtype=float)
    return np.einsum("kl,kq->klq", A, A)


def es_weight_rows(topology, chosen, degrees="induced"):
    """Rows ``alpha_kl c_kl`` for one fixed candidate set per node.

    ``chosen`` maps node -> CandidateSet (or member tuple); missing nodes use
    their full neighborhood.
    """
    N = topology.n_nodes
    A = np.zeros((N, N))
    for k in range(N):
        s = chosen.get(k) if isinstance(chosen, dict) else chosen[k]
        if s is None:
            s = CandidateSet(k, topology.neighbors(k))
        elif not isinstance(s, CandidateSet):
            s = CandidateSet(k, tuple(s))
        A[k] = metropolis_weights(topology, k, s, degrees=degrees)
    return A


@dataclass(frozen=True)
class HklRule:
    """Asymptotic SI coefficient offsets for one node.

    ``h[largest] = +m``, ``h[smallest] = -m`` and zero elsewhere, with
    ``m = rho*eps*sign(|e0|) / (1 + eps*|e0|)`` capped at ``c[largest]`` the
    same way the combiner clamps.
    """

    node: int
    largest: int
    smallest: int
    magnitude: float

    def offsets(self, n_nodes):
        h = np.zeros(n_nodes)
        h[self.largest] += self.magnitude
        h[self.smallest] -= self.magnitude
        return h


def hkl_rule(topology, k, ranking, si, e0_abs, c=None):
    """Pick the worst/best neighbor of ``k`` by ``ranking`` (e.g. per-node MSE).

    Ties follow the combiner: first index for the largest, last for the
    smallest.
    """
    nbrs = np.array(topology.neighbors(k))
    vals = np.asarray(ranking, dtype=float)[nbrs]
    largest = int(nbrs[np.argmax(vals)])
    smallest = int(nbrs[len(nbrs) - 1 - np.argmin(vals[::-1])])
    mag = si.rho * si.eps * np.sign(abs(e0_abs)) / (1 + si.eps * abs(e0_abs))
    if c is None:
        c = metropolis_weights(topology, k)
    mag = min(mag, c[largest])
    return HklRule(k, largest, smallest, float(mag))


def si_weight_rows(topology, si, ranking, e0_abs):
    """Rows ``c_kl - h_kl`` for every node.

    ``e0_abs[k]`` is the asymptotic ``|e_{0-k}|`` entering the shrinkage
    denominator.
    """
    C = metropolis_matrix(topology)
    e0_abs = np.broadcast_to(np.asarray(e0_abs, dtype=float), (topology.n_nodes,))
    rows = C.copy()
    rules = []
    for k in range(topology.n_nodes):
        rule = hkl_rule(topology, k, ranking, si, e0_abs[k], C[k])
        rows[k] -= rule.offsets(topology.n_nodes)
        rules.append(rule)
    return rows, rules


# --------------------------------------------------------------------------
# fixed points

def _as_moments(weights):
    W = np.asarray(weights, dtype=float)
    if W.ndim == 2:
        return moments_from_rows(W), W
    if W.ndim == 3:
        return W, None
    raise ValueError("weights must be rows (N, N) or moments (N, N, N)")


def _decoupled(S, g, noise):
    """``K_k = <S_k, noise> / (1 - g^T S_k g)`` for every node."""
    num = np.einsum("klq,lq->k", S, noise)
    den = 1.0 - np.einsum("l,klq,q->k", g, S, g)
    if np.any(den <= 0):
        bad = np.flatnonzero(den <= 0).tolist()
        raise UnstableConfiguration(f"non-positive denominator at nodes {bad}")
    return num / den


def _coupled(A, g, noise):
    """Diagonal of the network fixed point ``Sigma = F Sigma F^T + A noise A^T``."""
    F = A * g[None, :]
    rho = np.max(np.abs(np.linalg.eigvals(F)))
    if rho >= 1:
        raise UnstableConfiguration(f"network recursion is unstable (spectral radius {rho:.4f})")
    Sigma = solve_discrete_lyapunov(F, A @ noise @ A.T)
    return np.diag(Sigma).copy()


def _lms_terms(inputs):
    g = 1.0 - inputs.mu * inputs.lam()
    noise = np.outer(inputs.mu, inputs.mu) * inputs.e0_cross * inputs.lam_cross()
    return g, noise


def _rls_terms(inputs, i):
    if i <= inputs.M + 1:
        raise ValueError(f"RLS predictor needs i > M + 1 (i={i}, M={inputs.M})")
    n = float(i - inputs.M)
    g = np.full(inputs.n_nodes, 1.0 - 1.0 / n)
    lam = inputs.lam()
    noise = inputs.e0_cross * inputs.lam_cross() / (np.outer(lam, lam) * n ** 2)
    return g, noise


def _solve(inputs, weights, terms, coupling):
    S, rows = _as_moments(weights)
    g, noise = terms
    if coupling == "decoupled":
        K = _decoupled(S, g, noise)
    elif coupling == "coupled":
        if rows is None:
            raise ValueError("coupled solution needs deterministic weight rows")
        K = _coupled(rows, g, noise)
    else:
        raise ValueError(f"unknown coupling {coupling!r}")
    return np.repeat(K[:, None], inputs.M, axis=1)


def steady_state_K_es_lms(inputs, weights, coupling="decoupled"):
    """ES-LMS steady-state ``K_k^n``, shape ``(N, M)``.

    ``weights`` is either the ``(N, N)`` matrix of rows ``alpha_kl c_kl`` or
    an ``(N, N, N)`` stack of second moments. ``coupling="coupled"`` solves
    the joint network recursion (including the ``K_{l,q}`` terms) instead of
    the per-node scalar fixed point.
    """
    return _solve(inputs, weights, _lms_terms(inputs), coupling)


def steady_state_K_si_lms(inputs, c, rules=None, coupling="decoupled"):
    """SI-LMS ``K_k^n`` with weights ``c_kl - h_kl``.

    ``rules`` is a list of :class:`HklRule` (one per node); ``None`` means
    ``h = 0``. ``c`` may instead already be a moment stack.
    """
    return _solve(inputs, _si_rows(c, rules), _lms_terms(inputs), coupling)


def steady_state_K_es_rls(inputs, weights, i, coupling="decoupled"):
    """ES-RLS ``K_k^n(i+1)``; vanishes like ``1/(i-M)`` as ``i`` grows."""
    return _solve(inputs, weights, _rls_terms(inputs, i), coupling)


def steady_state_K_si_rls(inputs, c, rules=None, i=1000, coupling="decoupled"):
    return _solve(inputs, _si_rows(c, rules), _rls_terms(inputs, i), coupling)


def _si_rows(c, rules):
    c = np.asarray(c, dtype=float)
    if rules is None or c.ndim == 3:
        return c
    rows = c.copy()
    for rule in rules:
        rows[rule.node] -= rule.offsets(c.shape[1])
    return rows


# --------------------------------------------------------------------------
# MSE predictions

@dataclass
class TheoryPrediction:
    """Per-node predicted MSE and its components (linear power units)."""

    j_min: np.ndarray
    emse: np.ndarray
    tracking: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tracking is None:
            self.tracking = np.zeros_like(self.emse)

    @property
    def mse(self):
        return self.j_min + self.emse + self.tracking

    @property
    def mse_db(self):
        return 10 * np.log10(self.mse)

    @property
    def network(self):
        return float(self.mse.mean())

    @property
    def network_db(self):
        return 10 * np.log10(self.network)

    def to_dict(self):
        return {
            "network_mse": self.network,
            "network_mse_db": self.network_db,
            "nodes": {
                "mse": self.mse.tolist(),
                "mse_db": self.mse_db.tolist(),
                "j_min": self.j_min.tolist(),
                "emse": self.emse.tolist(),
                "tracking_term": self.tracking.tolist(),
            },
            **self.meta,
        }


def _scale(inputs, trace_factor):
    if trace_factor == "length":
        return inputs.M * inputs.sigma_x2
    if trace_factor == "trace":
        return inputs.sigma_x2
    raise ValueError(f"unknown trace_factor {trace_factor!r}")


def mse_prediction(K, inputs, trace_factor="length"):
    """``J_min,k + s_k * sum_n K_k^n``.

    ``trace_factor="length"`` uses ``s_k = M sigma_x,k^2``; ``"trace"`` uses
    ``s_k = sigma_x,k^2``, i.e. ``tr(R_k K_k)`` for white inputs.
    """
    K = np.asarray(K, dtype=float)
    emse = _scale(inputs, trace_factor) * K.sum(axis=1)
    return TheoryPrediction(inputs.j_min.copy(), emse, meta={"trace_factor": trace_factor})


def tracking_mse(static_prediction, inputs, Q, trace_factor="length"):
    """Add the random-walk lag term ``s_k tr(Q)`` to a static prediction."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.size and np.linalg.eigvalsh((Q + Q.T) / 2)[0] < -1e-12:
        raise ValueError("Q must be positive semidefinite")
    term = _scale(inputs, trace_factor) * np.trace(Q)
    return TheoryPrediction(static_prediction.j_min.copy(), static_prediction.emse.copy(),
                            static_prediction.tracking + term,
                            meta=dict(static_prediction.meta))


def predict(algorithm, inputs, weights, i=None, Q=None, coupling="decoupled",
            trace_factor="length"):
    """Dispatch to the right fixed point and assemble the MSE prediction.

    ``weights`` are rows or second moments of the steady-state combination
    weights (already including ``alpha`` or ``h``).
    """
    if algorithm in ("es-lms", "si-lms", "diff-lms"):
        K = _solve(inputs, weights, _lms_terms(inputs), coupling)
    elif algorithm in ("es-rls", "si-rls", "diff-rls"):
        if i is None:
            raise ValueError("RLS predictions need the time index i")
        K = _solve(inputs, weights, _rls_terms(inputs, i), coupling)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    pred = mse_prediction(K, inputs, trace_factor)
    if Q is not None:
        pred = tracking_mse(pred, inputs, Q, trace_factor)
    pred.meta.update(algorithm=algorithm, coupling=coupling)
    return pred


# --------------------------------------------------------------------------
# complexity

def complexity_counts(algorithm, M, T=None, t=None, n_neighbors=None):
    """Tabulated per-node, per-instant operation counts.

    Parameters
    ----------
    algorithm : str
        ``lms`` / ``rls`` (adaptation only), ``es-combine`` / ``si-combine``
        (combination only), or one of ``es-lms``, ``es-rls``, ``si-lms``,
        ``si-rls``.
    T : int
        Nodes linked to ``k`` including ``k`` (ES).
    t : int
        Nodes chosen out of ``T`` (ES).
    n_neighbors : int
        ``|N_k|`` (SI).

    Returns
    -------
    (multiplications, additions, divisions)
    """
    if algorithm.startswith("es"):
        if T is None or t is None:
            raise ValueError("ES counts need T and t")
        if not 0 < t <= T:
            raise ValueError(f"need 0 < t <= T (t={t}, T={T})")
        C = comb(T, t)
        if algorithm == "es-combine":
            return M * (t + 1) * C, M * t * C, 0
        if algorithm == "es-lms":
            return ((t + 1) * C + 8) * M + 2, (t * C + 8) * M, 0
        if algorithm == "es-rls":
            return 4 * M ** 2 + ((t + 1) * C + 16) * M + 1, 4 * M ** 2 + (t * C + 12) * M - 1, 1
    if algorithm.startswith("si"):
        if n_neighbors is None:
            raise ValueError("SI counts need n_neighbors")
        n = n_neighbors
        if algorithm == "si-combine":
            return (2 * M + 3) * n, (M + 2) * n, n
        if algorithm == "si-lms":
            return (8 + 2 * n) * M + 3 * n + 2, (8 + n) * M + 2 * n, n
        if algorithm == "si-rls":
            return 4 * M ** 2 + (16 + 2 * n) * M + 3 * n + 1, 4 * M ** 2 + (12 + n) * M + 2 * n - 1, n + 1
    if algorithm == "lms":
        return 8 * M + 2, 8 * M, 0
    if algorithm == "rls":
        return 4 * M ** 2 + 16 * M + 1, 4 * M ** 2 + 12 * M - 1, 1
    raise ValueError(f"no complexity formula for {algorithm!r}")


def instrumented_combine_counts(topology, k, policy, M):
    """Real-arithmetic operations our combiner performs for node ``k``.

    ES evaluates every candidate: a weighted sum of ``|Omega|`` vectors, an
    inner product with ``x_k`` and one subtraction. SI forms one error per
    neighbor, the shrinkage (one division) and the weighted sum.
    """
    T = topology.degree(k)
    if policy == "exhaustive":
        mult = add = 0
        for size in range(2, T + 1):
            n_sets = comb(T - 1, size - 1)
            mult += n_sets * (size * M + M)
            add += n_sets * ((size - 1) * M + (M - 1) + 1)
        return mult, add, 0
    if policy == "sparsity":
        mult = T * M + 2 + T * M
        add = T * (M - 1) + T + 1 + 2 + (T - 1) * M
        return mult, add, 1
    if policy == "fixed":
        return T * M, (T - 1) * M, 0
    raise ValueError(f"unknown policy {policy!r}")
