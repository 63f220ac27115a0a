"""
Local adaptation: LMS and RLS recursions producing the local estimates psi.

The batched functions operate on arrays with arbitrary leading dimensions
(runs, nodes, ...) and a trailing length-``M`` axis. They never write the
combined estimate ``omega``; only the combiners do.

Data are real-valued, so the conjugate on the a-priori error is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIVERGENCE_LIMIT = 1e9


class DivergenceError(RuntimeError):
    """An adaptive recursion produced non-finite or exploding estimates."""


def check_finite(psi, where="adaptation", limit=DIVERGENCE_LIMIT):
    norms = np.sqrt(np.einsum("...m,...m->...", psi, psi))
    bad = ~np.isfinite(norms) | (norms > limit)
    if bad.any():
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        raise DivergenceError(
            f"{where}: estimate at index {idx} diverged (norm={norms[idx]:.3g})")


def lms_update(omega, X, d, mu):
    """``psi = omega + mu x (d - omega^T x)``; returns ``(psi, a_priori_error)``."""
    e = d - np.einsum("...m,...m->...", omega, X)
    mu = np.asarray(mu, dtype=float)
    psi = omega + (mu * e)[..., None] * X
    return psi, e


def rls_update(omega, P, X, d, lam):
    """Exponentially weighted RLS step; ``P`` is updated in place.

    Uses the single rank-one inverse update
    ``k = P x / (lam + x^T P x)``, ``P <- (P - k x^T P) / lam``, followed by
    re-symmetrisation. This is the same recursion as propagating
    ``phi^{-1}`` and then ``P`` once per instant.
    """
    Px = np.einsum("...ij,...j->...i", P, X)
    denom = lam + np.einsum("...i,...i->...", X, Px)
    gain = Px / denom[..., None]
    e = d - np.einsum("...m,...m->...", omega, X)
    psi = omega + e[..., None] * gain
    P -= gain[..., :, None] * Px[..., None, :]
    P /= lam
    P += np.swapaxes(P, -1, -2)
    P *= 0.5
    return psi, e


@dataclass
class NodeState:
    """Estimates and adaptation parameters of a single node.

    ``mu`` is used by LMS; ``lam`` and ``delta`` by RLS (``P(0) = I/delta``).
    """

    M: int
    mu: float = 0.0
    lam: float = 1.0
    delta: float = 1.0
    omega: np.ndarray = None
    psi: np.ndarray = None
    P: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.omega is None:
            self.omega = np.zeros(self.M)
        if self.psi is None:
            self.psi = self.omega.copy()
        if self.P is None:
            if self.delta <= 0:
                raise ValueError("delta must be positive")
            self.P = np.eye(self.M) / self.delta
        if not 0 < self.lam <= 1:
            raise ValueError("forgetting factor must lie in (0, 1]")


def _checked_inputs(state, meas):
    x = np.asarray(meas.x, dtype=float)
    if x.shape != (state.M,) or not np.all(np.isfinite(x)) or not np.isfinite(meas.d):
        raise ValueError("measurement must be finite with a length-M regressor")
    if not np.all(np.isfinite(state.omega)):
        raise ValueError("non-finite estimate")
    return x


def lms_adapt(state, meas):
    """LMS local estimate for one node; stores and returns ``psi``."""
    x = _checked_inputs(state, meas)
    psi, _ = lms_update(state.omega, x, meas.d, state.mu)
    check_finite(psi, "lms")
    state.psi = psi
    return psi


def rls_adapt(state, meas):
    """RLS local estimate for one node; updates ``state.P`` in place."""
    x = _checked_inputs(state, meas)
    psi, _ = rls_update(state.omega, state.P, x, meas.d, state.lam)
    check_finite(psi, "rls")
    if not np.all(np.isfinite(state.P)):
        raise DivergenceError("rls: inverse correlation matrix became non-finite")
    state.psi = psi
    return psi


def stability_bound(R):
    """Largest stable LMS step size ``2 / lambda_max(R)``."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] != R.shape[1] or not np.allclose(R, R.T):
        raise ValueError("correlation matrix must be symmetric")
    eig = np.linalg.eigvalsh(R)
    if eig[0] < -1e-10 * max(1.0, abs(eig[-1])):
        raise ValueError("correlation matrix is not positive semidefinite")
    if eig[-1] <= 0:
        raise ValueError("correlation matrix has no positive eigenvalue")
    return 2.0 / eig[-1]
