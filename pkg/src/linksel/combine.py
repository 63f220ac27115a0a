"""
Combination step: fixed diffusion, exhaustive-search (ES) link selection and
sparsity-inspired (SI) link selection.

The single-node functions (:func:`combine_fixed`, :func:`combine_exhaustive`,
:func:`combine_sparsity`) follow the per-node description directly. The
``*Combiner`` classes apply the same rules to a batch of runs and all nodes at
once; the simulator uses them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import CandidateSet, enumerate_candidate_sets, metropolis_matrix, metropolis_weights


@dataclass(frozen=True)
class SiParams:
    """Shrinkage intensity ``rho`` and shrinkage magnitude ``eps``."""

    rho: float
    eps: float

    def __post_init__(self):
        if self.rho < 0 or self.eps <= 0:
            raise ValueError("SI needs rho >= 0 and eps > 0")

    def shrink(self, xi_min):
        """Per-step coefficient transfer ``rho*eps / (1 + eps*|xi_min|)``."""
        return self.rho * self.eps / (1.0 + self.eps * np.abs(xi_min))


@dataclass
class CombineInput:
    """What node ``k`` holds when it combines.

    ``psi`` rows and ``c`` entries are aligned with ``neighbors`` (sorted,
    including ``k``).
    """

    node: int
    d: float
    x: np.ndarray
    neighbors: tuple
    psi: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        self.c = np.asarray(self.c, dtype=float)
        n = len(self.neighbors)
        if self.psi.shape[0] != n or self.c.shape != (n,):
            raise ValueError("weights, estimates and neighbor list must have equal length")
        if self.node not in self.neighbors:
            raise ValueError(f"node {self.node} missing from its own neighborhood")

    @classmethod
    def from_network(cls, topology, k, d, x, psi_all):
        nbrs = topology.neighbors(k)
        c = metropolis_weights(topology, k)[list(nbrs)]
        return cls(k, d, np.asarray(x, dtype=float), nbrs, np.asarray(psi_all)[list(nbrs)], c)

    def errors(self):
        """Error patterns ``e_kl = d_k - psi_l^T x_k`` over the neighborhood."""
        return self.d - self.psi @ self.x


def combine_fixed(inp):
    """``omega_k = sum_l c_kl psi_l``."""
    return inp.c @ inp.psi


def candidate_error(inp, weights):
    """``d_k - (sum_l c_kl psi_l)^T x_k`` for weights aligned with ``inp.neighbors``."""
    return inp.d - (weights @ inp.psi) @ inp.x


def combine_exhaustive(inp, sets, topology, degrees="induced"):
    """Pick the candidate set whose combined estimate best explains ``d_k``.

    Weights for each set are recomputed with :func:`metropolis_weights`. The
    first set (in the given order) attaining the minimum ``|e|`` wins.

    Returns
    -------
    omega : ndarray, shape (M,)
    chosen : CandidateSet
    """
    if not sets:
        raise ValueError("no candidate sets to search")
    nbrs = list(inp.neighbors)
    best, best_err, best_w = None, np.inf, None
    for s in sets:
        w = metropolis_weights(topology, inp.node, s, degrees=degrees)[nbrs]
        err = abs(candidate_error(inp, w))
        if err < best_err:
            best, best_err, best_w = s, err, w
    return best_w @ inp.psi, best


def si_modify_errors(errors):
    """Keep ``+|e|`` at the largest-magnitude entry and ``-|e|`` at the smallest.

    Ties: the largest is the first occurrence, the smallest the last one, so
    the two positions always differ.

    Returns
    -------
    modified : ndarray
    xi_min : float
        Smallest absolute error.
    """
    e = np.asarray(errors, dtype=float)
    if e.ndim != 1 or e.size < 2:
        raise ValueError("need at least two error patterns")
    mag = np.abs(e)
    jmax = int(np.argmax(mag))
    jmin = e.size - 1 - int(np.argmin(mag[::-1]))
    out = np.zeros_like(e)
    out[jmax] = mag[jmax]
    out[jmin] = -mag[jmin]
    return out, float(mag[jmin])


def si_weights(c, modified, xi_min, params):
    """Adjusted coefficients ``c - rho*eps*sign(e_hat)/(1 + eps*xi_min)``.

    The penalised coefficient is clamped at zero and exactly the amount it
    lost is credited to the rewarded one, so the result stays on the simplex.
    """
    w = np.array(c, dtype=float)
    modified = np.asarray(modified, dtype=float)
    pos = np.flatnonzero(modified > 0)
    if not pos.size:
        # every error pattern is zero: sign() vanishes everywhere
        return w
    jmax = pos[0]
    # the rewarded entry is -|e_min|, possibly -0.0
    jmin = np.flatnonzero(np.signbit(modified))[0]
    taken = min(params.shrink(xi_min), w[jmax])
    w[jmax] -= taken
    w[jmin] += taken
    return w


def combine_sparsity(inp, params):
    """SI combination; returns ``(omega, adjusted_weights)``."""
    if params.rho < 0 or params.eps <= 0:
        raise ValueError("rho must be non-negative and eps positive")
    modified, xi_min = si_modify_errors(inp.errors())
    w = si_weights(inp.c, modified, xi_min, params)
    return w @ inp.psi, w


# --------------------------------------------------------------------------
# batched combiners


def _ptp(psi, X):
    """``Y[b, k, l] = psi_l^T x_k`` for every ordered node pair."""
    return np.einsum("blm,bkm->bkl", psi, X)


class FixedCombiner:
    name = "fixed"

    def __init__(self, topology):
        self.topology = topology
        self.C = metropolis_matrix(topology)

    def __call__(self, psi, X, d):
        return np.einsum("kl,blm->bkm", self.C, psi), None


class ExhaustiveCombiner:
    """ES link selection for every node and every run in a batch.

    ``sets[k]`` lists node ``k``'s candidate sets; ``weights`` stacks the
    matching Metropolis rows and ``table[k, j]`` points at the row of the
    ``j``-th set of node ``k`` (``-1`` pads nodes with fewer sets).
    """

    name = "exhaustive"

    def __init__(self, topology, degrees="induced"):
        self.topology = topology
        self.degrees = degrees
        N = topology.n_nodes
        self.sets = [enumerate_candidate_sets(topology, k) for k in range(N)]
        rows, owner = [], []
        for k, sets in enumerate(self.sets):
            for s in sets:
                rows.append(metropolis_weights(topology, k, s, degrees=degrees))
                owner.append(k)
        self.weights = np.array(rows)
        self.owner = np.array(owner)
        smax = max(len(s) for s in self.sets)
        self.table = -np.ones((N, smax), dtype=int)
        self._slot = np.empty(len(owner), dtype=int)
        start = 0
        for k, sets in enumerate(self.sets):
            self.table[k, :len(sets)] = np.arange(start, start + len(sets))
            self._slot[start:start + len(sets)] = np.arange(len(sets))
            start += len(sets)

    def candidate_errors(self, psi, X, d):
        """``e_Omega`` for every stacked candidate set, shape ``(B, S)``."""
        Y = _ptp(psi, X)
        return d[:, self.owner] - np.einsum("bsn,sn->bs", Y[:, self.owner], self.weights)

    def __call__(self, psi, X, d):
        E = np.abs(self.candidate_errors(psi, X, d))
        B, N = d.shape
        padded = np.full((B, N, self.table.shape[1]), np.inf)
        padded[:, self.owner, self._slot] = E
        choice = padded.argmin(axis=-1)                  # (B, N), first minimum
        rows = self.table[np.arange(N), choice]          # (B, N)
        W = self.weights[rows]                           # (B, N, N)
        return np.einsum("bkl,blm->bkm", W, psi), choice

    def chosen_set(self, k, choice):
        return self.sets[k][int(choice)]


class SparsityCombiner:
    """SI link selection for a batch; returns the adjusted weight matrices."""

    name = "sparsity"

    def __init__(self, topology, params):
        self.topology = topology
        self.params = params
        self.C = metropolis_matrix(topology)
        N = topology.n_nodes
        self.mask = np.zeros((N, N), dtype=bool)
        for k in range(N):
            self.mask[k, list(topology.neighbors(k))] = True

    def adjusted_weights(self, psi, X, d):
        mag = np.abs(d[:, :, None] - _ptp(psi, X))        # |e_kl|, (B, N, N)
        B, N, _ = mag.shape
        jmax = np.where(self.mask, mag, -np.inf).argmax(axis=-1)
        low = np.where(self.mask, mag, np.inf)
        jmin = N - 1 - low[..., ::-1].argmin(axis=-1)
        xi_min = np.take_along_axis(low, jmin[..., None], -1)[..., 0]
        emax = np.take_along_axis(mag, jmax[..., None], -1)[..., 0]
        shrink = np.where(emax > 0, self.params.shrink(xi_min), 0.0)
        W = np.broadcast_to(self.C, (B, N, N)).copy()
        cmax = np.take_along_axis(W, jmax[..., None], -1)[..., 0]
        taken = np.minimum(shrink, cmax)
        bi, ki = np.meshgrid(np.arange(B), np.arange(N), indexing="ij")
        W[bi, ki, jmax] -= taken
        W[bi, ki, jmin] += taken
        return W

    def __call__(self, psi, X, d):
        W = self.adjusted_weights(psi, X, d)
        return np.einsum("bkl,blm->bkm", W, psi), W


def make_combiner(policy, topology, si=None, degrees="induced"):
    if policy == "fixed":
        return FixedCombiner(topology)
    if policy == "exhaustive":
        return ExhaustiveCombiner(topology, degrees=degrees)
    if policy == "sparsity":
        if si is None:
            raise ValueError("sparsity combiner needs SiParams")
        return SparsityCombiner(topology, si)
    raise ValueError(f"unknown combine policy {policy!r}")


__all__ = [
    "CandidateSet", "CombineInput", "SiParams", "combine_fixed", "combine_exhaustive",
    "combine_sparsity", "si_modify_errors", "si_weights", "FixedCombiner",
    "ExhaustiveCombiner", "SparsityCombiner", "make_combiner",
]
