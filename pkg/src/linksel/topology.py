"""
Network topology, neighbor subsets and Metropolis combining weights.

Nodes are indexed ``0 .. N-1``. Every neighborhood ``N_k`` contains the node
itself and is kept sorted, so the position of a node inside a neighborhood is
stable and enumeration order is reproducible.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components


class TopologyError(ValueError):
    """Raised for malformed graphs, node ids or candidate sets."""


@dataclass(frozen=True)
class CandidateSet:
    """A tentative set of nodes whose estimates node ``owner`` may combine."""

    owner: int
    members: tuple[int, ...]

    def __post_init__(self):
        if not self.members:
            raise TopologyError("candidate set is empty")
        if self.owner not in self.members:
            raise TopologyError(
                f"node {self.owner} is not in its candidate set {self.members}")
        object.__setattr__(self, "members", tuple(sorted(set(self.members))))

    def __len__(self):
        return len(self.members)

    def __contains__(self, node):
        return node in self.members

    def bitmask(self) -> int:
        return sum(1 << m for m in self.members)


@dataclass(frozen=True)
class Topology:
    """Undirected, connected graph stored as a dense boolean adjacency matrix.

    Parameters
    ----------
    adjacency : ndarray of bool, shape (N, N)
        Symmetric link indicator with an empty diagonal.
    """

    adjacency: np.ndarray
    _neighbors: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] == 0:
            raise TopologyError("adjacency must be a non-empty square matrix")
        if not np.array_equal(adj, adj.T):
            raise TopologyError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise TopologyError("adjacency must not contain self loops")
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise TopologyError(f"graph is not connected ({n_comp} components)")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        nbrs = tuple(
            tuple(sorted([k, *np.flatnonzero(adj[k]).tolist()]))
            for k in range(adj.shape[0]))
        object.__setattr__(self, "_neighbors", nbrs)

    @classmethod
    def from_edges(cls, n_nodes, edges):
        adj = np.zeros((n_nodes, n_nodes), dtype=bool)
        for a, b in edges:
            if not (0 <= a < n_nodes and 0 <= b < n_nodes):
                raise TopologyError(f"edge ({a}, {b}) references an unknown node")
            if a == b:
                raise TopologyError(f"self loop at node {a}")
            adj[a, b] = adj[b, a] = True
        return cls(adj)

    @classmethod
    def load(cls, path):
        """Read a topology file.

        The format is line based; ``#`` starts a comment. The first entry is
        ``nodes <N>``, optionally followed by ``index_base <0|1>``, then one
        undirected edge ``a b`` per line.
        """
        n_nodes, base, edges = None, 0, []
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                if tokens[0] == "nodes":
                    n_nodes = int(tokens[1])
                elif tokens[0] == "index_base":
                    base = int(tokens[1])
                elif len(tokens) == 2:
                    edges.append((int(tokens[0]) - base, int(tokens[1]) - base))
                else:
                    raise ValueError
            except (ValueError, IndexError):
                raise TopologyError(f"{path}:{lineno}: cannot parse {raw!r}") from None
        if n_nodes is None:
            raise TopologyError(f"{path}: missing 'nodes <N>' header")
        return cls.from_edges(n_nodes, edges)

    def dump(self, path, index_base=0):
        lines = [f"nodes {self.n_nodes}", f"index_base {index_base}"]
        lines += [f"{a + index_base} {b + index_base}" for a, b in self.edges()]
        Path(path).write_text("\n".join(lines) + "\n")

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def edges(self):
        a, b = np.nonzero(np.triu(self.adjacency))
        return list(zip(a.tolist(), b.tolist()))

    def neighbors(self, k) -> tuple[int, ...]:
        """Sorted neighborhood of ``k``, including ``k`` itself."""
        self._check_node(k)
        return self._neighbors[k]

    def degree(self, k) -> int:
        """Cardinality ``|N_k|`` (the node counts itself)."""
        return len(self.neighbors(k))

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1) + 1

    def supports_link_selection(self) -> bool:
        """True when every node has at least two neighbors besides itself."""
        return bool((self.degrees() >= 3).all())

    def require_link_selection(self):
        short = np.flatnonzero(self.degrees() < 3).tolist()
        if short:
            raise TopologyError(
                f"link selection needs >= 2 neighbors per node; nodes {short} have fewer")
        return self

    def _check_node(self, k):
        if not 0 <= k < self.n_nodes:
            raise TopologyError(f"node {k} out of range for N={self.n_nodes}")


def metropolis_weights(topology, k, members=None, degrees="induced"):
    """Metropolis combining weights of node ``k`` over a participating set.

    Parameters
    ----------
    topology : Topology
    k : int
        The combining node.
    members : CandidateSet or iterable of int, optional
        Participating nodes. When omitted the full neighborhood ``N_k`` is
        used with the physical graph degrees, i.e. the plain Metropolis rule.
    degrees : {"induced", "full"}
        How ``|N_k|`` and ``|N_l|`` are counted for an explicit member set.
        ``"induced"`` counts them inside the subgraph induced by ``members``
        (every off-diagonal weight becomes ``1/|members|``); ``"full"`` uses
        the degrees of the physical graph and leaves the remainder on
        ``c_kk``.

    Returns
    -------
    ndarray, shape (N,)
        ``c_kl`` for every node ``l``; zero outside ``members``.
    """
    if members is None:
        members, degrees = topology.neighbors(k), "full"
    if isinstance(members, CandidateSet):
        if members.owner != k:
            raise TopologyError(f"candidate set belongs to node {members.owner}, not {k}")
        members = members.members
    members = sorted(set(members))
    if not members:
        raise TopologyError("empty member set")
    if k not in members:
        raise TopologyError(f"node {k} is not in its own member set")
    nbr = set(topology.neighbors(k))
    stray = [m for m in members if m not in nbr]
    if stray:
        raise TopologyError(f"nodes {stray} are not neighbors of node {k}")

    c = np.zeros(topology.n_nodes)
    if degrees == "induced":
        mset = set(members)
        deg_k = len(members)
        for l in members:
            if l != k:
                deg_l = len(mset.intersection(topology.neighbors(l)))
                c[l] = 1.0 / max(deg_k, deg_l)
    elif degrees == "full":
        deg_k = topology.degree(k)
        for l in members:
            if l != k:
                c[l] = 1.0 / max(deg_k, topology.degree(l))
    else:
        raise ValueError(f"unknown degree convention {degrees!r}")
    c[k] = 1.0 - c.sum()
    return c


def metropolis_matrix(topology):
    """Row-stochastic matrix whose row ``k`` holds ``c_kl`` over ``N_k``."""
    return np.stack([metropolis_weights(topology, k) for k in range(topology.n_nodes)])


def enumerate_candidate_sets(topology, k):
    """All sets ``{k} ∪ S`` for non-empty ``S ⊆ N_k \\ {k}``, lexicographically ordered."""
    others = [l for l in topology.neighbors(k) if l != k]
    if not others:
        raise TopologyError(f"node {k} has no neighbors to select from")
    sets = []
    for size in range(1, len(others) + 1):
        for combo in itertools.combinations(others, size):
            sets.append(tuple(sorted((k, *combo))))
    sets.sort()
    return [CandidateSet(k, s) for s in sets]


def selection_indicators(members, topology):
    """0/1 vector ``alpha_k.`` marking the members of a candidate set."""
    alpha = np.zeros(topology.n_nodes, dtype=int)
    alpha[list(members.members)] = 1
    return alpha


def set_from_indicators(owner, alpha):
    return CandidateSet(owner, tuple(np.flatnonzero(alpha).tolist()))


def random_topology(n_nodes, mean_degree, rng, min_neighbors=2, max_tries=1000):
    """Random connected geometric graph on the unit square.

    Nodes are linked to their nearest peers until each has at least
    ``min_neighbors`` links and the mean link count reaches ``mean_degree``.
    Used to build test graphs and the WSN stand-in fixture.
    """
    for _ in range(max_tries):
        pos = rng.uniform(size=(n_nodes, 2))
        dist = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        np.fill_diagonal(dist, np.inf)
        adj = np.zeros((n_nodes, n_nodes), dtype=bool)
        order = np.argsort(dist, axis=1)
        for k in range(n_nodes):
            adj[k, order[k, :min_neighbors]] = True
        adj |= adj.T
        pairs = np.dstack(np.triu_indices(n_nodes, 1))[0]
        pairs = pairs[np.argsort(dist[pairs[:, 0], pairs[:, 1]])]
        for a, b in pairs:
            if adj.sum() / n_nodes >= mean_degree:
                break
            adj[a, b] = adj[b, a] = True
        if connected_components(adj, directed=False)[0] == 1:
            return Topology(adj)
    raise TopologyError("could not draw a connected topology")
