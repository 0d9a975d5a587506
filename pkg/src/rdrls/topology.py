"""Sensor-network graphs and diffusion combination weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Topology",
    "build_random_connected_topology",
    "metropolis_weights",
    "identity_weights",
    "check_combination_matrix",
    "parse_edge_list",
    "format_edge_list",
]


@dataclass(frozen=True, eq=False)
class Topology:
    """Undirected connected graph over ``node_count`` nodes.

    ``adjacency`` holds the links between distinct nodes only; every node is
    implicitly a member of its own neighborhood.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if adj.shape[0] < 1:
            raise ValueError("topology needs at least one node")
        np.fill_diagonal(adj, False)
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise ValueError(f"graph is not connected ({n_comp} components)")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    def neighborhood(self, k: int) -> np.ndarray:
        """Sorted node indices of N_k, including ``k`` itself."""
        mask = self.adjacency[k].copy()
        mask[k] = True
        return np.flatnonzero(mask)

    def degrees(self) -> np.ndarray:
        """Neighborhood cardinalities n_k (self included)."""
        return self.adjacency.sum(axis=1) + 1

    def edges(self) -> list[tuple[int, int]]:
        """0-based ``(m, k)`` pairs with ``m < k``."""
        m, k = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(a), int(b)) for a, b in zip(m, k)]

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)

    @classmethod
    def from_edges(cls, node_count: int, edges) -> "Topology":
        adj = np.zeros((node_count, node_count), dtype=bool)
        for m, k in edges:
            if not (0 <= m < node_count and 0 <= k < node_count):
                raise ValueError(f"edge ({m}, {k}) out of range for {node_count} nodes")
            adj[m, k] = adj[k, m] = True
        return cls(adj)


def build_random_connected_topology(node_count: int, link_probability: float,
                                    seed: int) -> Topology:
    """Random connected graph.

    Every off-diagonal pair is linked independently with probability
    ``link_probability``; afterwards the edges of a random recursive spanning
    tree are added wherever missing, which guarantees connectivity.
    """
    if node_count < 2:
        raise ValueError("node_count must be at least 2")
    if not 0.0 < link_probability <= 1.0:
        raise ValueError("link_probability must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((node_count, node_count)) < link_probability, 1)
    adj = upper | upper.T
    order = rng.permutation(node_count)
    for j in range(1, node_count):
        a, b = order[j], order[rng.integers(j)]
        adj[a, b] = adj[b, a] = True
    return Topology(adj)


def metropolis_weights(topology: Topology) -> np.ndarray:
    """Metropolis combination matrix.

    Column ``k`` holds the weights node ``k`` gives to its neighbors:
    ``c[m, k] = 1 / max(n_k, n_m)`` for linked ``m != k`` and the self weight
    takes the remainder so every column sums to one.
    """
    n = topology.degrees().astype(float)
    adj = topology.adjacency
    C = np.where(adj, 1.0 / np.maximum.outer(n, n), 0.0)
    np.fill_diagonal(C, 0.0)
    np.fill_diagonal(C, 1.0 - C.sum(axis=0))
    return C


def identity_weights(node_count: int) -> np.ndarray:
    """Combination matrix of the no-cooperation mode."""
    return np.eye(node_count)


def check_combination_matrix(C: np.ndarray, topology: Topology | None = None,
                             atol: float = 1e-12) -> None:
    """Raise ``ValueError`` unless ``C`` is a valid column-stochastic matrix.

    When ``topology`` is given the support of ``C`` must also stay inside the
    neighborhoods.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("combination matrix must be square")
    if np.any(C < 0.0) or np.any(C > 1.0):
        raise ValueError("combination weights must lie in [0, 1]")
    if not np.allclose(C.sum(axis=0), 1.0, rtol=0.0, atol=atol):
        raise ValueError("combination matrix columns must sum to 1")
    if topology is not None:
        if C.shape[0] != topology.node_count:
            raise ValueError("combination matrix does not match topology size")
        allowed = topology.adjacency | np.eye(topology.node_count, dtype=bool)
        if np.any(C[~allowed] != 0.0):
            raise ValueError("non-zero weight outside a neighborhood")


def parse_edge_list(text: str, node_count: int) -> Topology:
    """Build a topology from ``m k`` lines with 1-based node ids.

    Blank lines and ``#`` comments are ignored.
    """
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"edge list line {lineno}: expected 'm k', got {raw!r}")
        try:
            m, k = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"edge list line {lineno}: node ids must be integers") from None
        if m == k:
            continue
        if not (1 <= m <= node_count and 1 <= k <= node_count):
            raise ValueError(f"edge list line {lineno}: node id out of range 1..{node_count}")
        edges.append((m - 1, k - 1))
    return Topology.from_edges(node_count, edges)


def format_edge_list(topology: Topology) -> str:
    return "".join(f"{m + 1} {k + 1}\n" for m, k in topology.edges())
