"""Graph algebra for consensus networks.

Builds oriented incidence matrices, weighted Laplacians, and spanning-tree
decompositions, including the chain of linear maps that takes node states to
the reduced coordinates driving the contraction analysis.

Node labels and edge indices are 1-based throughout the public surface, so
they match the way scenarios are written down; arrays are 0-indexed
internally.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import GraphError

_RANK_RTOL = 1e-10  # relative singular-value threshold for connectivity


def build_topology(node_count: int, edges) -> "Topology":
    """Construct an undirected topology with the given oriented edge list.

    Args:
        node_count: number of agents (>= 2).
        edges: iterable of (tail, head) pairs with 1-based node labels.

    Raises:
        GraphError: on self-loops, duplicate undirected edges, out-of-range
            endpoints, or fewer than two nodes.
    """
    if node_count < 2:
        raise GraphError(f"need at least 2 nodes, got {node_count}")
    edge_list = [(int(a), int(b)) for a, b in edges]
    seen: set[frozenset[int]] = set()
    for idx, (tail, head) in enumerate(edge_list, start=1):
        if tail == head:
            raise GraphError(f"edge {idx} ({tail},{head}) is a self-loop")
        if not (1 <= tail <= node_count and 1 <= head <= node_count):
            raise GraphError(
                f"edge {idx} ({tail},{head}) has endpoints outside 1..{node_count}"
            )
        key = frozenset((tail, head))
        if key in seen:
            raise GraphError(f"edge {idx} ({tail},{head}) duplicates an earlier edge")
        seen.add(key)
    incidence = np.zeros((node_count, len(edge_list)))
    for j, (tail, head) in enumerate(edge_list):
        incidence[tail - 1, j] = -1.0
        incidence[head - 1, j] = 1.0
    incidence.setflags(write=False)
    return Topology(node_count, tuple(edge_list), incidence)


@dataclass(frozen=True)
class Topology:
    """Undirected graph with a fixed, arbitrary edge orientation.

    The incidence matrix has one column per edge with -1 at the tail and +1
    at the head; column order follows the edge list. Instances are immutable
    and safe to share between threads.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    incidence: NDArray[np.float64]

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def laplacian(self, weights) -> NDArray[np.float64]:
        return laplacian_at(self, weights)

    def incidence_norm(self) -> float:
        """Induced 2-norm of the incidence matrix."""
        return float(np.linalg.norm(self.incidence, 2))

    def components(self) -> list[list[int]]:
        """Connected components as sorted lists of 1-based node labels."""
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for tail, head in self.edges:
            adj[tail - 1].append(head - 1)
            adj[head - 1].append(tail - 1)
        seen = [False] * self.node_count
        comps = []
        for start in range(self.node_count):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                u = stack.pop()
                comp.append(u + 1)
                for v in adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        if self.edge_count < self.node_count - 1:
            return False
        sv = np.linalg.svd(self.incidence, compute_uv=False)
        rank = int(np.sum(sv > _RANK_RTOL * sv[0])) if sv.size else 0
        return rank == self.node_count - 1


def laplacian_at(topology: Topology, weights) -> NDArray[np.float64]:
    """Weighted Laplacian ``D diag(w) D^T`` for one weight snapshot.

    Weights must be nonnegative, one per edge. The result is symmetric
    positive-semidefinite with zero row sums.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (topology.edge_count,):
        raise GraphError(
            f"expected {topology.edge_count} edge weights, got shape {w.shape}"
        )
    if np.any(w < 0):
        bad = int(np.argmin(w)) + 1
        raise GraphError(f"edge weight {bad} is negative ({w[bad - 1]})")
    d = topology.incidence
    return (d * w) @ d.T


@dataclass(frozen=True)
class SpanningDecomposition:
    """Spanning-tree/cycle split of a connected topology.

    Holds the permuted incidence blocks, the eigendecomposition of the tree
    edge Laplacian, the cycle map (cycle edge states are ``cycle_map.T @
    tree_states`` for any node state), and the derived operators used by the
    reduced dynamics:

    - ``reduced_projection`` maps node states to reduced coordinates,
    - ``reduced_mixing`` maps reduced coordinates to (permuted) edge space so
      that the reduced coupling at weights ``w`` is
      ``reduced_mixing.T @ diag(w) @ reduced_mixing``,
    - ``edge_state_ratio`` bounds the full edge-state norm by the reduced
      norm: ``|x_e| <= edge_state_ratio * |reduced|``.
    """

    topology: Topology
    tree_edges: tuple[int, ...]  # 1-based edge indices, p = n-1 of them
    cycle_edges: tuple[int, ...]
    permutation: tuple[int, ...]  # permuted edge order (tree first), 1-based
    tree_incidence: NDArray[np.float64]
    cycle_incidence: NDArray[np.float64]
    tree_edge_laplacian: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]  # ascending, all > 0
    eigenvectors: NDArray[np.float64]  # orthogonal, fixed sign convention
    cycle_map: NDArray[np.float64]  # p x (m-p)
    reduced_projection: NDArray[np.float64]  # p x n
    reduced_mixing: NDArray[np.float64]  # m x p
    edge_state_ratio: float
    cycle_map_norm: float = field(default=0.0)

    @property
    def tree_edge_count(self) -> int:
        return len(self.tree_edges)

    @property
    def eigenvalue_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def eigenvalue_norm(self) -> float:
        return float(self.eigenvalues[-1])

    def basis_norm(self) -> float:
        """Induced 2-norm of the orthogonal eigenvector basis (1 up to roundoff)."""
        return float(np.linalg.norm(self.eigenvectors, 2))

    def tree_selector(self) -> NDArray[np.float64]:
        """The ``[I | cycle_map]`` block mapping permuted edge space onto the
        tree coordinates (its transpose expands tree states to all edges)."""
        return np.hstack([np.eye(self.tree_edge_count), self.cycle_map])


def _bfs_tree(topology: Topology) -> list[int]:
    """Deterministic spanning tree: breadth-first from node 1, edges in list order."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(topology.node_count)]
    for j, (tail, head) in enumerate(topology.edges):
        adj[tail - 1].append((head - 1, j))
        adj[head - 1].append((tail - 1, j))
    for lst in adj:
        lst.sort(key=lambda item: item[1])
    seen = [False] * topology.node_count
    seen[0] = True
    queue = [0]
    tree: list[int] = []
    while queue:
        u = queue.pop(0)
        for v, j in adj[u]:
            if not seen[v]:
                seen[v] = True
                tree.append(j + 1)
                queue.append(v)
    return sorted(tree)


def _check_tree(topology: Topology, edge_idx: list[int]) -> bool:
    cols = topology.incidence[:, [j - 1 for j in edge_idx]]
    if cols.shape[1] != topology.node_count - 1:
        return False
    sv = np.linalg.svd(cols, compute_uv=False)
    return bool(sv[-1] > _RANK_RTOL * sv[0])


def decompose(topology: Topology, tree_hint=None) -> SpanningDecomposition:
    """Split a connected topology into spanning-tree and cycle edges.

    Args:
        topology: connected topology.
        tree_hint: optional list of 1-based edge indices to use as the
            spanning tree. When omitted, a breadth-first tree from node 1 is
            chosen so decompositions are reproducible across runs.

    Raises:
        GraphError: if the topology is disconnected (the message names the
            components) or the hint is not a spanning tree.
    """
    if not topology.is_connected():
        comps = topology.components()
        raise GraphError(
            f"topology is disconnected; components: {comps}"
        )
    n, m = topology.node_count, topology.edge_count
    p = n - 1
    if tree_hint is not None:
        hint = [int(j) for j in tree_hint]
        if len(hint) != p or len(set(hint)) != p or not all(
            1 <= j <= m for j in hint
        ):
            raise GraphError(
                f"tree hint {hint} must list {p} distinct edge indices in 1..{m}"
            )
        if not _check_tree(topology, hint):
            raise GraphError(f"tree hint {hint} does not span the graph")
        tree = sorted(hint)
    else:
        tree = _bfs_tree(topology)
    cycle = [j for j in range(1, m + 1) if j not in set(tree)]
    perm = tuple(tree + cycle)

    d = topology.incidence
    d_tree = d[:, [j - 1 for j in tree]]
    d_cycle = d[:, [j - 1 for j in cycle]]
    tree_lap = d_tree.T @ d_tree
    evals, evecs = np.linalg.eigh(tree_lap)
    # Fix eigenvector signs (largest-magnitude entry positive) so every
    # downstream constant is deterministic.
    for col in range(p):
        k = int(np.argmax(np.abs(evecs[:, col])))
        if evecs[k, col] < 0:
            evecs[:, col] = -evecs[:, col]
    if evals[0] <= 0:
        raise GraphError("tree edge Laplacian is not positive definite")

    if cycle:
        cycle_map = np.linalg.solve(tree_lap, d_tree.T @ d_cycle)
        cycle_norm = float(np.sqrt(np.linalg.eigvalsh(cycle_map.T @ cycle_map)[-1]))
    else:
        cycle_map = np.zeros((p, 0))
        cycle_norm = 0.0
    basis_norm = float(np.linalg.norm(evecs, 2))
    ratio = basis_norm * float(np.sqrt(1.0 + cycle_norm**2))

    selector = np.hstack([np.eye(p), cycle_map])  # p x m, permuted order
    reduced_projection = evecs.T @ d_tree.T
    reduced_mixing = selector.T @ evecs

    for arr in (d_tree, d_cycle, tree_lap, evals, evecs, cycle_map,
                reduced_projection, reduced_mixing):
        arr.setflags(write=False)
    return SpanningDecomposition(
        topology=topology,
        tree_edges=tuple(tree),
        cycle_edges=tuple(cycle),
        permutation=perm,
        tree_incidence=d_tree,
        cycle_incidence=d_cycle,
        tree_edge_laplacian=tree_lap,
        eigenvalues=evals,
        eigenvectors=evecs,
        cycle_map=cycle_map,
        reduced_projection=reduced_projection,
        reduced_mixing=reduced_mixing,
        edge_state_ratio=ratio,
        cycle_map_norm=cycle_norm,
    )


@dataclass(frozen=True)
class EdgeStates:
    """Edge-space views of one node state (permuted order, tree edges first)."""

    all_edges: NDArray[np.float64]
    tree: NDArray[np.float64]
    reduced: NDArray[np.float64]


def edge_states(decomp: SpanningDecomposition, x) -> EdgeStates:
    """Edge states, tree-edge states, and reduced coordinates of ``x``."""
    xv = np.asarray(x, dtype=float)
    n = decomp.topology.node_count
    if xv.shape != (n,):
        raise GraphError(f"expected node state of length {n}, got shape {xv.shape}")
    order = [j - 1 for j in decomp.permutation]
    x_e = decomp.topology.incidence[:, order].T @ xv
    x_tree = decomp.tree_incidence.T @ xv
    reduced = decomp.reduced_projection @ xv
    return EdgeStates(x_e, x_tree, reduced)


def kirchhoff_count(topology: Topology) -> int:
    """Number of spanning trees, via the matrix-tree determinant."""
    lap = laplacian_at(topology, np.ones(topology.edge_count))
    minor = lap[1:, 1:]
    if minor.size == 0:
        return 1
    sign, logdet = np.linalg.slogdet(minor)
    if sign <= 0:
        return 0
    return int(round(np.exp(logdet)))


def enumerate_spanning_trees(topology: Topology, cap: int = 10_000):
    """All spanning trees as sorted 1-based edge-index tuples, lexicographic.

    The Kirchhoff count is checked first; exceeding ``cap`` raises so callers
    can fall back to an explicit tree hint.
    """
    count = kirchhoff_count(topology)
    if count > cap:
        raise GraphError(
            f"{count} spanning trees exceed the enumeration cap {cap}; "
            "pass an explicit tree hint"
        )
    p = topology.node_count - 1
    trees = []
    for combo in itertools.combinations(range(1, topology.edge_count + 1), p):
        if _check_tree(topology, list(combo)):
            trees.append(tuple(combo))
    return trees
