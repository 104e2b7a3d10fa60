"""Network layers: ring lattices, preferential-attachment graphs, relabelling and merging.

Graphs are immutable undirected simple graphs over nodes ``0..n-1``. Edges are
kept as a sorted ``(m, 2)`` integer array with ``u < v`` on every row, which
doubles as the canonical form used for equality and serialization.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np


class ParameterError(ValueError):
    """Invalid construction parameters or incompatible inputs."""


def _canonical_edges(edges, node_count: int) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if np.any(arr[:, 0] == arr[:, 1]):
        raise ParameterError("self-loops are not allowed")
    if arr.min() < 0 or arr.max() >= node_count:
        raise ParameterError(f"edge endpoint outside 0..{node_count - 1}")
    arr = np.sort(arr, axis=1)
    arr = np.unique(arr, axis=0)
    return arr


class Graph:
    """Undirected simple graph with a fixed node count.

    Duplicate edges passed to the constructor collapse; self-loops and
    out-of-range endpoints raise :class:`ParameterError`.
    """

    def __init__(self, node_count: int, edges: Iterable = ()):
        if node_count < 1:
            raise ParameterError("node_count must be positive")
        self.node_count = int(node_count)
        arr = _canonical_edges(edges if isinstance(edges, np.ndarray) else list(edges), self.node_count)
        arr.setflags(write=False)
        self._edges = arr

    @property
    def edges(self) -> np.ndarray:
        """Sorted ``(m, 2)`` array of ``(u, v)`` pairs with ``u < v``."""
        return self._edges

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self._edges}

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Adjacency as ``(indptr, indices)``; neighbours of ``v`` are sorted."""
        n = self.node_count
        src = np.concatenate([self._edges[:, 0], self._edges[:, 1]])
        dst = np.concatenate([self._edges[:, 1], self._edges[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        dst.setflags(write=False)
        indptr.setflags(write=False)
        return indptr, dst

    def neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self.csr
        return indices[indptr[v]:indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr[0])

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count), dtype=np.int64)
        a[self._edges[:, 0], self._edges[:, 1]] = 1
        a[self._edges[:, 1], self._edges[:, 0]] = 1
        return a

    def component_count(self) -> int:
        from scipy.sparse.csgraph import connected_components

        return int(connected_components(self._sparse(), directed=False)[0])

    def _sparse(self):
        from scipy.sparse import csr_matrix

        indptr, indices = self.csr
        data = np.ones(len(indices), dtype=np.int8)
        return csr_matrix((data, indices, indptr), shape=(self.node_count, self.node_count))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.node_count == other.node_count and np.array_equal(self._edges, other._edges)

    def __hash__(self):
        return hash((self.node_count, self._edges.tobytes()))

    def __repr__(self):
        return f"Graph(node_count={self.node_count}, edges={self.edge_count})"


@dataclass(frozen=True)
class KRegularParams:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 3:
            raise ParameterError(f"k-regular ring needs n >= 3, got n={self.n}")
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got k={self.k}")


@dataclass(frozen=True)
class ScaleFreeParams:
    n: int
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"d must be >= 1, got d={self.d}")
        if self.n < self.d:
            raise ParameterError(f"scale-free graph needs n >= d, got n={self.n}, d={self.d}")


def generate_k_regular(params: KRegularParams) -> Graph:
    """Ring lattice linking node ``i`` to ``(i + j) mod n`` for ``j = 1..k``.

    No randomness is involved; callers wanting a random labelling pass the
    result through :func:`shuffle_labels`. When ``2k >= n - 1`` the wrap-around
    edges coincide and the result is the complete graph.
    """
    n, k = params.n, params.k
    i = np.arange(n, dtype=np.int64)
    offsets = np.arange(1, min(k, n - 1) + 1, dtype=np.int64)
    u = np.repeat(i, len(offsets))
    v = (u + np.tile(offsets, n)) % n
    return Graph(n, np.column_stack([u, v]))


def shuffle_labels(g: Graph, rng: np.random.Generator) -> Graph:
    """Relabel nodes with a uniformly random permutation drawn from ``rng``."""
    perm = np.asarray(rng.permutation(g.node_count), dtype=np.int64)
    return Graph(g.node_count, perm[g.edges])


def generate_scale_free(params: ScaleFreeParams, rng: np.random.Generator) -> Graph:
    """Preferential-attachment growth from a seed of ``d`` isolated nodes.

    Every later node links to ``d`` distinct existing nodes chosen with
    probability proportional to ``degree + 1``.
    """
    n, d = params.n, params.d
    degree = np.zeros(n, dtype=np.int64)
    edges = []
    for new in range(d, n):
        weights = (degree[:new] + 1).astype(float)
        targets = rng.choice(new, size=d, replace=False, p=weights / weights.sum())
        for t in targets:
            edges.append((int(t), new))
        degree[targets] += 1
        degree[new] += d
    return Graph(n, edges)


def merge_graphs(layers: list[Graph]) -> Graph:
    """Union of the layers' edge sets; shared edges appear once."""
    if not layers:
        raise ParameterError("merge_graphs needs at least one layer")
    n = layers[0].node_count
    if any(g.node_count != n for g in layers):
        raise ParameterError("all layers must have the same node_count")
    return Graph(n, np.concatenate([g.edges for g in layers]))


def write_edge_list(g: Graph, path) -> None:
    Path(path).write_text(format_edge_list(g))


def format_edge_list(g: Graph) -> str:
    lines = [f"n {g.node_count}"]
    lines += [f"{u} {v}" for u, v in g.edges]
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> Graph:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0][0] != "n" or len(rows[0]) != 2:
        raise ParameterError("edge list must start with 'n <node_count>'")
    n = int(rows[0][1])
    try:
        edges = [(int(a), int(b)) for a, b in rows[1:]]
    except ValueError as exc:
        raise ParameterError(f"malformed edge line: {exc}") from None
    return Graph(n, edges)


def read_edge_list(path) -> Graph:
    return parse_edge_list(Path(path).read_text())
