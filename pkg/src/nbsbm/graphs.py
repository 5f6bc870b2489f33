"""Undirected simple graphs with a canonical directed-edge index.

Each undirected edge is stored once as (min, max) and the m stored edges are
kept in lexicographic order.  The directed-edge index lists the 2m half-edges
with the forward orientations first (indices 0..m-1) and their reversals in
the same order (indices m..2m-1), so reversing a half-edge is ``(e + m) % 2m``.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, ValidationError

__all__ = [
    "Graph",
    "DirectedEdgeIndex",
    "build_graph",
    "directed_edge_index",
    "line_graph_adjacency",
    "in_out_project",
    "adjacency_top_eigenvalue",
    "component_labels",
    "largest_component_fraction",
    "read_edgelist",
    "write_edgelist",
]


@dataclass(frozen=True)
class DirectedEdgeIndex:
    """Half-edge arrays: ``tail[e] -> head[e]`` and the reversal ``inv``."""

    tail: np.ndarray
    head: np.ndarray
    inv: np.ndarray

    @property
    def count(self):
        return self.tail.shape[0]


class Graph:
    """Immutable simple graph with degrees and sorted neighbor lists.

    Attributes
    ----------
    n : int
        Node count.
    edges : (m, 2) int array
        Undirected edges as (i, j) with i < j, lexicographically sorted.
    degrees : (n,) int array
    indptr, indices : CSR structure of the symmetric adjacency,
        neighbor lists sorted by neighbor id.
    """

    def __init__(self, n, edges):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.n = int(n)
        self.m = edges.shape[0]
        self.edges = edges
        self.degrees = np.bincount(edges.ravel(), minlength=self.n)
        both = np.concatenate([edges, edges[:, ::-1]]) if self.m else edges
        order = np.lexsort((both[:, 1], both[:, 0])) if self.m else np.array([], dtype=np.int64)
        src, dst = (both[order, 0], both[order, 1]) if self.m else (both[:, 0], both[:, 1])
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n), out=self.indptr[1:])
        self.indices = dst
        self._dei = None

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def adjacency_matrix(self):
        data = np.ones(self.indices.shape[0], dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def dense_adjacency(self):
        return self.adjacency_matrix().toarray()

    @property
    def dei(self):
        if self._dei is None:
            self._dei = directed_edge_index(self)
        return self._dei

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def build_graph(n, edges):
    """Validate an edge list and build a Graph.

    Rejects self-loops, duplicate edges (after orienting each pair as
    (min, max)) and endpoints outside [0, n).
    """
    n = int(n)
    if n < 0:
        raise ValidationError(f"node count must be nonnegative, got {n}")
    pairs = []
    seen = set()
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if i == j:
            raise ValidationError(f"self-loop ({i}, {j}) is not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError(f"edge ({i}, {j}) has an endpoint outside [0, {n})")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValidationError(f"duplicate edge ({i}, {j})")
        seen.add(key)
        pairs.append(key)
    pairs.sort()
    edges_arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return Graph(n, edges_arr)


def directed_edge_index(g):
    """Half-edge index; forward (i<j) orientations occupy indices 0..m-1."""
    m = g.m
    tail = np.concatenate([g.edges[:, 0], g.edges[:, 1]])
    head = np.concatenate([g.edges[:, 1], g.edges[:, 0]])
    inv = np.concatenate([np.arange(m, 2 * m), np.arange(0, m)])
    return DirectedEdgeIndex(tail=tail, head=head, inv=inv)


def line_graph_adjacency(g):
    """m x m 0-1 matrix: entry (e, f) = 1 iff distinct edges e, f share a node."""
    m = g.m
    out = np.zeros((m, m), dtype=np.int64)
    for v in range(g.n):
        inc = np.nonzero((g.edges[:, 0] == v) | (g.edges[:, 1] == v))[0]
        for a in range(len(inc)):
            for b in range(a + 1, len(inc)):
                out[inc[a], inc[b]] = 1
                out[inc[b], inc[a]] = 1
    return out


def in_out_project(g, x):
    """Sum an edge vector onto nodes: (x_out, x_in) by half-edge tails/heads."""
    x = np.asarray(x, dtype=np.float64)
    dei = g.dei
    if x.shape != (dei.count,):
        raise ValidationError(f"edge vector has shape {x.shape}, expected ({dei.count},)")
    x_out = np.bincount(dei.tail, weights=x, minlength=g.n)
    x_in = np.bincount(dei.head, weights=x, minlength=g.n)
    return x_out, x_in


def adjacency_top_eigenvalue(g, tol=1e-10, max_iter=10000):
    """Largest adjacency eigenvalue of a connected graph by power iteration.

    Runs on A + I with the all-ones start vector; the shift makes the Perron
    root strictly dominant in modulus on bipartite graphs as well.  Stops when
    the eigenvalue residual ||A v - lambda v|| drops below tol.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if not np.all(component_labels(g) == 0):
        raise ValidationError("adjacency_top_eigenvalue requires a connected graph")
    a = g.adjacency_matrix()
    v = np.ones(g.n) / np.sqrt(g.n)
    resid = np.inf
    for _ in range(max_iter):
        w = a @ v + v
        w /= np.linalg.norm(w)
        av = a @ w
        lam = w @ av
        resid = np.linalg.norm(av - lam * w)
        v = w
        if resid <= tol:
            return float(lam)
    raise NumericalError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations "
        f"(last residual {resid:.3e})"
    )


def component_labels(g):
    """Connected-component label per node, labels assigned in BFS discovery order."""
    labels = np.full(g.n, -1, dtype=np.int64)
    current = 0
    for start in range(g.n):
        if labels[start] != -1:
            continue
        labels[start] = current
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if labels[v] == -1:
                    labels[v] = current
                    queue.append(v)
        current += 1
    return labels


def largest_component_fraction(g):
    if g.n == 0:
        return 1.0
    labels = component_labels(g)
    return float(np.bincount(labels).max()) / g.n


def read_edgelist(path):
    """Read the text edge-list format: header ``n m`` then m lines ``i j`` (i < j).

    Lines starting with ``#`` are comments.
    """
    header = None
    pairs = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if header is None:
                if len(parts) != 2:
                    raise ValidationError(f"{path}:{lineno}: expected header 'n m'")
                header = (int(parts[0]), int(parts[1]))
                continue
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'i j'")
            pairs.append((int(parts[0]), int(parts[1])))
    if header is None:
        raise ValidationError(f"{path}: missing 'n m' header")
    n, m = header
    if len(pairs) != m:
        raise ValidationError(f"{path}: header promises {m} edges, found {len(pairs)}")
    for i, j in pairs:
        if i >= j:
            raise ValidationError(f"{path}: edge ({i}, {j}) must satisfy i < j")
    return build_graph(n, pairs)


def write_edgelist(g, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{g.n} {g.m}\n")
        for i, j in g.edges:
            fh.write(f"{i} {j}\n")
