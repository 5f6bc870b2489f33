"""Node embedding from companion eigenvectors, k-means, and label agreement.

Each structural eigenvalue contributes one embedding column: the in-half of
the corresponding companion right eigenvector divided entrywise by the node
degrees.  On a planted graph those columns are nearly constant on clusters,
so plain k-means on the rows recovers the partition.
"""

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import ValidationError
from .nbspec import companion_eigen, real_invariant_columns

__all__ = [
    "Embedding",
    "ClusterAssignment",
    "KmeansResult",
    "node_embedding",
    "kmeans",
    "k_variance",
    "agreement",
    "classify_nodes",
]


@dataclass(frozen=True)
class Embedding:
    points: np.ndarray        # (n_active, k0), columns unit-norm
    node_ids: np.ndarray      # active nodes (degree >= 1), ascending
    isolated: np.ndarray      # degree-0 nodes, ascending
    eigenvalues: np.ndarray   # descending, one per column
    degenerate: np.ndarray    # per-column flag: came from a near-degenerate cluster


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    centers: np.ndarray
    objective: float


@dataclass(frozen=True)
class KmeansResult:
    labels: np.ndarray
    centers: np.ndarray
    objective: float
    n_iter: int


def node_embedding(g, keig, structural_mu, gap=1e-6, residual_tol=1e-6):
    """Degree-normalized in-halves of the eigenvectors for the given eigenvalues.

    structural_mu must be descending.  Near-degenerate eigenvalues are served
    from their common invariant subspace and flagged.  Isolated nodes are left
    out of the point set (their degree normalization is undefined).
    """
    mus = np.asarray(structural_mu, dtype=float)
    if mus.size == 0:
        raise ValidationError("node_embedding needs at least one structural eigenvalue")
    if np.any(np.diff(mus) > 0):
        raise ValidationError("structural eigenvalues must be in descending order")
    keig = companion_eigen(keig)
    n = keig.companion.n
    Q, degenerate = real_invariant_columns(keig, mus, gap=gap, residual_tol=residual_tol)
    x_in = Q[n:, :]
    active = np.nonzero(g.degrees > 0)[0]
    isolated = np.nonzero(g.degrees == 0)[0]
    points = x_in[active, :] / g.degrees[active, None]
    norms = np.linalg.norm(points, axis=0)
    norms[norms == 0] = 1.0
    points = points / norms[None, :]
    return Embedding(points=points, node_ids=active, isolated=isolated,
                     eigenvalues=mus, degenerate=degenerate)


def _plus_plus_centers(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = points[rng.integers(n)]
            continue
        probs = d2 / total
        centers[j] = points[np.searchsorted(np.cumsum(probs), rng.random(), side="right").clip(0, n - 1)]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(points, centers, max_iter):
    k = centers.shape[0]
    labels = None
    it = 0
    for it in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        assigned = d2[np.arange(len(points)), new_labels]
        for j in range(k):
            mask = new_labels == j
            if not np.any(mask):
                # re-seed an emptied center at the farthest point
                far = int(np.argmax(assigned))
                centers[j] = points[far]
                new_labels[far] = j
                assigned[far] = -np.inf
                mask = new_labels == j
            centers[j] = points[mask].mean(axis=0)
        if labels is not None and np.array_equal(labels, new_labels):
            labels = new_labels
            break
        labels = new_labels
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    objective = float(d2[np.arange(len(points)), labels].sum())
    return labels, centers, objective, it + 1


def kmeans(points, k, restarts=10, max_iter=300, seed=0):
    """Best of `restarts` seeded k-means++ / Lloyd runs."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if not (1 <= k <= n):
        raise ValidationError(f"need 1 <= k <= n, got k={k}, n={n}")
    if restarts < 1 or max_iter < 1:
        raise ValidationError("restarts and max_iter must be >= 1")
    best = None
    for trial in range(restarts):
        rng = np.random.default_rng((seed, trial))
        centers = _plus_plus_centers(points, k, rng)
        labels, centers, objective, n_iter = _lloyd(points, centers.copy(), max_iter)
        if best is None or objective < best.objective:
            best = KmeansResult(labels=labels, centers=centers, objective=objective, n_iter=n_iter)
    return best


def k_variance(points, labels):
    """Within-cluster sum of squared distances to cluster means."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    labels = np.asarray(labels)
    total = 0.0
    for j in np.unique(labels):
        block = points[labels == j]
        total += float(((block - block.mean(axis=0)) ** 2).sum())
    return total


def agreement(a, b, k=None):
    """Best fraction of matching positions over cluster relabelings of b.

    Exhaustive over permutations for k <= 8; greedy confusion-matrix matching
    (largest cells first) beyond that.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValidationError("labelings must have equal length")
    if a.size == 0:
        return 1.0
    if k is None:
        k = int(max(a.max(), b.max())) + 1
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (a, b), 1)
    if k <= 8:
        best = max(sum(conf[perm[j], j] for j in range(k)) for perm in permutations(range(k)))
    else:
        work = conf.copy()
        best = 0
        for _ in range(k):
            i, j = np.unravel_index(np.argmax(work), work.shape)
            best += int(work[i, j])
            work[i, :] = -1
            work[:, j] = -1
    return best / a.size


def classify_nodes(g, embedding, k, restarts=10, max_iter=300, seed=0):
    """k-means on the embedded rows, extended to all n nodes.

    Isolated nodes join the largest recovered cluster (lowest label on ties)
    and count against any agreement computed later.
    """
    result = kmeans(embedding.points, k, restarts=restarts, max_iter=max_iter, seed=seed)
    labels = np.zeros(g.n, dtype=np.int64)
    labels[embedding.node_ids] = result.labels
    if embedding.isolated.size:
        sizes = np.bincount(result.labels, minlength=k)
        labels[embedding.isolated] = int(np.argmax(sizes))
    return ClusterAssignment(labels=labels, centers=result.centers, objective=result.objective)
