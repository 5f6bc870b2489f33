"""Sparse stochastic block model: parameters, sampling, percolation, thresholds.

Edge probabilities scale as beta * c_ab / n, so the affinity matrix C is the
expected-degree-scale parameter that stays fixed as n grows.  Percolation by
retention probability beta is equivalent to multiplying C by beta; both routes
are provided and are distributionally identical.
"""

import json
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .graphs import Graph, build_graph

__all__ = [
    "SbmParams",
    "PlantedGraph",
    "BetaThresholds",
    "cluster_degrees",
    "average_degree",
    "deflated_matrix",
    "model_eigenvalues",
    "transmission_matrix",
    "sample_graph",
    "percolate",
    "kesten_stigum",
    "beta_thresholds",
    "symmetric_params",
    "load_params",
    "save_params",
    "load_labels",
    "save_labels",
]


@dataclass(frozen=True)
class SbmParams:
    """Cluster count k, proportions r, symmetric affinity matrix C, retention beta."""

    k: int
    r: np.ndarray
    C: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        C = np.asarray(self.C, dtype=np.float64)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "C", C)
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if r.shape != (self.k,):
            raise ValidationError(f"r must have shape ({self.k},), got {r.shape}")
        if C.shape != (self.k, self.k):
            raise ValidationError(f"C must have shape ({self.k}, {self.k}), got {C.shape}")
        if abs(r.sum() - 1.0) > 1e-12:
            raise ValidationError(f"cluster proportions must sum to 1, got {r.sum()!r}")
        if np.any(r <= 0):
            raise ValidationError("all cluster proportions must be positive")
        if np.any(C < 0):
            raise ValidationError("affinities must be nonnegative")
        if not np.allclose(C, C.T, rtol=0, atol=1e-12):
            raise ValidationError("affinity matrix must be symmetric")
        if not (0.0 <= self.beta <= 1.0):
            raise ValidationError(f"beta must be in [0, 1], got {self.beta}")


@dataclass(frozen=True)
class PlantedGraph:
    graph: Graph
    labels: np.ndarray
    params: SbmParams
    n_a: np.ndarray


class BetaThresholds(NamedTuple):
    beta: np.ndarray        # ascending; inf where the eigenvalue vanishes
    detectable: np.ndarray  # False where nu <= 0 or the threshold exceeds 1


def cluster_degrees(p, apply_beta=False):
    """Expected average degree per cluster, c_a = sum_b r_b c_ab."""
    c = p.C @ p.r
    return c * p.beta if apply_beta else c


def average_degree(p, apply_beta=False):
    """Expected average degree c = sum_a r_a c_a."""
    return float(p.r @ cluster_degrees(p, apply_beta=apply_beta))


def deflated_matrix(p):
    """Symmetric k x k matrix R^(1/2) C R^(1/2); its eigenvalues are the nonzero
    eigenvalues of the inflated expected adjacency matrix (and of R C)."""
    s = np.sqrt(p.r)
    return p.C * np.outer(s, s)


def model_eigenvalues(p, apply_beta=True):
    """Eigenvalues of the deflated matrix, descending, scaled by beta.

    Retention multiplies every affinity by beta, hence every eigenvalue too.
    """
    nu = np.linalg.eigvalsh(deflated_matrix(p))[::-1]
    return nu * p.beta if apply_beta else nu


def transmission_matrix(p):
    """Row-stochastic k x k matrix T with T[a, b] = c_ab r_b / c_a.

    T shares its spectrum with diag(1/c_a) R C (diagonal factors commute under
    the similarity that swaps the two orderings), and its largest eigenvalue
    is 1.  Beta cancels between numerator and denominator, so T is the same
    for every retention level.
    """
    c = cluster_degrees(p)
    if np.any(c <= 0):
        bad = int(np.argmin(c))
        raise ValidationError(f"cluster {bad} has zero expected degree; T is undefined")
    return (p.C * p.r[None, :]) / c[:, None]


def transmission_eigenvalues(p):
    """Eigenvalues of the transmission matrix, real and descending.

    T = diag(1/c_a) C diag(r_b) is similar to the symmetric matrix
    S C S with S = diag(sqrt(r_a / c_a)), so the spectrum is real.
    """
    c = cluster_degrees(p)
    if np.any(c <= 0):
        raise ValidationError("transmission eigenvalues need positive cluster degrees")
    s = np.sqrt(p.r / c)
    return np.linalg.eigvalsh(p.C * np.outer(s, s))[::-1]


def _check_probabilities(p, n):
    pmax = p.beta * p.C.max() / n
    if pmax > 1.0 + 1e-12:
        raise ValidationError(
            f"edge probability beta*max(C)/n = {pmax:.6g} exceeds 1 at n={n}"
        )


def _draw_labels(rng, r, n):
    u = rng.random(n)
    return np.searchsorted(np.cumsum(r), u, side="right").astype(np.int64)


def sample_graph(p, n, seed, method="bernoulli"):
    """Sample a planted graph: i.i.d. labels from r, then independent edges.

    method="bernoulli" draws one uniform per unordered pair {i, j} (i < j) in
    row-major order, so a seed fully determines the graph.  method="skip" uses
    geometric jumps within the constant-probability blocks; it is also
    deterministic per seed but consumes a different random stream, so the two
    methods give different (identically distributed) graphs for the same seed.
    """
    _check_probabilities(p, n)
    rng = np.random.default_rng(seed)
    labels = _draw_labels(rng, p.r, n)
    prob = np.minimum(p.beta * p.C / n, 1.0)
    if method == "bernoulli":
        rows = []
        for i in range(n - 1):
            u = rng.random(n - 1 - i)
            hit = np.nonzero(u < prob[labels[i], labels[i + 1:]])[0]
            if hit.size:
                rows.append(np.stack([np.full(hit.size, i), i + 1 + hit], axis=1))
        edges = np.concatenate(rows) if rows else np.empty((0, 2), dtype=np.int64)
    elif method == "skip":
        edges = _sample_edges_skip(rng, labels, prob, n)
    else:
        raise ValidationError(f"unknown sampling method {method!r}")
    g = Graph(n, edges[np.lexsort((edges[:, 1], edges[:, 0]))] if edges.size else edges)
    n_a = np.bincount(labels, minlength=p.k)
    return PlantedGraph(graph=g, labels=labels, params=p, n_a=n_a)


def _sample_edges_skip(rng, labels, prob, n):
    # Enumerate pairs block by block (a <= b); within a block all pairs share
    # one probability, so jump ahead by floor(log U / log(1-p)) at a time.
    k = prob.shape[0]
    members = [np.nonzero(labels == a)[0] for a in range(k)]
    edges = []
    for a in range(k):
        for b in range(a, k):
            q = prob[a, b]
            if q <= 0:
                continue
            ma, mb = members[a], members[b]
            if a == b:
                total = len(ma) * (len(ma) - 1) // 2
            else:
                total = len(ma) * len(mb)
            if total == 0:
                continue
            if q >= 1.0:
                picks = np.arange(total)
            else:
                picks = []
                pos = -1
                log1q = np.log1p(-q)
                while True:
                    pos += 1 + int(np.log(1.0 - rng.random()) / log1q)
                    if pos >= total:
                        break
                    picks.append(pos)
                picks = np.asarray(picks, dtype=np.int64)
            for t in picks:
                if a == b:
                    i = int((1 + np.sqrt(1 + 8 * t)) // 2)
                    while i * (i - 1) // 2 > t:
                        i -= 1
                    while (i + 1) * i // 2 <= t:
                        i += 1
                    j = int(t - i * (i - 1) // 2)
                    u, v = ma[i], ma[j]
                else:
                    u, v = ma[t // len(mb)], mb[t % len(mb)]
                edges.append((min(u, v), max(u, v)))
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def edge_uniforms(m, seed):
    """The coupled percolation uniforms: one per edge, in edge-index order."""
    return np.random.default_rng(seed).random(m)


def percolate(pg, beta, seed):
    """Keep each edge independently with probability beta; labels unchanged.

    Implemented with one uniform per edge (kept iff u < beta), so calls with
    the same seed and increasing beta produce nested edge sets.
    """
    if not (0.0 <= beta <= 1.0):
        raise ValidationError(f"beta must be in [0, 1], got {beta}")
    u = edge_uniforms(pg.graph.m, seed)
    kept = pg.graph.edges[u < beta]
    g = Graph(pg.graph.n, kept)
    params = replace(pg.params, beta=pg.params.beta * beta)
    return PlantedGraph(graph=g, labels=pg.labels, params=params, n_a=pg.n_a)


def kesten_stigum(c_in, c_out, k):
    """Symmetric-case detectability test |c_in - c_out| > k sqrt(c); returns
    (detectable, margin) with margin = |c_in - c_out| - k sqrt(c)."""
    c = (c_in + (k - 1) * c_out) / k
    margin = abs(c_in - c_out) - k * np.sqrt(c)
    return margin > 0, float(margin)


def beta_thresholds(p):
    """Percolation thresholds beta_i = c / nu_i^2 from the beta=1 model.

    Ascending in i because the nu are descending.  Entries with nu_i <= 0
    (disassortative directions) come back as +inf and are marked
    non-detectable, as are finite thresholds above 1.
    """
    base = replace(p, beta=1.0)
    nu = model_eigenvalues(base)
    c = average_degree(base)
    beta = np.full(p.k, np.inf)
    pos = nu > 0
    beta[pos] = c / nu[pos] ** 2
    detectable = pos & (beta <= 1.0)
    return BetaThresholds(beta=beta, detectable=detectable)


def symmetric_params(k, c_in, c_out, beta=1.0):
    """Equal proportions and a c_in/c_out affinity matrix."""
    C = np.full((k, k), float(c_out))
    np.fill_diagonal(C, float(c_in))
    return SbmParams(k=k, r=np.full(k, 1.0 / k), C=C, beta=beta)


def load_params(path):
    with open(path, "r", encoding="ascii") as fh:
        raw = json.load(fh)
    try:
        return SbmParams(k=int(raw["k"]), r=np.asarray(raw["r"], dtype=float),
                         C=np.asarray(raw["C"], dtype=float),
                         beta=float(raw.get("beta", 1.0)))
    except KeyError as exc:
        raise ValidationError(f"params file {path} is missing key {exc}") from exc


def save_params(p, path):
    doc = {"k": p.k, "r": [float(x) for x in p.r],
           "C": [[float(x) for x in row] for row in p.C],
           "beta": float(p.beta)}
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_labels(path):
    with open(path, "r", encoding="ascii") as fh:
        return np.array([int(line.strip()) for line in fh if line.strip()], dtype=np.int64)


def save_labels(labels, path):
    with open(path, "w", encoding="ascii") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")
