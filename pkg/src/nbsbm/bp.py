"""Belief propagation for cluster marginals, and its linear stability.

Messages live on the 2m half-edges: row e of the message matrix is the
distribution over clusters for the head of e, estimated without the tail of
e.  The synchronous update of row e reads the rows of the edges leaving
head(e), except the reversal of e:

    psi[e, a]  ~  r_a * exp(-h_a) * prod_f sum_b psi[f, b] * p_ab ,

with p = beta * C / n.  The field h_a = (beta / n) sum_l sum_b c_ab psi_l^b
collects the non-edge factors of the full update; without it the update has a
spurious all-nodes-in-one-cluster attractor whose linear growth rate exceeds
the community mode's on every assortative model, so the bare recursion
collapses from generic starts.  The field term is O(1/n) per message and does
not change the linearization around the uniform point.  field=False gives the
bare edge-only recursion.

Products are accumulated in log space throughout (sparse-graph probabilities
underflow plain products on high-degree nodes); row normalization makes this
agree with the direct product to rounding error.
"""

from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ValidationError
from .nbspec import Spectrum, structural_eigenvalues
from .sbm import PlantedGraph, average_degree, transmission_eigenvalues

__all__ = [
    "init_messages",
    "bp_step",
    "bp_run",
    "bp_marginals",
    "linear_stability",
    "BpResult",
    "StabilityReport",
]


class BpResult(NamedTuple):
    messages: np.ndarray
    marginals: np.ndarray
    converged: bool
    iters: int


class StabilityReport(NamedTuple):
    unstable: bool          # community criterion: nontrivial products only
    max_product: float
    raw_unstable: bool      # plain Kronecker criterion: any product > 1
    raw_max_product: float


def _graph_of(g):
    return g.graph if isinstance(g, PlantedGraph) else g


def init_messages(g, k, mode="uniform", seed=None):
    """Uniform rows, or i.i.d. flat-Dirichlet rows for mode="random"."""
    graph = _graph_of(g)
    two_m = 2 * graph.m
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if mode == "uniform":
        return np.full((two_m, k), 1.0 / k)
    if mode == "random":
        rng = np.random.default_rng(seed)
        draws = -np.log(1.0 - rng.random((two_m, k)))
        return draws / draws.sum(axis=1, keepdims=True)
    raise ValidationError(f"unknown init mode {mode!r}")


def _log_inputs(graph, params, msgs):
    # log of (msgs @ P)[f, a] = log sum_b psi[f, b] p_ab ; P is symmetric.
    P = params.beta * params.C / graph.n
    with np.errstate(divide="ignore"):
        return np.log(msgs @ P)


def _tail_sums(graph, L):
    # agg[v, :] = sum of L rows over edges with tail v.
    k = L.shape[1]
    agg = np.empty((graph.n, k))
    tail = graph.dei.tail
    for a in range(k):
        agg[:, a] = np.bincount(tail, weights=L[:, a], minlength=graph.n)
    return agg


def _solve_field(graph, params, log_node):
    """Self-consistent h: h_a = (beta/n) sum_b c_ab sum_l m_l^b with the
    marginals m themselves tilted by exp(-h)."""
    coef = params.beta * params.C / graph.n
    h = np.zeros(params.k)
    for _ in range(200):
        logm = log_node - h[None, :]
        logm = logm - logm.max(axis=1, keepdims=True)
        m = np.exp(logm)
        m /= m.sum(axis=1, keepdims=True)
        new = coef @ m.sum(axis=0)
        if np.abs(new - h).max() < 1e-12:
            return new
        h = 0.5 * h + 0.5 * new
    return h


def _node_logs(graph, params, L):
    agg = _tail_sums(graph, L)
    with np.errstate(invalid="ignore"):
        log_node = np.log(params.r)[None, :] + agg
    return agg, log_node


def bp_step(g, params, msgs, damping=0.1, field=True):
    """One synchronous update of all messages; returns (new, max_delta).

    Rows are renormalized to sum to 1 (this realizes the per-edge constant of
    the update rule).  With field=False, heads of degree 1 have an empty
    product and reproduce the prior r exactly.
    new = (1 - damping) * update + damping * old.
    """
    graph = _graph_of(g)
    if not (0.0 <= damping < 1.0):
        raise ValidationError(f"damping must be in [0, 1), got {damping}")
    dei = graph.dei
    L = _log_inputs(graph, params, msgs)
    agg, log_node = _node_logs(graph, params, L)
    h = _solve_field(graph, params, log_node) if field else np.zeros(params.k)
    with np.errstate(invalid="ignore"):
        logq = (np.log(params.r) - h)[None, :] + agg[dei.head] - L[dei.inv]
    # agg - L[inv] can produce inf - inf = nan only if L[inv] itself is -inf,
    # in which case that factor never contributed; treat it as -inf row-entry.
    logq = np.where(np.isnan(logq), -np.inf, logq)
    top = logq.max(axis=1) if logq.size else np.array([])
    dead = ~np.isfinite(top)
    if np.any(dead):
        e = int(np.nonzero(dead)[0][0])
        raise NumericalError(
            f"message row {e} (edge {dei.tail[e]}->{dei.head[e]}) has zero mass "
            "for every cluster"
        )
    q = np.exp(logq - top[:, None]) if logq.size else logq
    if q.size:
        q /= q.sum(axis=1, keepdims=True)
    new = (1.0 - damping) * q + damping * msgs
    delta = float(np.abs(new - msgs).max()) if new.size else 0.0
    return new, delta


def bp_marginals(msgs, g, params, field=True):
    """Node marginals from messages: row i ~ r_a e^{-h_a} prod over edges out
    of i.  Isolated nodes get the (field-tilted) prior."""
    graph = _graph_of(g)
    L = _log_inputs(graph, params, msgs)
    _, log_node = _node_logs(graph, params, L)
    if field:
        log_node = log_node - _solve_field(graph, params, log_node)[None, :]
    top = log_node.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    out = np.exp(log_node - top)
    return out / out.sum(axis=1, keepdims=True)


def bp_run(g, params, tol=1e-8, max_iter=1000, damping=0.1, seed=None,
           init="random", field=True):
    """Iterate bp_step until max_delta < tol or max_iter; then read marginals."""
    if tol <= 0:
        raise ValidationError("tol must be positive")
    graph = _graph_of(g)
    msgs = init_messages(graph, params.k, mode=init, seed=seed)
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        msgs, delta = bp_step(graph, params, msgs, damping=damping, field=field)
        if delta < tol:
            converged = True
            break
    marginals = bp_marginals(msgs, graph, params, field=field)
    return BpResult(messages=msgs, marginals=marginals, converged=converged, iters=iters)


def linear_stability(params, bspec, c=None, unit_radius=1e-3):
    """Detectability from products of half-edge and transmission eigenvalues.

    The linearized message dynamics has growth rates mu_i * tau_j over the
    eigenvalues mu of the half-edge matrix and tau of the transmission matrix.
    The community criterion drops the trivial mode from each factor (the
    leading structural mu and tau_1 = 1) and reports instability iff some
    remaining |mu * tau| exceeds 1.  The raw product criterion over all pairs
    is reported alongside.  Structural mu are taken from the supplied spectrum
    with the plain sqrt(c) cutoff (no extra margin).
    """
    tau = transmission_eigenvalues(params)
    if c is None:
        c = average_degree(params, apply_beta=True)
    values = bspec.values if isinstance(bspec, Spectrum) else np.asarray(bspec, dtype=np.complex128)
    mus = structural_eigenvalues(values, c, margin=0.0, unit_radius=unit_radius)
    raw_max = float(np.abs(values).max() * np.abs(tau).max()) if values.size else 0.0
    mus_rest = mus[1:]
    tau_rest = tau[1:]
    if mus_rest.size and tau_rest.size:
        max_product = float(np.abs(np.outer(mus_rest, tau_rest)).max())
    else:
        max_product = 0.0
    return StabilityReport(
        unstable=max_product > 1.0,
        max_product=max_product,
        raw_unstable=raw_max > 1.0,
        raw_max_product=raw_max,
    )
