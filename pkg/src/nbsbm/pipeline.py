"""End-to-end runs: percolation sweeps, transition detection, full pipeline.

A sweep samples one base graph per seed at full retention and then thins it
with coupled uniforms (edge kept iff its uniform is below beta), so the kept
edge sets are nested along the grid and jumps in the structural count come
from eigenvalue noise rather than resampling.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .cluster import ClusterAssignment, classify_nodes, node_embedding
from .em import EmResult, em_run
from .errors import ValidationError
from .graphs import Graph, largest_component_fraction
from .nbspec import (assembled_spectrum_values, companion_eigen, companion_matrix,
                     dense_spectrum, nonbacktracking_matrix, structural_eigenvalues)
from .sbm import PlantedGraph, SbmParams, beta_thresholds, edge_uniforms, sample_graph

__all__ = [
    "SweepRecord",
    "PipelineReport",
    "beta_sweep",
    "detect_transitions",
    "run_pipeline",
    "save_sweep_csv",
    "save_report_json",
]


@dataclass(frozen=True)
class SweepRecord:
    seed: int
    beta: float
    realized_m: int
    c_emp: float
    structural: np.ndarray
    k0: int
    bulk_radius: float
    fallback: bool       # m < n forced the direct half-edge eigensolve
    connected: bool


@dataclass
class PipelineReport:
    c_emp: float
    k0: int
    structural: np.ndarray
    predicted_thresholds: np.ndarray            # c_emp / mu_i^2, raw sample eigenvalues
    labels: Optional[ClusterAssignment]
    em: Optional[EmResult]
    fitted_params: Optional[object] = None      # SbmParams recovered by EM
    fitted_thresholds: Optional[np.ndarray] = None  # thresholds of the fitted model
    diagnosis: str = "ok"


def _spectrum_values(g, max_dim):
    """Full half-edge spectrum values; direct solve only when m < n."""
    if g.m >= g.n:
        return assembled_spectrum_values(g, max_dim=max_dim), False
    B = nonbacktracking_matrix(g)
    if B.shape[0] == 0:
        return np.array([], dtype=np.complex128), True
    return dense_spectrum(B.toarray(), max_dim=max_dim).values, True


def _sweep_one(params, n, seed, beta_grid, margin, unit_radius, max_dim):
    base = sample_graph(replace(params, beta=1.0), n, seed)
    u = edge_uniforms(base.graph.m, (seed, 0x9e3779b9))
    records = []
    for beta in beta_grid:
        kept = base.graph.edges[u < beta]
        g = Graph(n, kept)
        c_emp = 2.0 * g.m / n if n else 0.0
        values, fallback = _spectrum_values(g, max_dim)
        structural, mask = structural_eigenvalues(values, c_emp, margin=margin,
                                                  unit_radius=unit_radius,
                                                  return_mask=True)
        rest = values[~mask]
        bulk = float(np.abs(rest).max()) if rest.size else 0.0
        records.append(SweepRecord(
            seed=seed, beta=float(beta), realized_m=int(g.m), c_emp=float(c_emp),
            structural=structural, k0=int(structural.size), bulk_radius=bulk,
            fallback=fallback, connected=largest_component_fraction(g) == 1.0,
        ))
    return records


def beta_sweep(params, n, beta_grid=None, seeds=(0, 1, 2), margin=0.02,
               unit_radius=1e-3, max_dim=8192, workers=1):
    """One SweepRecord per (seed, beta), seeds outermost, grid order within.

    The structural cutoff uses sqrt(c_emp) of each thinned graph.  Graphs with
    fewer edges than nodes fall back to the direct half-edge solve and are
    flagged; otherwise the 2n x 2n companion assembly is used whether or not
    the thinned graph is connected (the spectrum identity does not need
    connectivity).
    """
    if beta_grid is None:
        beta_grid = np.round(np.arange(0.05, 1.0001, 0.05), 10)
    beta_grid = [float(b) for b in beta_grid]
    if any(b <= 0 or b > 1 for b in beta_grid):
        raise ValidationError("beta grid values must lie in (0, 1]")
    seeds = [int(s) for s in seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_one, params, n, s, beta_grid, margin,
                                   unit_radius, max_dim) for s in seeds]
            per_seed = [f.result() for f in futures]
    else:
        per_seed = [_sweep_one(params, n, s, beta_grid, margin, unit_radius, max_dim)
                    for s in seeds]
    return [rec for chunk in per_seed for rec in chunk]


def detect_transitions(records):
    """First grid beta at which the running-max structural count reaches each i.

    records must belong to one seed and be sorted by beta.  Returns
    (transitions, dips) where transitions is a list of (i, beta) pairs and
    dips lists (beta, raw_k0, cleaned_k0) wherever the raw count fell below
    the running maximum.
    """
    betas = [r.beta for r in records]
    if betas != sorted(betas):
        raise ValidationError("records must be sorted by beta")
    transitions = []
    dips = []
    running = 0
    target = 1
    for r in records:
        if r.k0 < running:
            dips.append((r.beta, r.k0, running))
        running = max(running, r.k0)
        while target <= running:
            transitions.append((target, r.beta))
            target += 1
    return transitions, dips


def run_pipeline(graph=None, params=None, n=None, seed=0, margin=0.02,
                 unit_radius=1e-3, max_dim=8192, kmeans_restarts=10,
                 em_tol=1e-6, em_max_iter=500, min_component_fraction=0.9):
    """Spectrum -> structural count -> embedding -> k-means -> EM -> report.

    Provide an observed graph, or params (+ n, seed) to sample one.  Predicted
    thresholds are c_emp / mu_i^2 from the observed structural eigenvalues.
    """
    planted = None
    if graph is None:
        if params is None or n is None:
            raise ValidationError("run_pipeline needs a graph or params with n")
        planted = sample_graph(params, n, seed)
        graph = planted.graph
    elif isinstance(graph, PlantedGraph):
        planted = graph
        graph = planted.graph
    if largest_component_fraction(graph) < min_component_fraction:
        raise ValidationError(
            f"largest component below {min_component_fraction:.0%} of nodes; "
            "the graph is too fragmented for the pipeline"
        )
    c_emp = 2.0 * graph.m / graph.n if graph.n else 0.0
    K = companion_matrix(graph)
    keig = companion_eigen(K)
    extra = graph.m - graph.n
    values = keig.values
    if extra > 0:
        pad = np.concatenate([np.ones(extra), -np.ones(extra)]).astype(np.complex128)
        values = np.concatenate([values, pad])
    structural = structural_eigenvalues(values, c_emp, margin=margin, unit_radius=unit_radius)
    k0 = int(structural.size)
    thresholds = c_emp / structural ** 2 if k0 else np.array([])
    if k0 == 0:
        return PipelineReport(c_emp=c_emp, k0=0, structural=structural,
                              predicted_thresholds=thresholds, labels=None, em=None,
                              diagnosis="below the first percolation threshold")
    emb = node_embedding(graph, keig, structural)
    assignment = classify_nodes(graph, emb, k0, restarts=kmeans_restarts, seed=seed)
    em_result = em_run(graph, k0, init=("labels", assignment.labels),
                       tol=em_tol, max_iter=em_max_iter)
    fitted = None
    fitted_thresholds = None
    try:
        # thresholds of the recovered model: the fitted affinities denoise the
        # raw sample eigenvalues, which sit low near the bulk edge
        state = em_result.state
        fitted = SbmParams(k=k0, r=state.r / state.r.sum(),
                           C=np.minimum(graph.n * state.P, float(graph.n)))
        fitted_thresholds = beta_thresholds(fitted).beta
    except ValidationError:
        pass
    return PipelineReport(c_emp=c_emp, k0=k0, structural=structural,
                          predicted_thresholds=thresholds, labels=assignment,
                          em=em_result, fitted_params=fitted,
                          fitted_thresholds=fitted_thresholds)


def save_sweep_csv(records, path):
    """seed,beta,m,c_emp,k0,mu1,mu2,mu3,bulk_radius with blanks for missing mu."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("seed,beta,m,c_emp,k0,mu1,mu2,mu3,bulk_radius\n")
        for r in records:
            mu = [f"{float(x)!r}" for x in r.structural[:3]]
            mu += [""] * (3 - len(mu))
            fh.write(f"{r.seed},{float(r.beta)!r},{r.realized_m},{float(r.c_emp)!r},"
                     f"{r.k0},{mu[0]},{mu[1]},{mu[2]},{float(r.bulk_radius)!r}\n")


def save_report_json(report, path):
    doc = {
        "c_emp": float(report.c_emp),
        "k0": int(report.k0),
        "structural": [float(x) for x in report.structural],
        "predicted_thresholds": [float(x) for x in report.predicted_thresholds],
        "diagnosis": report.diagnosis,
    }
    if report.fitted_thresholds is not None:
        doc["fitted_thresholds"] = [float(x) for x in report.fitted_thresholds]
    if report.labels is not None:
        doc["kmeans_objective"] = float(report.labels.objective)
        doc["cluster_sizes"] = np.bincount(report.labels.labels,
                                           minlength=report.k0).tolist()
    if report.em is not None:
        state = report.em.state
        doc["em"] = {
            "k": int(state.P.shape[0]),
            "r": [float(x) for x in state.r],
            "P": [[float(x) for x in row] for row in state.P],
            "loglik": float(state.loglik),
            "iters": int(report.em.iters),
        }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
