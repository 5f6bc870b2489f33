"""EM estimation of block-model parameters from an observed adjacency.

The iteration ascends the standard variational EM objective

    J(resp, r, P) = sum_i resp_i . log r  +  E_resp[log edge likelihood]
                    + entropy(resp),

whose edge part is half the log of the truncated-binomial likelihood with
responsibilities standing in for the latent indicators (that edge part alone
is exposed as `log_likelihood`).  The responsibility update sweeps the nodes
sequentially; each node update is the exact coordinate maximizer of J, so the
recorded objective is nondecreasing by construction.  Updating all nodes
simultaneously (`e_step`, also used when e_update="parallel") is cheaper per
iteration but can oscillate and lose monotonicity on sparse assortative
graphs.
"""

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ValidationError

__all__ = [
    "EmState",
    "EmResult",
    "log_likelihood",
    "em_objective",
    "e_step",
    "e_sweep",
    "m_step",
    "em_run",
    "responsibilities_from_labels",
    "save_fit",
]

PROB_FLOOR = 1e-9


@dataclass
class EmState:
    r: np.ndarray
    P: np.ndarray
    resp: np.ndarray
    loglik: float
    clamped: bool = False
    degenerate: np.ndarray = None


class EmResult(NamedTuple):
    state: EmState
    labels: np.ndarray
    loglik_path: list
    converged: bool
    iters: int


def _clamped_logs(P):
    Pc = np.clip(P, PROB_FLOOR, 1.0 - PROB_FLOOR)
    flagged = bool(np.any(Pc != P))
    return np.log(Pc), np.log1p(-Pc), flagged


def responsibilities_from_labels(labels, k):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValidationError("labels out of range for k clusters")
    resp = np.zeros((labels.shape[0], k))
    resp[np.arange(labels.shape[0]), labels] = 1.0
    return resp


def _neighbor_sums(g, resp):
    A = g.adjacency_matrix()
    S = A @ resp                                    # S[i, b] = sum_j a_ij resp[j, b]
    T = resp.sum(axis=0)[None, :] - resp - S        # non-neighbors, j != i
    return S, T


def log_likelihood(g, assignment, r, P):
    """Half log edge-likelihood; assignment is hard labels or an n x k matrix.

    The value does not involve the mixing proportions r (kept in the signature
    for symmetry with the EM state).  Probabilities are clamped to
    [1e-9, 1 - 1e-9] inside the logs so boundary estimates stay finite.
    """
    P = np.asarray(P, dtype=np.float64)
    k = P.shape[0]
    resp = np.asarray(assignment, dtype=np.float64)
    if resp.ndim == 1:
        resp = responsibilities_from_labels(resp, k)
    logP, log1mP, _ = _clamped_logs(P)
    S, T = _neighbor_sums(g, resp)
    return 0.5 * float(np.sum(resp * (S @ logP + T @ log1mP)))


def em_objective(g, resp, r, P):
    """The ascent objective: prior term + edge log-likelihood + entropy."""
    logr = np.log(np.clip(r, PROB_FLOOR, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -float(np.sum(np.where(resp > 0, resp * np.log(resp), 0.0)))
    return float(np.sum(resp * logr[None, :])) + log_likelihood(g, resp, r, P) + ent


def e_step(g, state):
    """Simultaneous responsibility update of every node, in log space."""
    logP, log1mP, _ = _clamped_logs(state.P)
    S, T = _neighbor_sums(g, state.resp)
    logr = np.log(np.clip(state.r, PROB_FLOOR, 1.0))
    logq = logr[None, :] + S @ logP + T @ log1mP
    logq -= logq.max(axis=1, keepdims=True)
    q = np.exp(logq)
    return q / q.sum(axis=1, keepdims=True)


def e_sweep(g, state):
    """One sequential pass of the responsibility update, node by node.

    Neighbor sums are maintained incrementally, so each node sees the already
    updated rows of the nodes before it.
    """
    resp = state.resp.copy()
    logP, log1mP, _ = _clamped_logs(state.P)
    logr = np.log(np.clip(state.r, PROB_FLOOR, 1.0))
    S = g.adjacency_matrix() @ resp
    cs = resp.sum(axis=0)
    for i in range(g.n):
        Ti = cs - resp[i] - S[i]
        logq = logr + S[i] @ logP + Ti @ log1mP
        logq -= logq.max()
        q = np.exp(logq)
        q /= q.sum()
        delta = q - resp[i]
        if np.abs(delta).max() > 0:
            S[g.neighbors(i)] += delta[None, :]
            cs += delta
            resp[i] = q
    return resp


def m_step(g, resp, prev_P=None):
    """Weighted-count estimators: p_ab from fractional edge/pair counts.

    A soft-empty cluster leaves a zero denominator; its rows of P are carried
    over from prev_P (required in that case) and reported as degenerate.
    """
    resp = np.asarray(resp, dtype=np.float64)
    n, k = resp.shape
    A = g.adjacency_matrix()
    edge_w = resp.T @ (A @ resp)                    # sum_{i != j} resp_ai resp_bj a_ij
    cs = resp.sum(axis=0)
    pair_w = np.outer(cs, cs) - resp.T @ resp       # excludes i = j
    r = cs / n
    P = np.zeros((k, k))
    good = pair_w > 0
    P[good] = edge_w[good] / pair_w[good]
    P = 0.5 * (P + P.T)
    degenerate = ~good.any(axis=1)
    if np.any(degenerate):
        if prev_P is None:
            raise ValidationError(
                f"cluster(s) {np.nonzero(degenerate)[0].tolist()} have no soft mass "
                "and no previous estimate to fall back on"
            )
        P[degenerate, :] = prev_P[degenerate, :]
        P[:, degenerate] = prev_P[:, degenerate]
    return r, P, degenerate


def em_run(g, k, init, tol=1e-6, max_iter=500, hard=False, e_update="sweep"):
    """Alternate M and E steps until the objective gain drops below tol.

    init is ("random", seed), ("labels", labels) or an n x k responsibility
    matrix.  The recorded loglik path is the variational objective after each
    M step; with the default sequential e_update it is nondecreasing.  A final
    objective-decreasing step (possible with e_update="parallel" or hard=True)
    is rolled back.  Hard labels break argmax ties toward the lowest index.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if e_update not in ("sweep", "parallel"):
        raise ValidationError(f"unknown e_update {e_update!r}")
    if isinstance(init, np.ndarray):
        resp = np.asarray(init, dtype=np.float64)
        if resp.shape != (g.n, k):
            raise ValidationError(f"init responsibilities must be ({g.n}, {k})")
    else:
        kind = init[0]
        if kind == "random":
            rng = np.random.default_rng(init[1])
            labels = rng.integers(0, k, size=g.n)
            resp = responsibilities_from_labels(labels, k)
        elif kind == "labels":
            resp = responsibilities_from_labels(np.asarray(init[1]), k)
        else:
            raise ValidationError(f"unknown init {kind!r}")
    prev_state = None
    prev_P = None
    path = []
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        if hard:
            resp = responsibilities_from_labels(np.argmax(resp, axis=1), k)
        r, P, degenerate = m_step(g, resp, prev_P=prev_P)
        ll = em_objective(g, resp, r, P)
        _, _, clamped = _clamped_logs(P)
        state = EmState(r=r, P=P, resp=resp, loglik=ll, clamped=clamped, degenerate=degenerate)
        if prev_state is not None and ll - prev_state.loglik < tol:
            # keep the last strictly improving state; a tie or decrease on the
            # final step rolls back (the objective cannot rank the newer one)
            if ll > prev_state.loglik:
                path.append(ll)
                prev_state = state
            converged = True
            break
        path.append(ll)
        prev_state = state
        prev_P = P
        resp = e_sweep(g, state) if e_update == "sweep" else e_step(g, state)
    labels = np.argmax(prev_state.resp, axis=1)
    return EmResult(state=prev_state, labels=labels, loglik_path=path,
                    converged=converged, iters=iters)


def save_fit(result, path):
    state = result.state
    doc = {
        "k": int(state.P.shape[0]),
        "r": [float(x) for x in state.r],
        "P": [[float(x) for x in row] for row in state.P],
        "loglik": float(state.loglik),
        "iters": int(result.iters),
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
