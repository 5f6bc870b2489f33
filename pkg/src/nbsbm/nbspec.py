"""Non-backtracking matrix, its 2n x 2n companion, and spectral extraction.

The half-edge matrix B is indexed by the directed-edge index of the graph:
entry (e, f) is 1 iff f feeds into e, i.e. head(f) = tail(e) and f is not the
reversal of e.  With this orientation the node projections of B x obey

    (B x)_out[i] = (d_i - 1) x_in[i]
    (B x)_in[i]  = sum_{j ~ i} x_in[j] - x_out[i]

which stacks into the companion matrix [[0, D - I], [-I, A]].  Apart from +1
and -1, each repeated m - n times, the spectrum of B is the spectrum of the
companion, so all full eigensolves here are of order 2n instead of 2m.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from .errors import NumericalError, ValidationError
from .graphs import component_labels

__all__ = [
    "Spectrum",
    "CompanionMatrix",
    "CompanionEigen",
    "nonbacktracking_matrix",
    "companion_matrix",
    "companion_eigen",
    "dense_spectrum",
    "nonbacktracking_spectrum",
    "structural_eigenvalues",
    "right_eigenpair",
    "real_invariant_columns",
    "reconstruct_edge_eigenvector",
    "sort_eigenvalues",
    "spectrum_match_distance",
    "save_spectrum_csv",
    "load_spectrum_csv",
]

DEFAULT_MAX_DIM = 4096


def sort_eigenvalues(values):
    """Canonical order: real part descending, then imaginary part descending."""
    v = np.asarray(values, dtype=np.complex128)
    return v[np.lexsort((-v.imag, -v.real))]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalue multiset in canonical order, plus how it was obtained."""

    values: np.ndarray
    method: str = "dense"
    fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", sort_eigenvalues(self.values))

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class CompanionMatrix:
    """Dense 2n x 2n matrix [[0, D - I], [-I, A]]."""

    matrix: np.ndarray
    n: int

    @property
    def degree_minus_identity(self):
        return self.matrix[: self.n, self.n:]


@dataclass(frozen=True)
class CompanionEigen:
    """Right eigendecomposition of a companion matrix."""

    companion: CompanionMatrix
    values: np.ndarray
    vectors: np.ndarray


def nonbacktracking_matrix(g):
    """Sparse 2m x 2m half-edge matrix, entry (e, f) = 1 iff f feeds into e."""
    dei = g.dei
    two_m = dei.count
    if two_m == 0:
        return sp.csr_matrix((0, 0))
    by_head = np.argsort(dei.head, kind="stable")
    starts = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(dei.head, minlength=g.n), out=starts[1:])
    rows, cols = [], []
    for e in range(two_m):
        v = dei.tail[e]
        group = by_head[starts[v]:starts[v + 1]]
        group = group[group != dei.inv[e]]
        if group.size:
            rows.append(np.full(group.size, e))
            cols.append(group)
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
    else:
        rows = cols = np.array([], dtype=np.int64)
    data = np.ones(rows.shape[0], dtype=np.float64)
    return sp.csr_matrix((data, (rows, cols)), shape=(two_m, two_m))


def companion_matrix(g):
    n = g.n
    K = np.zeros((2 * n, 2 * n))
    K[:n, n:] = np.diag(g.degrees - 1.0)
    K[n:, :n] = -np.eye(n)
    K[n:, n:] = g.dense_adjacency()
    return CompanionMatrix(matrix=K, n=n)


def dense_spectrum(M, max_dim=DEFAULT_MAX_DIM):
    """All complex eigenvalues of a square real matrix, canonically ordered."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {M.shape}")
    if M.shape[0] > max_dim:
        raise ValidationError(f"dimension {M.shape[0]} exceeds the cap {max_dim}")
    if M.size and not np.all(np.isfinite(M)):
        raise ValidationError("matrix has non-finite entries")
    if M.shape[0] == 0:
        return Spectrum(values=np.array([], dtype=np.complex128))
    try:
        values = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed: {exc}") from exc
    return Spectrum(values=values)


def assembled_spectrum_values(g, max_dim=DEFAULT_MAX_DIM):
    """spec(companion) plus m - n copies each of +1 and -1; needs m >= n.

    The underlying determinant identity det(I - uB) =
    (1 - u^2)^(m-n) det(I - u A + u^2 (D - I)) holds for any finite simple
    graph, connected or not, so this assembly is valid whenever m >= n.
    """
    if g.m < g.n:
        raise ValidationError("assembled spectrum needs m >= n")
    base = dense_spectrum(companion_matrix(g).matrix, max_dim=max_dim).values
    extra = g.m - g.n
    pad = np.concatenate([np.ones(extra), -np.ones(extra)]).astype(np.complex128)
    return np.concatenate([base, pad])


def nonbacktracking_spectrum(g, max_dim=DEFAULT_MAX_DIM):
    """Spectrum of B, via the companion assembly when it is cheap and exact.

    Connected graphs with m >= n take the 2n x 2n route.  Otherwise (trees,
    fragments) the sparse 2m x 2m matrix is solved directly and the result is
    flagged as a fallback.
    """
    connected = g.n <= 1 or bool(np.all(component_labels(g) == 0))
    if connected and g.m >= g.n:
        return Spectrum(values=assembled_spectrum_values(g, max_dim=max_dim), method="ihara")
    B = nonbacktracking_matrix(g)
    if B.shape[0] == 0:
        return Spectrum(values=np.array([], dtype=np.complex128), method="direct", fallback=True)
    values = dense_spectrum(B.toarray(), max_dim=max_dim).values
    return Spectrum(values=values, method="direct", fallback=True)


def structural_eigenvalues(spec, c, imag_tol=None, margin=0.02, unit_radius=1e-3,
                           return_mask=False):
    """Real eigenvalues escaping the bulk circle: Re > sqrt(c) * (1 + margin).

    Eigenvalues within unit_radius of +1 are dropped first; they come from the
    +-1 multiplicities of the assembly and from the (possibly defective)
    component eigenvalue 1 of the companion, and never indicate structure
    (an unstable mode needs an eigenvalue strictly above 1).
    The default imaginary cutoff is 1e-6 * max(1, |Re|).
    """
    if c < 0:
        raise ValidationError(f"average degree must be nonnegative, got {c}")
    values = spec.values if isinstance(spec, Spectrum) else np.asarray(spec, dtype=np.complex128)
    if values.size == 0:
        empty = np.array([])
        return (empty, np.array([], dtype=bool)) if return_mask else empty
    if imag_tol is None:
        tol = 1e-6 * np.maximum(1.0, np.abs(values.real))
    else:
        tol = np.full(values.shape, float(imag_tol))
    keep = (np.abs(values.imag) <= tol)
    keep &= np.abs(values - 1.0) > unit_radius
    keep &= values.real > np.sqrt(c) * (1.0 + margin)
    out = np.sort(values.real[keep])[::-1]
    return (out, keep) if return_mask else out


def companion_eigen(K):
    if isinstance(K, CompanionEigen):
        return K
    try:
        values, vectors = sla.eig(K.matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"companion eigendecomposition failed: {exc}") from exc
    return CompanionEigen(companion=K, values=values, vectors=vectors)


def _rotate_to_real(v):
    """Unit phase that maximizes the real-part norm, then the real part."""
    a, b = v.real, v.imag
    M = np.array([[a @ a, a @ b], [a @ b, b @ b]])
    w, Q = np.linalg.eigh(M)
    cs, sn = Q[:, np.argmax(w)]
    out = cs * a + sn * b
    nrm = np.linalg.norm(out)
    if nrm == 0:
        raise NumericalError("eigenvector has no real direction")
    return out / nrm


def right_eigenpair(K, target, match_tol=1e-6, gap=1e-6, residual_tol=1e-8):
    """Real right eigenpair of the companion nearest to a real target > 1.

    Returns (mu, x_out, x_in): the two halves of the unit-norm eigenvector.
    Raises if no eigenvalue lies within match_tol of the target, or if the
    matched eigenvalue sits in a near-degenerate cluster (use
    real_invariant_columns for those), or if the residual exceeds tolerance.
    """
    keig = companion_eigen(K)
    dist = np.abs(keig.values - target)
    idx = int(np.argmin(dist))
    if dist[idx] > match_tol:
        raise ValidationError(
            f"no companion eigenvalue within {match_tol} of {target} "
            f"(closest at distance {dist[idx]:.3e})"
        )
    cluster = np.nonzero(np.abs(keig.values - keig.values[idx]) < gap)[0]
    if cluster.size > 1:
        # A defective eigenvalue splits under rounding into a tight cluster
        # with essentially parallel eigenvectors; that is still one direction.
        vecs = keig.vectors[:, cluster]
        overlaps = np.abs(vecs.conj().T @ vecs)
        if overlaps.min() < 1.0 - 1e-8:
            raise NumericalError(
                f"eigenvalue {keig.values[idx]:.8g} is part of a cluster of size "
                f"{cluster.size} (gap < {gap}); extract the invariant subspace instead"
            )
    v = _rotate_to_real(keig.vectors[:, idx])
    mu = float(v @ keig.companion.matrix @ v)
    resid = np.linalg.norm(keig.companion.matrix @ v - mu * v)
    if resid > residual_tol:
        raise NumericalError(f"eigenpair residual {resid:.3e} exceeds {residual_tol}")
    n = keig.companion.n
    x_out, x_in = v[:n], v[n:]
    dmi = keig.companion.degree_minus_identity
    if np.linalg.norm(x_out - dmi @ x_in / mu) > 1e-8:
        raise NumericalError("eigenvector halves violate x_out = (D - I) x_in / mu")
    return mu, x_out, x_in


def real_invariant_columns(keig, mus, gap=1e-6, residual_tol=1e-6):
    """Real orthonormal basis columns for the listed real eigenvalues.

    Near-degenerate eigenvalues (within gap of each other) are handled as one
    cluster whose invariant subspace supplies that many columns; those columns
    are flagged.  Returns (Q, degenerate) with Q of shape (2n, len(mus)).
    """
    keig = companion_eigen(keig)
    K = keig.companion.matrix
    mus = np.asarray(mus, dtype=float)
    groups = []
    start = 0
    for i in range(1, len(mus) + 1):
        if i == len(mus) or abs(mus[i] - mus[i - 1]) >= gap:
            groups.append(mus[start:i])
            start = i
    columns = []
    degenerate = []
    used = np.zeros(len(keig.values), dtype=bool)
    for group in groups:
        idxs = []
        for mu in group:
            dist = np.abs(keig.values - mu)
            dist[used] = np.inf
            j = int(np.argmin(dist))
            if not np.isfinite(dist[j]) or dist[j] > max(gap, 1e-6):
                raise ValidationError(f"no companion eigenvalue matches {mu}")
            used[j] = True
            idxs.append(j)
        q = len(idxs)
        if q == 1:
            cols = _rotate_to_real(keig.vectors[:, idxs[0]])[:, None]
        else:
            raw = keig.vectors[:, idxs]
            stacked = np.concatenate([raw.real, raw.imag], axis=1)
            U, s, _ = np.linalg.svd(stacked, full_matrices=False)
            cols = U[:, :q]
        small = cols.T @ K @ cols
        resid = np.linalg.norm(K @ cols - cols @ small)
        if resid > residual_tol * max(1.0, np.linalg.norm(small)):
            raise NumericalError(
                f"invariant subspace residual {resid:.3e} too large for eigenvalues {group}"
            )
        columns.append(cols)
        degenerate.extend([q > 1] * q)
    Q = np.concatenate(columns, axis=1) if columns else np.zeros((K.shape[0], 0))
    return Q, np.asarray(degenerate, dtype=bool)


def reconstruct_edge_eigenvector(g, mu, x_in):
    """Lift the node-space half back to the 2m half-edge eigenvector of B.

    For an eigenvalue mu not equal to +-1, the edge coordinates are
    x_e = (mu * x_in[tail(e)] - x_in[head(e)]) / (mu^2 - 1).
    """
    if abs(mu * mu - 1.0) < 1e-9:
        raise ValidationError("edge reconstruction is singular at mu = +-1")
    dei = g.dei
    x_in = np.asarray(x_in, dtype=np.float64)
    return (mu * x_in[dei.tail] - x_in[dei.head]) / (mu * mu - 1.0)


def spectrum_match_distance(a, b):
    """Largest matched-pair distance under the optimal eigenvalue pairing."""
    av = a.values if isinstance(a, Spectrum) else sort_eigenvalues(a)
    bv = b.values if isinstance(b, Spectrum) else sort_eigenvalues(b)
    if av.shape != bv.shape:
        raise ValidationError(f"spectra have different sizes: {av.shape} vs {bv.shape}")
    if av.size == 0:
        return 0.0
    cost = np.abs(av[:, None] - bv[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def save_spectrum_csv(spec, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("re,im\n")
        for z in spec.values:
            fh.write(f"{float(z.real)!r},{float(z.imag)!r}\n")


def load_spectrum_csv(path):
    values = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "re,im":
            raise ValidationError(f"{path}: unexpected header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            re_s, im_s = line.strip().split(",")
            values.append(complex(float(re_s), float(im_s)))
    return Spectrum(values=np.asarray(values, dtype=np.complex128))
