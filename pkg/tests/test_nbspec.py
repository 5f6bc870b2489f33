import numpy as np
import pytest

from nbsbm.errors import NumericalError, ValidationError
from nbsbm.graphs import build_graph, in_out_project
from nbsbm.nbspec import (CompanionMatrix, Spectrum, assembled_spectrum_values,
                          companion_eigen, companion_matrix, dense_spectrum,
                          load_spectrum_csv, nonbacktracking_matrix,
                          nonbacktracking_spectrum, real_invariant_columns,
                          reconstruct_edge_eigenvector, right_eigenpair,
                          save_spectrum_csv, sort_eigenvalues, spectrum_match_distance,
                          structural_eigenvalues)


def triangle():
    return build_graph(3, [(0, 1), (1, 2), (0, 2)])


def complete(n):
    return build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_connected(n, p, seed, min_degree=0):
    # min_degree=2 keeps the half-edge matrix free of defective zeros
    # (pendant chains), which LAPACK can only locate to ~1e-5
    rng = np.random.default_rng(seed)
    while True:
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
        g = build_graph(n, edges)
        from nbsbm.graphs import largest_component_fraction
        if (g.m >= g.n and largest_component_fraction(g) == 1.0
                and g.degrees.min() >= min_degree):
            return g


def test_halfedge_matrix_triangle_is_two_three_cycles():
    B = nonbacktracking_matrix(triangle()).toarray()
    assert np.array_equal(B.sum(axis=0), np.ones(6))
    assert np.array_equal(B.sum(axis=1), np.ones(6))
    assert np.array_equal(np.linalg.matrix_power(B, 3), np.eye(6))
    assert not np.array_equal(B, np.eye(6))


def test_halfedge_matrix_path_nilpotent():
    B = nonbacktracking_matrix(build_graph(3, [(0, 1), (1, 2)])).toarray()
    assert np.array_equal(np.linalg.matrix_power(B, 4), np.zeros((4, 4)))


def test_halfedge_matrix_single_edge_zero():
    B = nonbacktracking_matrix(build_graph(2, [(0, 1)])).toarray()
    assert np.array_equal(B, np.zeros((2, 2)))


def test_halfedge_row_sums_are_tail_degree_minus_one():
    g = random_connected(12, 0.3, 0)
    B = nonbacktracking_matrix(g)
    rows = np.asarray(B.sum(axis=1)).ravel()
    assert np.array_equal(rows, g.degrees[g.dei.tail] - 1)


def test_block_symmetries():
    # B11^T = B22, B12 and B21 symmetric, B^T V = V B, block sum = line graph
    from nbsbm.graphs import line_graph_adjacency
    for seed in range(3):
        g = random_connected(10, 0.35, seed)
        m = g.m
        B = nonbacktracking_matrix(g).toarray().astype(np.int64)
        assert np.array_equal(B[:m, :m].T, B[m:, m:])
        assert np.array_equal(B[:m, m:].T, B[:m, m:])
        assert np.array_equal(B[m:, :m].T, B[m:, :m])
        V = np.zeros((2 * m, 2 * m), dtype=np.int64)
        V[:m, m:] = np.eye(m, dtype=np.int64)
        V[m:, :m] = np.eye(m, dtype=np.int64)
        assert np.array_equal(B.T @ V, V @ B)
        total = B[:m, :m] + B[:m, m:] + B[m:, :m] + B[m:, m:]
        assert np.array_equal(total, line_graph_adjacency(g))


def test_projection_identities():
    rng = np.random.default_rng(4)
    for seed in range(3):
        g = random_connected(11, 0.35, seed + 10)
        B = nonbacktracking_matrix(g)
        A = g.dense_adjacency()
        for _ in range(5):
            x = rng.standard_normal(2 * g.m)
            x_out, x_in = in_out_project(g, x)
            bx_out, bx_in = in_out_project(g, B @ x)
            assert np.abs(bx_out - (g.degrees - 1) * x_in).max() < 1e-10
            assert np.abs(bx_in - (A @ x_in - x_out)).max() < 1e-10


def test_companion_matrix_blocks():
    K = companion_matrix(complete(4))
    assert np.array_equal(K.matrix[:4, 4:], 2 * np.eye(4))
    assert np.array_equal(K.matrix[4:, :4], -np.eye(4))
    assert np.array_equal(K.matrix[:4, :4], np.zeros((4, 4)))
    Kp = companion_matrix(build_graph(3, [(0, 1), (1, 2)]))
    assert np.array_equal(np.diag(Kp.matrix[:3, 3:]), [0, 1, 0])


def test_dense_spectrum_basics():
    s = dense_spectrum(np.eye(3))
    assert np.allclose(s.values, [1, 1, 1])
    rot = dense_spectrum(np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert np.allclose(rot.values, [1j, -1j])  # +i ordered first
    with pytest.raises(ValidationError):
        dense_spectrum(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        dense_spectrum(np.full((2, 2), np.nan))
    with pytest.raises(ValidationError):
        dense_spectrum(np.eye(10), max_dim=5)


def test_companion_spectrum_of_k4_closed_form():
    # d-regular: mu = (lam_A +- sqrt(lam_A^2 - 4(d-1))) / 2 per adjacency eigenvalue
    expected = [2.0, 1.0]
    for _ in range(3):
        expected.append((-1 + 1j * np.sqrt(7)) / 2)
        expected.append((-1 - 1j * np.sqrt(7)) / 2)
    s = dense_spectrum(companion_matrix(complete(4)).matrix)
    assert spectrum_match_distance(s.values, np.array(expected)) < 1e-8


def test_ihara_triangle():
    s = nonbacktracking_spectrum(triangle())
    assert s.method == "ihara" and not s.fallback
    w = np.exp(2j * np.pi / 3)
    expected = np.array([1, 1, w, w, w.conjugate(), w.conjugate()])
    # the double eigenvalue 1 is defective, so it is only sqrt(eps)-accurate
    assert spectrum_match_distance(s.values, expected) < 1e-6


def test_ihara_k4_padding_and_growth_rate():
    s = nonbacktracking_spectrum(complete(4))
    assert len(s) == 12
    ones = np.sum(np.abs(s.values - 1.0) < 1e-8)
    neg_ones = np.sum(np.abs(s.values + 1.0) < 1e-8)
    assert ones >= 3 and neg_ones >= 2  # m - n = 2 plus one from the companion
    assert s.values.real.max() == pytest.approx(2.0, abs=1e-8)  # d - 1


def test_companion_always_has_eigenvalue_one():
    for seed in range(4):
        g = random_connected(9, 0.4, seed + 20)
        vals = dense_spectrum(companion_matrix(g).matrix).values
        assert np.abs(vals - 1.0).min() < 1e-7


def test_ihara_matches_direct_spectrum():
    for seed in range(5):
        g = random_connected(10, 0.35, seed + 30, min_degree=2)
        assembled = nonbacktracking_spectrum(g)
        direct = dense_spectrum(nonbacktracking_matrix(g).toarray())
        assert spectrum_match_distance(assembled, direct) < 1e-8


def test_ihara_with_pendant_nodes():
    # degree-1 nodes make the zero eigenvalue defective; both routes agree
    # only to the defect scale then
    g = random_connected(10, 0.35, 31)
    assert g.degrees.min() == 1
    assembled = nonbacktracking_spectrum(g)
    direct = dense_spectrum(nonbacktracking_matrix(g).toarray())
    assert spectrum_match_distance(assembled, direct) < 1e-4


def test_ihara_assembly_valid_when_disconnected():
    # two K4 components: m = 12 >= n = 8
    edges = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    edges += [(i + 4, j + 4) for i in range(4) for j in range(i + 1, 4)]
    g = build_graph(8, edges)
    vals = assembled_spectrum_values(g)
    direct = dense_spectrum(nonbacktracking_matrix(g).toarray())
    assert spectrum_match_distance(vals, direct.values) < 1e-8
    # but the public op falls back on disconnected inputs
    s = nonbacktracking_spectrum(g)
    assert s.method == "direct" and s.fallback


def test_tree_fallback_and_nilpotency():
    rng = np.random.default_rng(0)
    for n in (5, 9, 14):
        # random tree via random attachment
        edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
        g = build_graph(n, edges)
        s = nonbacktracking_spectrum(g)
        assert s.fallback and s.method == "direct"
        assert np.abs(s.values).max() < 1e-10


def test_pendant_tree_spectrum_matches_core():
    # K4 with a pendant path keeps the K4 eigenvalues; extra mass is 0 or +-1
    g = complete(4)
    edges = [tuple(e) for e in g.edges] + [(3, 4), (4, 5)]
    g2 = build_graph(6, edges)
    direct = dense_spectrum(nonbacktracking_matrix(g2).toarray())
    assembled = nonbacktracking_spectrum(g2)
    # pendant chain again: zeros are defective, matching is defect-limited
    assert spectrum_match_distance(assembled, direct) < 1e-6
    assert direct.values.real.max() == pytest.approx(2.0, abs=1e-8)


def test_spectrum_conjugate_closure():
    g = random_connected(12, 0.3, 77)
    vals = nonbacktracking_spectrum(g).values
    complexes = vals[np.abs(vals.imag) > 1e-8]
    for z in complexes:
        assert np.abs(complexes - z.conjugate()).min() < 1e-8


def test_structural_eigenvalues_synthetic():
    rng = np.random.default_rng(1)
    bulk = 4.0 * rng.random(40) * np.exp(2j * np.pi * rng.random(40))
    values = np.concatenate([[16.4, 7.5, 5.5], bulk])
    out = structural_eigenvalues(values, c=16.41)
    assert np.allclose(out, [16.4, 7.5, 5.5])
    assert structural_eigenvalues(np.array([]), c=5.0).size == 0


def test_structural_eigenvalues_excludes_unit_artifacts():
    values = np.array([3.0, 1.0, 1.0000004, 0.9])
    out = structural_eigenvalues(values, c=0.64)
    assert np.allclose(out, [3.0, 0.9])


def test_structural_eigenvalues_margin_and_imag_tol():
    values = np.array([4.1 + 0j, 4.1 + 1e-3j])
    assert structural_eigenvalues(values, c=16.0, margin=0.0).size == 1
    assert structural_eigenvalues(values, c=16.0, margin=0.03).size == 0
    assert structural_eigenvalues(values, c=16.0, margin=0.0, imag_tol=1e-2).size == 2


def test_structural_eigenvalues_erdos_renyi():
    from nbsbm.sbm import SbmParams, sample_graph
    p = SbmParams(k=1, r=np.array([1.0]), C=np.array([[16.0]]))
    pg = sample_graph(p, 600, seed=0)
    c_emp = 2 * pg.graph.m / 600
    mus = structural_eigenvalues(assembled_spectrum_values(pg.graph), c_emp)
    assert mus.size == 1
    assert abs(mus[0] - c_emp) < 1.5


def test_right_eigenpair_k4():
    mu, x_out, x_in = right_eigenpair(companion_matrix(complete(4)), 2.0)
    assert mu == pytest.approx(2.0, abs=1e-10)
    assert np.allclose(x_in / x_in[0], np.ones(4), atol=1e-9)
    assert np.allclose(x_out, x_in, atol=1e-9)  # (D - I) x_in / mu = 2/2 x_in


def test_right_eigenpair_residual_contract():
    g = random_connected(14, 0.3, 5)
    K = companion_matrix(g)
    vals = dense_spectrum(K.matrix).values
    target = float(vals.real.max())
    mu, x_out, x_in = right_eigenpair(K, target)
    v = np.concatenate([x_out, x_in])
    assert np.linalg.norm(K.matrix @ v - mu * v) < 1e-8
    assert np.linalg.norm(x_out - (g.degrees - 1) * x_in / mu) < 1e-8


def test_right_eigenpair_triangle_defective_one():
    # the algebraically double eigenvalue 1 has a single direction; the pair
    # is still returned, with x_out = x_in for the 2-regular triangle
    mu, x_out, x_in = right_eigenpair(companion_matrix(triangle()), 1.0,
                                      match_tol=1e-6, residual_tol=1e-6)
    assert mu == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(x_out, x_in, atol=1e-6)


def test_right_eigenpair_no_match():
    with pytest.raises(ValidationError, match="no companion eigenvalue"):
        right_eigenpair(companion_matrix(complete(4)), 7.7)


def test_right_eigenpair_degenerate_cluster_rejected():
    # disjoint pair of K4s: eigenvalue 2 twice with independent eigenvectors
    edges = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    edges += [(i + 4, j + 4) for i in range(4) for j in range(i + 1, 4)]
    g = build_graph(8, edges)
    with pytest.raises(NumericalError, match="cluster"):
        right_eigenpair(companion_matrix(g), 2.0)


def test_real_invariant_columns_degenerate_pair():
    edges = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    edges += [(i + 4, j + 4) for i in range(4) for j in range(i + 1, 4)]
    g = build_graph(8, edges)
    keig = companion_eigen(companion_matrix(g))
    Q, degenerate = real_invariant_columns(keig, [2.0, 2.0])
    assert Q.shape == (16, 2)
    assert np.all(degenerate)
    assert np.allclose(Q.T @ Q, np.eye(2), atol=1e-10)


def test_reconstruct_edge_eigenvector():
    g = random_connected(12, 0.35, 8)
    K = companion_matrix(g)
    vals = dense_spectrum(K.matrix).values
    target = float(vals.real.max())
    mu, x_out, x_in = right_eigenpair(K, target)
    xe = reconstruct_edge_eigenvector(g, mu, x_in)
    B = nonbacktracking_matrix(g)
    assert np.linalg.norm(B @ xe - mu * xe) / np.linalg.norm(xe) < 1e-8
    # block swap gives a left eigenvector with the same eigenvalue
    m = g.m
    swapped = np.concatenate([xe[m:], xe[:m]])
    assert np.linalg.norm(B.T @ swapped - mu * swapped) / np.linalg.norm(swapped) < 1e-8
    with pytest.raises(ValidationError):
        reconstruct_edge_eigenvector(g, 1.0, x_in)


def test_top_halfedge_eigenvalue_below_adjacency():
    from nbsbm.graphs import adjacency_top_eigenvalue
    for seed in range(4):
        g = random_connected(12, 0.3, seed + 50)
        lam_b = nonbacktracking_spectrum(g).values.real.max()
        assert lam_b <= adjacency_top_eigenvalue(g) + 1e-9


def test_sort_and_match_helpers():
    vals = np.array([1 + 1j, 1 - 1j, 2.0, 0.5])
    s = sort_eigenvalues(vals)
    assert s[0] == 2.0 and s[1] == 1 + 1j and s[2] == 1 - 1j
    assert spectrum_match_distance(vals, vals[::-1]) == 0.0
    with pytest.raises(ValidationError):
        spectrum_match_distance(vals, vals[:2])


def test_spectrum_csv_roundtrip(tmp_path):
    g = random_connected(9, 0.4, 2)
    s = nonbacktracking_spectrum(g)
    path = tmp_path / "spec.csv"
    save_spectrum_csv(s, path)
    back = load_spectrum_csv(path)
    assert np.array_equal(back.values, s.values)
    path2 = tmp_path / "spec2.csv"
    save_spectrum_csv(back, path2)
    assert path.read_bytes() == path2.read_bytes()
