import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import central_white, macmahon
from isodimer.geometry import (
    Hexagon,
    IsoradialGraph,
    build_lozenge_with_diagonals,
    build_square_lattice,
    build_triangular_lattice,
)
from isodimer.gibbs import (
    BoltzmannTable,
    EnumerationBudgetError,
    ImaginaryResidueWarning,
    brute_force_measure,
    coupling_matrix,
    cylinder_statistic,
    edge_covariance,
    edge_probability,
    local_statistic,
    statistics_csv,
    truncated_correlation,
)
from isodimer.kernel import ExactInverseKernel, FiniteInverseKernel
from isodimer.sampler import RngStream, sample_lozenge_tiling


def _small_regions():
    out = {}
    for r in [Hexagon(1, 1, 1), Hexagon(2, 2, 2), Hexagon(1, 2, 3), Hexagon(3, 3, 3)]:
        out[f"tri{r.a}{r.b}{r.c}"] = build_triangular_lattice(r)
    for e in [(2, 2), (2, 4), (4, 4), (4, 6)]:
        out[f"square{e[0]}x{e[1]}"] = build_square_lattice(e)
    out["L111"] = build_lozenge_with_diagonals(sample_lozenge_tiling(Hexagon(1, 1, 1), RngStream(0)))
    out["L112"] = build_lozenge_with_diagonals(sample_lozenge_tiling(Hexagon(1, 1, 2), RngStream(0)))
    return out


REGIONS = _small_regions()


def _indicator(bt, n_edges):
    X = np.zeros((len(bt), n_edges))
    for i, m in enumerate(bt.matchings):
        X[i, list(m)] = 1
    return X


@pytest.mark.parametrize("name", list(REGIONS))
def test_determinants_match_enumeration(name):
    g = REGIONS[name]
    bt = brute_force_measure(g)
    assert 1 <= len(bt) <= 1000
    fk = FiniteInverseKernel(g)
    de = [int(e) for e in g.dual_edges]
    X = _indicator(bt, len(g.edges))[:, de]
    single = bt.probabilities @ X
    pair = X.T @ (bt.probabilities[:, None] * X)
    C = coupling_matrix(g, de, fk)
    np.testing.assert_allclose(np.diag(C).real, single, atol=1e-8)
    det2 = (np.diag(C)[:, None] * np.diag(C)[None, :] - C * C.T).real
    np.fill_diagonal(det2, single)
    np.testing.assert_allclose(det2, pair, atol=1e-8)
    # spot check through the public single-event API
    for e, f in itertools.islice(itertools.combinations(de, 2), 25):
        assert abs(local_statistic(g, [e, f], fk) - bt.cylinder([e, f])) <= 1e-8


@pytest.mark.parametrize("a,b,c", [(1, 1, 1), (2, 2, 2), (1, 2, 3), (3, 3, 3)])
def test_enumeration_count_macmahon(a, b, c):
    assert len(brute_force_measure(build_triangular_lattice(Hexagon(a, b, c)))) == macmahon(a, b, c)


def test_one_hexagon_partition_function():
    bt = brute_force_measure(build_triangular_lattice(Hexagon(1, 1, 1)))
    assert len(bt) == 2
    assert bt.partition_function == pytest.approx(2 * 3**1.5, rel=1e-12)
    np.testing.assert_allclose(bt.probabilities, [0.5, 0.5])


def test_two_by_two_square():
    bt = brute_force_measure(build_square_lattice((2, 2)))
    np.testing.assert_allclose(bt.weights, [2.0, 2.0])
    np.testing.assert_allclose(bt.probabilities, [0.5, 0.5])


def test_empty_region():
    g = IsoradialGraph(np.zeros((0, 2)), [], [], 1.0)
    bt = brute_force_measure(g)
    assert bt.partition_function == 1.0 and bt.matchings == [()]


def test_budget():
    with pytest.raises(EnumerationBudgetError):
        brute_force_measure(build_triangular_lattice(Hexagon(3, 3, 3)), budget=100)


def test_probabilities_sum_to_one():
    bt = brute_force_measure(REGIONS["square4x6"])
    assert bt.probabilities.sum() == pytest.approx(1.0, abs=1e-13)
    assert isinstance(bt, BoltzmannTable) and bt.index(bt.matchings[3]) == 3


# -- infinite volume ---------------------------------------------------------------


@pytest.mark.parametrize("which, value", [("tri", 1 / 3), ("square", 1 / 4)])
def test_edge_probability_lattices(which, value, tri_hex, square8):
    g = tri_hex if which == "tri" else square8
    e = int(g.face_edges[central_white(g)][0])
    assert edge_probability(g, e, "exact") == pytest.approx(value, abs=1e-8)


def test_degenerate_edge_probability(random_lozenge_diag):
    g = random_lozenge_diag
    e = next(int(e) for e in g.dual_edges if abs(g.theta[e] - math.pi / 2) < 1e-12)
    assert edge_probability(g, e, "exact") == pytest.approx(0.5, abs=1e-8)


def test_vertex_completeness(random_lozenge_diag):
    g = random_lozenge_diag
    ek = ExactInverseKernel(g)
    for f in range(g.n_faces):
        es = g.face_edges[f]
        if all(g.interior[e] for e in es):
            assert sum(edge_probability(g, int(e), ek) for e in es) == pytest.approx(1.0, abs=1e-8)


def test_single_probabilities_in_open_interval(tri_hex):
    ek = ExactInverseKernel(tri_hex)
    p = [edge_probability(tri_hex, int(e), ek) for e in tri_hex.dual_edges]
    assert 0 < min(p) and max(p) < 1


def test_shared_vertex_excluded(tri_hex):
    ek = ExactInverseKernel(tri_hex)
    w = central_white(tri_hex)
    e1, e2 = tri_hex.face_edges[w][:2]
    assert abs(local_statistic(tri_hex, [e1, e2], ek)) <= 1e-8


def test_distant_edges_decorrelate():
    g = build_triangular_lattice(Hexagon(14, 14, 14))
    ek = ExactInverseKernel(g)
    fz = g.face_z()
    w1 = central_white(g)
    e1 = int(g.face_edges[w1][0])
    target = fz[w1] + 20.0
    w2 = int(g.whites[np.argmin(np.abs(fz[g.whites] - target))])
    # parallel copy of e1 at distance 20
    d1 = g.circumcenters[g.edge_black[e1]] - g.circumcenters[w1]
    e2 = next(int(e) for e in g.face_edges[w2]
              if np.allclose(g.circumcenters[g.edge_black[e]] - g.circumcenters[w2], d1))
    assert abs(local_statistic(g, [e1, e2], ek) - 1 / 9) <= 1e-3


@settings(max_examples=25, deadline=None)
@given(st.permutations(list(range(4))))
def test_permutation_symmetry(perm):
    g = REGIONS["tri333"]
    ek = ExactInverseKernel(g)
    edges = [int(e) for e in g.dual_edges[[0, 17, 33, 50]]]
    base = local_statistic(g, edges, ek)
    assert local_statistic(g, [edges[i] for i in perm], ek) == pytest.approx(base, abs=1e-12)


def test_truncated_two_edges_identity(tri_hex):
    ek = ExactInverseKernel(tri_hex)
    rng = np.random.default_rng(2)
    for _ in range(20):
        e, f = (int(x) for x in rng.choice(tri_hex.dual_edges, 2, replace=False))
        expect = local_statistic(tri_hex, [e, f], ek) - edge_probability(tri_hex, e, ek) * edge_probability(tri_hex, f, ek)
        assert truncated_correlation(tri_hex, [e, f], kernel=ek) == pytest.approx(expect, abs=1e-10)


@pytest.mark.parametrize("k", [2, 3])
def test_truncated_matches_enumeration(k):
    g = REGIONS["tri222"]
    bt = brute_force_measure(g)
    fk = FiniteInverseKernel(g)
    rng = np.random.default_rng(k)
    for _ in range(15):
        edges = [int(e) for e in rng.choice(g.dual_edges, k, replace=False)]
        assert truncated_correlation(g, edges, kernel=fk) == pytest.approx(bt.truncated(edges), abs=1e-10)


def test_truncated_rejects_repeats(tri_hex):
    e = int(tri_hex.dual_edges[0])
    with pytest.raises(ValueError):
        truncated_correlation(tri_hex, [e, e])


def test_edge_covariance_matches_enumeration():
    g = REGIONS["square4x4"]
    bt = brute_force_measure(g)
    de = [int(e) for e in g.dual_edges]
    X = _indicator(bt, len(g.edges))[:, de]
    mean = bt.probabilities @ X
    cov = (X - mean).T @ (bt.probabilities[:, None] * (X - mean))
    np.testing.assert_allclose(edge_covariance(g, de, FiniteInverseKernel(g)), cov, atol=1e-10)


def test_backend_reported(tri_hex):
    e = int(tri_hex.dual_edges[5])
    assert cylinder_statistic(tri_hex, [e], "exact").backend == "exact"
    assert cylinder_statistic(REGIONS["tri222"], [e % 10], "finite").backend == "finite"


def test_imaginary_residue_warning(tri_hex, monkeypatch):
    import isodimer.gibbs as gibbs

    monkeypatch.setattr(gibbs, "IMAG_WARN", -1.0)
    with pytest.warns(ImaginaryResidueWarning):
        cylinder_statistic(tri_hex, [int(tri_hex.dual_edges[0])], "exact")


def test_statistics_csv(tri_hex):
    s = cylinder_statistic(tri_hex, [int(tri_hex.dual_edges[0])], "exact")
    lines = statistics_csv([s]).strip().split("\n")
    assert lines[0] == "event,probability,imag_residue,backend"
    assert lines[1].endswith(",exact")
