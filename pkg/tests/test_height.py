import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isodimer.geometry import (
    Hexagon,
    Parallelogram,
    build_lozenge_with_diagonals,
    build_square_lattice,
    build_triangular_lattice,
)
from isodimer.gff import cross_ratio_prediction, exact_covariance_at
from isodimer.gibbs import brute_force_measure
from isodimer.height import (
    HeightError,
    HeightField,
    OverlappingPathsError,
    default_base,
    edge_increments,
    edge_orientation,
    exact_height_covariance,
    graph_path,
    height_from_indicator,
    height_from_matching,
    height_increment_representation,
    lattice_path,
    matching_from_height,
    path_coefficients,
    reference_flow,
    weighted_height_functional,
)
from isodimer.kernel import ExactInverseKernel
from isodimer.sampler import DimerConfiguration, RngStream, sample_lozenge_tiling, sample_matchings

LATTICES = {
    "tri": lambda: build_triangular_lattice(Hexagon(3, 3, 3)),
    "square": lambda: build_square_lattice((4, 6)),
    "L": lambda: build_lozenge_with_diagonals(sample_lozenge_tiling(Hexagon(2, 2, 2), RngStream(3))),
}


@pytest.fixture(scope="module", params=list(LATTICES))
def lattice_samples(request):
    g = LATTICES[request.param]()
    return g, sample_matchings(g, 100, seed=21)


def test_reference_flow_values(tri_hex, random_lozenge_diag):
    np.testing.assert_allclose(reference_flow(tri_hex).values[tri_hex.dual_edges], 1 / 3)
    vals = {round(float(v), 12) for v in reference_flow(random_lozenge_diag).values[random_lozenge_diag.dual_edges]}
    assert vals == {round(1 / 6, 12), round(1 / 3, 12), round(1 / 2, 12)}


@pytest.mark.parametrize("name", list(LATTICES))
def test_reference_flow_divergence(name):
    g = LATTICES[name]()
    rf = reference_flow(g)
    closed = rf.closed_faces()
    div = rf.divergence()
    want = np.where(g.colors == 0, 1.0, -1.0)
    np.testing.assert_allclose(div[closed], want[closed], atol=1e-12)


def test_round_trip(lattice_samples):
    g, S = lattice_samples
    for row in S:
        m = DimerConfiguration(g, tuple(row))
        h = height_from_matching(m)
        assert h.values[h.base] == 0.0
        assert matching_from_height(h) == m


def test_increments_take_two_values(lattice_samples):
    g, S = lattice_samples
    sig = edge_orientation(g)
    w0 = g.theta / math.pi
    inner = g.interior
    for row in S[:20]:
        h = height_from_matching(DimerConfiguration(g, tuple(row)))
        inc = sig * (h.values[g.edges[:, 1]] - h.values[g.edges[:, 0]])
        ok = np.isclose(inc, w0) | np.isclose(inc, w0 - 1)
        assert np.all(ok[inner])


def test_representation_identity(lattice_samples):
    g, S = lattice_samples
    rng = np.random.default_rng(5)
    mu = g.theta / math.pi
    used = np.flatnonzero([bool(es) for es in g.vertex_edges])
    for row in S:
        m = DimerConfiguration(g, tuple(row))
        h = height_from_matching(m)
        u, v = (int(x) for x in rng.choice(used, 2, replace=False))
        rep = height_increment_representation(g, graph_path(g, u, v))
        assert abs(rep.evaluate(m.indicator(), mu) - (h[v] - h[u])) <= 1e-12


def test_empty_and_reversed_paths(tri_hex):
    rep = height_increment_representation(tri_hex, [5])
    assert rep.e_edges == [] and rep.f_edges == [] and rep.constant == 0
    path = graph_path(tri_hex, 0, 20)
    fwd = height_increment_representation(tri_hex, path)
    bwd = height_increment_representation(tri_hex, path[::-1])
    assert fwd.negated().coefficients() == bwd.coefficients()
    assert bwd.constant == pytest.approx(-fwd.constant)


def test_heights_are_path_independent(tri_hex):
    S = sample_matchings(tri_hex, 5, seed=0)
    h = height_from_indicator(tri_hex, DimerConfiguration(tri_hex, tuple(S[0])).indicator())
    inc = edge_increments(tri_hex, DimerConfiguration(tri_hex, tuple(S[0])).indicator())
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = int(rng.integers(tri_hex.n_vertices))
        for first in ("i", "j"):
            p = lattice_path(tri_hex, h.base, v, first) if _reachable(tri_hex, h.base, v, first) else graph_path(tri_hex, h.base, v)
            total = 0.0
            for a, b in zip(p[:-1], p[1:]):
                e = tri_hex.edge_id(a, b)
                total += inc[e] if tri_hex.edges[e, 0] == a else -inc[e]
            assert total == pytest.approx(h[v], abs=1e-12)


def _reachable(g, u, v, first):
    try:
        lattice_path(g, u, v, first)
        return True
    except HeightError:
        return False


def test_hexagon_heights_differ_at_center():
    g = build_triangular_lattice(Hexagon(1, 1, 1))
    bt = brute_force_measure(g)
    hs = [height_from_matching(DimerConfiguration(g, m)) for m in bt.matchings]
    diff = hs[0].values - hs[1].values
    center = [v for v in range(g.n_vertices) if g.is_interior_vertex(v)]
    assert len(center) == 1
    assert abs(abs(diff[center[0]]) - 1.0) < 1e-12
    others = np.delete(diff, center)
    np.testing.assert_allclose(others, 0.0, atol=1e-12)
    for m, h in zip(bt.matchings, hs):
        assert matching_from_height(h).edges == m


def test_matched_edge_increment(tri_hex):
    m = DimerConfiguration(tri_hex, tuple(sample_matchings(tri_hex, 1, seed=1)[0]))
    h = height_from_matching(m)
    sig = edge_orientation(tri_hex)
    for e in m.edges[:10]:
        a, b = tri_hex.edges[e]
        assert sig[e] * (h[b] - h[a]) == pytest.approx(1 / 3 - 1)


def test_corrupt_height_names_face(tri_hex):
    m = DimerConfiguration(tri_hex, tuple(sample_matchings(tri_hex, 1, seed=1)[0]))
    h = height_from_matching(m)
    vals = h.values.copy()
    v = int(tri_hex.interior_vertices()[0])
    vals[v] += 0.25
    with pytest.raises(HeightError, match="face"):
        matching_from_height(HeightField(tri_hex, vals, h.base))


def test_default_base_is_lexicographic(tri_hex):
    b = default_base(tri_hex)
    p = np.round(tri_hex.vertices, 9)
    assert tuple(p[b]) == min(map(tuple, p))


def test_height_csv(tri_hex):
    m = DimerConfiguration(tri_hex, tuple(sample_matchings(tri_hex, 1, seed=1)[0]))
    lines = height_from_matching(m).to_csv().strip().split("\n")
    assert lines[0] == "vertex_id,x,y,h" and len(lines) == tri_hex.n_vertices + 1


# -- exact covariances -------------------------------------------------------


@pytest.fixture(scope="module")
def cov_lattice():
    N = 8
    g = build_triangular_lattice(Parallelogram(N + 8, N + 8, (-4, -4)), 1 / N)
    pts = [0, 1, 0.5 + 1j * math.sqrt(3) / 2, 1.5 + 1j * math.sqrt(3) / 2]
    ids = [g.nearest_vertex((z.real, z.imag)) for z in map(complex, pts)]
    return g, ids


def test_covariance_swap_symmetry(cov_lattice):
    g, (u1, v1, u2, v2) = cov_lattice
    a = exact_height_covariance(g, u1, v1, u2, v2)
    b = exact_height_covariance(g, u2, v2, u1, v1)
    assert a == pytest.approx(b, abs=1e-12)


def test_covariance_path_independence(cov_lattice):
    g, ids = cov_lattice
    a = exact_height_covariance(g, *ids, first="i")
    b = exact_height_covariance(g, *ids, first="j")
    assert abs(a - b) <= 1e-6


def test_covariance_close_to_prediction(cov_lattice):
    g, ids = cov_lattice
    pts = [complex(*g.vertices[i]) for i in ids]
    assert exact_height_covariance(g, *ids) == pytest.approx(cross_ratio_prediction(*pts), rel=0.05)


def test_overlapping_paths_rejected(cov_lattice):
    g, (u1, v1, u2, v2) = cov_lattice
    with pytest.raises(OverlappingPathsError):
        exact_height_covariance(g, u1, v1, u1, v2)


def test_close_paths_rejected(cov_lattice):
    g, (u1, v1, _, _) = cov_lattice
    up = g.nearest_vertex((g.vertices[u1, 0] + 1 / 16, g.vertices[u1, 1] + math.sqrt(3) / 16))
    up2 = g.nearest_vertex((g.vertices[v1, 0] + 1 / 16, g.vertices[v1, 1] + math.sqrt(3) / 16))
    with pytest.raises(OverlappingPathsError):
        exact_height_covariance(g, u1, v1, up, up2)


@pytest.mark.parametrize("N", [4, 8, 16])
def test_unit_cross_ratio_gives_zero(N):
    pts = (-1, 1, complex(0, math.sqrt(3)), complex(0, 2 * math.sqrt(3)))
    assert cross_ratio_prediction(*pts) == pytest.approx(0.0, abs=1e-15)
    assert abs(exact_covariance_at(1 / N, pts)) <= 1e-10


def test_mean_zero_representation(tri_hex):
    # each term 1_e - mu_e has mean zero under the whole-plane measure
    ek = ExactInverseKernel(tri_hex)
    rep = height_increment_representation(tri_hex, graph_path(tri_hex, 3, 40))
    edges = list(rep.coefficients())
    p = (ek.dirac.edge_values[edges] * ek.batch(tri_hex.edge_black[edges], tri_hex.edge_white[edges])).real
    np.testing.assert_allclose(p, tri_hex.theta[edges] / math.pi, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_weighted_functional_matches_heights(ws):
    g = build_triangular_lattice(Hexagon(3, 3, 3))
    verts = [int(v) for v in g.interior_vertices()[:4]]
    w = np.array(ws) - np.mean(ws)
    edges, a = weighted_height_functional(g, verts, w)
    S = sample_matchings(g, 3, seed=8)
    mu = g.theta / math.pi
    for row in S:
        m = DimerConfiguration(g, tuple(row))
        h = height_from_matching(m)
        x = m.indicator().astype(float)
        assert float(a @ (x[edges] - mu[edges])) == pytest.approx(float(w @ h.values[verts]), abs=1e-9)


def test_weighted_functional_requires_zero_sum(tri_hex):
    with pytest.raises(HeightError):
        weighted_height_functional(tri_hex, [0, 1], [1.0, 0.5])


def test_path_coefficients_linear(tri_hex):
    p1, p2 = graph_path(tri_hex, 0, 10), graph_path(tri_hex, 10, 25)
    e, c, k = path_coefficients(tri_hex, [p1, p2])
    e2, c2, k2 = path_coefficients(tri_hex, [graph_path(tri_hex, 0, 25)])
    mu = tri_hex.theta / math.pi
    x = DimerConfiguration(tri_hex, tuple(sample_matchings(tri_hex, 1, seed=4)[0])).indicator()
    assert float(c @ (x[e] - mu[e])) + k == pytest.approx(float(c2 @ (x[e2] - mu[e2])) + k2, abs=1e-12)
