from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import central_white
from isodimer.geometry import (
    GeometryError,
    Hexagon,
    build_lozenge_with_diagonals,
    build_square_lattice,
    build_triangular_lattice,
)
from isodimer.gibbs import brute_force_measure, coupling_matrix, edge_probability
from isodimer.kernel import ExactInverseKernel, FiniteInverseKernel
from isodimer.montecarlo import batch_means
from isodimer.sampler import (
    DimerConfiguration,
    MatchingSampler,
    RngStream,
    SamplingError,
    _lu_coin_flip,
    iter_chunks,
    sample_edge_process,
    sample_lozenge_tiling,
    sample_matching,
    sample_matchings,
    schur_sample,
    white_order,
)

SMALL = {
    "hex111": lambda: build_triangular_lattice(Hexagon(1, 1, 1)),
    "hex123": lambda: build_triangular_lattice(Hexagon(1, 2, 3)),
    "square2x2": lambda: build_square_lattice((2, 2)),
    "square2x4": lambda: build_square_lattice((2, 4)),
    "L111": lambda: build_lozenge_with_diagonals(sample_lozenge_tiling(Hexagon(1, 1, 1), RngStream(0))),
}


@pytest.mark.parametrize("name", ["hex111", "square2x2"])
def test_two_matching_regions_are_fair(name):
    g = SMALL[name]()
    N = 10_000
    S = sample_matchings(g, N, seed=4)
    first = tuple(brute_force_measure(g).matchings[0])
    freq = np.mean([tuple(r) == first for r in S])
    assert abs(freq - 0.5) <= 3 * np.sqrt(0.25 / N)


@pytest.mark.parametrize("name", list(SMALL))
def test_total_variation_on_enumerable_regions(name):
    g = SMALL[name]()
    bt = brute_force_measure(g)
    assert len(bt) <= 10
    N = 100_000
    c = Counter(tuple(int(e) for e in r) for r in sample_matchings(g, N, seed=9))
    assert set(c) <= set(bt.matchings)
    emp = np.array([c[m] / N for m in bt.matchings])
    assert 0.5 * np.abs(emp - bt.probabilities).sum() <= 5 * np.sqrt(len(bt) / N)


def test_replay_is_identical():
    g = build_triangular_lattice(Hexagon(2, 3, 2))
    a = sample_matchings(g, 300, seed=17)
    b = sample_matchings(g, 300, seed=17)
    c = sample_matchings(g, 300, seed=18)
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_prefix_does_not_depend_on_count():
    g = build_triangular_lattice(Hexagon(2, 2, 2))
    assert np.array_equal(sample_matchings(g, 10, seed=3), sample_matchings(g, 600, seed=3)[:10])


def test_streams_differ():
    g = build_triangular_lattice(Hexagon(2, 2, 2))
    s = MatchingSampler(g)
    assert not np.array_equal(s.sample_many(50, 1, stream=0), s.sample_many(50, 1, stream=1))


@pytest.mark.parametrize("name", ["hex123", "L111"])
def test_samples_are_perfect_matchings(name):
    g = SMALL[name]()
    for row in sample_matchings(g, 200, seed=1):
        DimerConfiguration(g, tuple(row))  # validates on construction


def test_conditional_probabilities_sum_to_one():
    g = build_triangular_lattice(Hexagon(3, 3, 3))
    s = MatchingSampler(g)
    s.sample_many(64, seed=0)
    assert s.max_step_error <= 1e-9


def test_negative_probability_is_an_error():
    g = build_triangular_lattice(Hexagon(1, 1, 1))
    s = MatchingSampler(g)
    A = -s.finite.matrix[None].copy()
    with pytest.raises(SamplingError):
        schur_sample(s.Kd[None], A, s.rows[None], np.full((1, s.n), 0.5))


def test_white_order_is_row_major(tri_hex):
    c = tri_hex.circumcenters[white_order(tri_hex)]
    key = list(zip(np.round(c[:, 1], 9), np.round(c[:, 0], 9)))
    assert key == sorted(key)


def test_configuration_validation():
    g = SMALL["hex111"]()
    m = sample_matching(g, RngStream(0))
    with pytest.raises(GeometryError):
        DimerConfiguration(g, m.edges[:-1])
    line = m.to_json_line()
    assert DimerConfiguration.from_json_line(g, line) == m
    assert m.indicator().sum() == len(g.whites)


def test_rng_stream_replay():
    a, b = RngStream(5, 2), RngStream(5, 2)
    assert np.array_equal(a.random(10), b.random(10))
    assert not np.array_equal(RngStream(5, 2).random(10), RngStream(5, 3).random(10))
    assert not np.array_equal(RngStream(5, 2).child(0).random(10), RngStream(5, 2).child(1).random(10))


def test_hexagon_side_one_tilings_uniform():
    N = 10_000
    T = build_triangular_lattice(Hexagon(1, 1, 1))
    rng = RngStream(7)
    first = None
    hits = 0
    for k in range(N):
        t = sample_lozenge_tiling(T, rng.child(k))
        first = first or t
        hits += t == first
    assert abs(hits / N - 0.5) <= 3 * np.sqrt(0.25 / N)


def test_lozenge_tiling_replay():
    a = sample_lozenge_tiling(Hexagon(3, 3, 3), RngStream(1))
    b = sample_lozenge_tiling(Hexagon(3, 3, 3), RngStream(1))
    assert a == b


def test_center_edge_frequency_matches_region_measure():
    g = build_triangular_lattice(Hexagon(6, 6, 6))
    e = int(g.face_edges[central_white(g)][0])
    S = sample_matchings(g, 4000, seed=2)
    est = batch_means((S == e).any(axis=1).astype(float))
    assert est.within(edge_probability(g, e, FiniteInverseKernel(g)))


@pytest.mark.parametrize("small, large", [(6, 12), (12, 20)])
def test_center_edge_probability_tends_to_one_third(small, large):
    # the finite region's law at the center edge approaches theta / pi = 1/3
    def err(R):
        g = build_triangular_lattice(Hexagon(R, R, R))
        w = central_white(g)
        fk = FiniteInverseKernel(g)
        return max(abs(edge_probability(g, int(f), fk) - 1 / 3) for f in g.face_edges[w])

    assert err(large) < err(small)


# -- determinantal edge process -------------------------------------------------


@pytest.fixture(scope="module")
def edge_process():
    G = build_triangular_lattice(Hexagon(6, 6, 6))
    ek = ExactInverseKernel(G)
    fz = G.face_z()
    ws = G.whites[np.argsort(np.abs(fz[G.whites] - fz.mean()))[:3]]
    edges = sorted({int(e) for w in ws for e in G.face_edges[w]})
    return coupling_matrix(G, edges, ek), (G, edges)


def test_edge_process_marginals(edge_process):
    C, _ = edge_process
    N = 100_000
    X = sample_edge_process(C, N, seed=3)
    p = np.diag(C).real
    se = np.sqrt(p * (1 - p) / N)
    assert np.all(np.abs(X.mean(0) - p) <= 4 * se)
    for i, j in [(0, 1), (0, 5), (2, 7)]:
        q = np.linalg.det(C[np.ix_([i, j], [i, j])]).real
        emp = (X[:, i] & X[:, j]).mean()
        assert abs(emp - q) <= 4 * np.sqrt(max(q * (1 - q), 1e-12) / N) + 1e-12


def test_edge_process_respects_exclusion(edge_process):
    C, (G, edges) = edge_process
    X = sample_edge_process(C, 5000, seed=1)
    for f in range(G.n_faces):
        cols = [i for i, e in enumerate(edges) if f in (G.edge_white[e], G.edge_black[e])]
        if len(cols) > 1:
            assert X[:, cols].sum(axis=1).max() <= 1


def test_blocked_lu_equals_unblocked():
    G = build_triangular_lattice(Hexagon(8, 8, 8))
    ek = ExactInverseKernel(G)
    C = coupling_matrix(G, G.dual_edges[:100], ek)
    u = np.random.default_rng(0).random((4, 100))
    a = _lu_coin_flip(np.broadcast_to(C, (4, 100, 100)).copy(), u, block=32)
    b = _lu_coin_flip(np.broadcast_to(C, (4, 100, 100)).copy(), u, block=1)
    assert np.array_equal(a, b)


def test_edge_process_matches_finite_sampler():
    # with the finite kernel the edge process is the exact marginal of the region's measure
    g = build_triangular_lattice(Hexagon(2, 2, 2))
    fk = FiniteInverseKernel(g)
    de = [int(e) for e in g.dual_edges]
    X = sample_edge_process(coupling_matrix(g, de, fk), 20_000, seed=5)
    bt = brute_force_measure(g)
    c = Counter(tuple(np.array(de)[row]) for row in X)
    emp = np.array([c[m] / 20_000 for m in bt.matchings])
    assert sum(c.values()) == 20_000 and set(c) <= set(bt.matchings)
    assert 0.5 * np.abs(emp - bt.probabilities).sum() <= 5 * np.sqrt(len(bt) / 20_000)


def test_edge_process_invalid_kernel():
    with pytest.raises(SamplingError):
        sample_edge_process(np.array([[1.5]]), 10, seed=0)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 2000), st.integers(1, 300))
def test_iter_chunks_cover(n, chunk):
    parts = list(iter_chunks(n, chunk))
    assert sum(m for _, _, m in parts) == n
    assert [k for k, _, _ in parts] == list(range(len(parts)))
