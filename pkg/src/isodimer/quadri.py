"""Triangular quadri-tilings and their two height functions.

A quadri-tiling is drawn in two stages: a uniform lozenge tiling of a
triangular-lattice region, then a dimer configuration of the dual of the
lozenge-with-diagonals graph built from it.  Each dimer glues two right
triangles into a quadri-tile.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import (
    BLACK,
    GeometryError,
    IsoradialGraph,
    LozengeTiling,
    build_lozenge_with_diagonals,
    build_triangular_lattice,
)
from .height import (
    HeightField,
    graph_path,
    height_from_indicator,
    height_from_matching,
    height_increment_representation,
)
from .kernel import FiniteInverseKernel
from .montecarlo import batch_correlation
from .sampler import (
    DimerConfiguration,
    MatchingSampler,
    RngStream,
    SamplingError,
    sample_lozenge_tiling,
    sample_matching,
    schur_sample,
    white_order,
)

GLUE_MODE = {"I": "leg", "II": "leg", "III": "hypotenuse", "IV": "hypotenuse"}


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class QuadriTile:
    white_triangle: int
    black_triangle: int
    glue_edge: int
    label: str

    @property
    def glue_mode(self) -> str:
        return GLUE_MODE[self.label]


@dataclass
class QuadriSample:
    tiling: LozengeTiling
    graph: IsoradialGraph  # lozenge-with-diagonals graph L
    matching: DimerConfiguration  # dimers of L*
    h1: HeightField | None = None
    h2: HeightField | None = None

    def tiles(self) -> list[QuadriTile]:
        g = self.graph
        return [QuadriTile(int(g.edge_white[e]), int(g.edge_black[e]), int(e), g.edge_label(e))
                for e in self.matching.edges]

    def to_json(self) -> str:
        L = self.graph
        doc = {
            "lozenges": [list(map(int, lz)) for lz in self.tiling.lozenges()],
            "quadri_tiles": [
                {"white": t.white_triangle, "black": t.black_triangle, "edge": t.glue_edge, "type": t.label}
                for t in self.tiles()
            ],
            "vertices": L.vertices.tolist(),
            "h1": None if self.h1 is None else self.h1.values.tolist(),
            "h2": None if self.h2 is None else self.h2.values.tolist(),
        }
        return json.dumps(doc)


def lozenge_graph(tiling: LozengeTiling) -> IsoradialGraph:
    return build_lozenge_with_diagonals(tiling)


def sample_quadri(region, rng, with_heights: bool = True) -> QuadriSample:
    """Two-stage draw: lozenge tiling, then dimers on its lozenge-with-diagonals dual."""
    gen = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    tiling = sample_lozenge_tiling(region, gen.child(0))
    L = lozenge_graph(tiling)
    m = sample_matching(L, gen.child(1))
    qs = QuadriSample(tiling, L, m)
    if with_heights:
        qs.h1 = height1(qs)
        qs.h2 = height2(qs)
    return qs


def height1(qs: QuadriSample, v0: int | None = None) -> HeightField:
    """Height of the quadri dimers on L; increments theta/pi or theta/pi - 1."""
    return height_from_matching(qs.matching, v0)


def center_value(corners: Sequence[float]) -> float:
    """Value of the second height at a lozenge center: mean of its four corners."""
    return float(np.mean(corners))


def height2(qs: QuadriSample, v0: int | None = None) -> HeightField:
    """Height of the lozenge tiling on T, carried to the vertices of L."""
    T = qs.tiling.graph
    L = qs.graph
    tv = L.meta["t_vertex"]  # T vertex id -> L vertex id
    base_T = None
    if v0 is not None:
        inv = {l: t for t, l in tv.items()}
        if v0 not in inv:
            raise GeometryError("base of the second height must be a triangular-lattice vertex")
        base_T = inv[v0]
    ind = np.zeros(len(T.edges), dtype=np.int8)
    ind[qs.tiling.edges] = 1
    hT = height_from_indicator(T, ind, base_T)
    vals = np.full(L.n_vertices, np.nan)
    for t, l in tv.items():
        vals[l] = hT.values[t]
    for (p, q, a, c), O in zip(qs.tiling.lozenges(), L.meta["centers"]):
        vals[O] = center_value([hT.values[p], hT.values[q], hT.values[a], hT.values[c]])
    return HeightField(L, vals, tv[hT.base])


def validate_quadri(qs: QuadriSample) -> None:
    """Structural checks: edge-to-edge tiles, coloring, and recovery of the tiling."""
    L = qs.graph
    qs.matching.validate()
    for t in qs.tiles():
        if L.colors[t.white_triangle] == BLACK or L.colors[t.black_triangle] != BLACK:
            raise GeometryError(f"quadri-tile on edge {t.glue_edge} is not color consistent")
        if t.label not in GLUE_MODE:
            raise GeometryError(f"edge {t.glue_edge} has no type label")
    if recover_tiling(qs) != qs.tiling:
        raise GeometryError("removing the diagonals does not give back the lozenge tiling")


def recover_tiling(qs: QuadriSample) -> LozengeTiling:
    """Drop the diagonals of L and read off the lozenges as pairs of T triangles."""
    L, T = qs.graph, qs.tiling.graph
    inv = {l: t for t, l in L.meta["t_vertex"].items()}
    centers = set(L.meta["centers"])
    corners: dict[int, set] = {}
    for f in L.faces:
        o = [v for v in f if v in centers]
        if len(o) != 1:
            raise GeometryError("face of L without a lozenge center")
        corners.setdefault(o[0], set()).update(inv[v] for v in f if v not in centers)
    edges = []
    Lz = L.vertex_z()
    for o, cs in corners.items():
        cs = list(cs)
        if len(cs) != 4:
            raise GeometryError("lozenge center without four corners")
        z = T.vertex_z()[cs]
        # both diagonals bisect each other at the center; keep the shorter one
        best = min(((i, j) for i in range(4) for j in range(i + 1, 4)
                    if abs(0.5 * (z[i] + z[j]) - Lz[o]) < 1e-9 * max(1.0, abs(Lz[o]))),
                   key=lambda ij: abs(z[ij[0]] - z[ij[1]]))
        edges.append(T.edge_id(cs[best[0]], cs[best[1]]))
    return LozengeTiling(T, edges)


# ---------------------------------------------------------------------------
# batched two-stage sampler


class QuadriSampler:
    """Draws many quadri-tilings of one region with fixed stream assignment."""

    def __init__(self, region, mesh: float = 1.0):
        self.T = region if isinstance(region, IsoradialGraph) else build_triangular_lattice(region, mesh)
        self.stage1 = MatchingSampler(self.T)
        self._cache: dict[tuple, tuple] = {}

    def stage2(self, edges: tuple):
        hit = self._cache.get(edges)
        if hit is None:
            L = lozenge_graph(LozengeTiling(self.T, edges))
            fin = FiniteInverseKernel(L)
            d = fin.dirac
            n = d.shape[0]
            edge_at = np.full((n, n), -1, dtype=np.int64)
            de = L.dual_edges
            edge_at[d.row_of[L.edge_white[de]], d.col_of[L.edge_black[de]]] = de
            hit = (L, d.dense(), fin.matrix, d.row_of[white_order(L)], edge_at)
            self._cache[edges] = hit
        return hit

    def sample(self, n_samples: int, seed: int, stream: int = 0, chunk: int = 256):
        """List of ``(tiling edges, L graph, L dimer edges)`` triples."""
        tilings = self.stage1.sample_many(n_samples, seed, 2 * stream)
        out = []
        for k, start in enumerate(range(0, n_samples, chunk)):
            block = tilings[start : start + chunk]
            data = [self.stage2(tuple(int(e) for e in t)) for t in block]
            n = data[0][1].shape[0]
            u = RngStream(seed, (2 * stream + 1) * 100_000 + k).random((len(block), n))
            Kd = np.stack([d[1] for d in data])
            A = np.stack([d[2] for d in data]).copy()
            rows = np.stack([d[3] for d in data])
            cols, _ = schur_sample(Kd, A, rows, u)
            for i, d in enumerate(data):
                em = d[4][rows[i], cols[i]]
                if np.any(em < 0):
                    raise SamplingError("drew a non-edge")
                out.append((tuple(int(e) for e in block[i]), d[0], np.sort(em)))
        return out


def central_pairs(T: IsoradialGraph) -> tuple[tuple[int, int], tuple[int, int]]:
    """Two disjoint unit-length vertex pairs inside ``T``, on either side of its center.

    Boundary vertices are avoided since both heights are fixed there.
    """
    inner = np.array([v for v in range(T.n_vertices) if T.is_interior_vertex(v)])
    if len(inner) < 4:
        raise GeometryError("region too small for two interior vertex pairs")
    z = T.vertex_z()[inner]
    c = z.mean()
    r = T.mesh
    w = complex(0.5, math.sqrt(3) / 2) * r

    def near(p):
        return int(inner[np.argmin(np.abs(z - p))])

    return (near(c - w), near(c - r)), (near(c + r), near(c + w))


def increment_pairs(samples, pair1: tuple[int, int], pair2: tuple[int, int], T: IsoradialGraph | None = None):
    """``h1(v) - h1(u)`` and ``h2(v') - h2(u')`` for T-vertex pairs, per sample.

    ``samples`` is a list of :class:`QuadriSample` or of the triples returned
    by :meth:`QuadriSampler.sample`.
    """
    d1, d2 = [], []
    reps: dict[int, tuple] = {}

    def rep_for(g, a, b):
        key = (id(g), a, b)
        if key not in reps:
            r = height_increment_representation(g, graph_path(g, a, b))
            reps[key] = (g, np.array(r.e_edges, dtype=np.int64), np.array(r.f_edges, dtype=np.int64),
                         r.constant, g.theta / math.pi)
        return reps[key]

    def evaluate(rep, dimers):
        g, e, f, const, mu = rep
        x = np.zeros(len(g.edges))
        x[np.asarray(dimers, dtype=np.int64)] = 1.0
        return float((x[e] - mu[e]).sum() - (x[f] - mu[f]).sum() + const)

    for s in samples:
        if isinstance(s, QuadriSample):
            L, Tg, em, tiling_edges = s.graph, s.tiling.graph, s.matching.edges, s.tiling.edges
        else:
            tiling_edges, L, em = s
            Tg = T
        tv = L.meta["t_vertex"]
        d1.append(evaluate(rep_for(L, tv[pair1[0]], tv[pair1[1]]), em))
        d2.append(evaluate(rep_for(Tg, pair2[0], pair2[1]), tiling_edges))
    return np.array(d1), np.array(d2)


@dataclass
class CorrelationReport:
    correlation: float
    std_error: float
    n: int
    mean1: float = 0.0
    mean2: float = 0.0

    @property
    def independent_within(self) -> float:
        """``|corr| / SE``."""
        return abs(self.correlation) / self.std_error if self.std_error > 0 else float("inf")


def correlation_report(x, y) -> CorrelationReport:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 1000:
        raise InsufficientSamplesError("need at least 1000 samples")
    est = batch_correlation(x, y)
    return CorrelationReport(est.mean, est.std_error, est.n, float(x.mean()), float(y.mean()))


def empirical_independence(samples, pair1, pair2, T: IsoradialGraph | None = None) -> CorrelationReport:
    """Sample correlation of a first-height increment with a second-height one."""
    if len(samples) < 1000:
        raise InsufficientSamplesError("need at least 1000 samples")
    x, y = increment_pairs(samples, pair1, pair2, T)
    return correlation_report(x, y)
