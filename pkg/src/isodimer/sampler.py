"""Exact samplers.

``sample_matching`` draws a perfect matching of a finite region by visiting
white faces in a fixed order and conditioning the inverse Kasteleyn matrix
after each forced edge (rank-one Schur update).

``sample_edge_process`` draws the joint law of a finite set of edge
indicators under the whole-plane measure; it is the determinantal point
process with kernel ``K(w_i, b_i) K^{-1}(b_i, w_j)`` and is sampled by an
LU factorization with a coin flip at each pivot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .geometry import (
    GeometryError,
    Hexagon,
    IsoradialGraph,
    LozengeTiling,
    build_triangular_lattice,
)
from .kernel import DiracOperator, FiniteInverseKernel, KernelError, SingularKernelError

CLAMP = 1e-9
CHUNK = 256  # samples per random stream; fixed so results ignore thread count


class SamplingError(KernelError):
    pass


class RngStream:
    """Counter-based generator identified by ``(seed, stream)``."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def random(self, size=None):
        return self.generator.random(size)

    def child(self, k: int) -> "RngStream":
        """Independent stream number ``k`` below this one."""
        return RngStream(self.seed, self.stream * 1_000_003 + k + 1)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(int(rng)).generator


@dataclass(frozen=True)
class DimerConfiguration:
    """Perfect matching of a region's dual, as sorted dual-edge ids."""

    graph: IsoradialGraph
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(sorted(int(e) for e in self.edges)))
        self.validate()

    def validate(self):
        g = self.graph
        e = np.asarray(self.edges, dtype=np.int64)
        if len(e) and np.any(~g.interior[e]):
            raise GeometryError("matching uses an edge that is not in the dual graph")
        cover = np.zeros(g.n_faces, dtype=np.int64)
        np.add.at(cover, g.edge_left[e], 1)
        np.add.at(cover, g.edge_right[e], 1)
        bad = np.flatnonzero(cover != 1)
        if len(bad):
            raise GeometryError(f"not a perfect matching: face {int(bad[0])} covered {int(cover[bad[0]])} times")

    def indicator(self) -> np.ndarray:
        x = np.zeros(len(self.graph.edges), dtype=np.int8)
        x[list(self.edges)] = 1
        return x

    def to_json_line(self) -> str:
        return json.dumps(list(self.edges))

    @classmethod
    def from_json_line(cls, graph, line: str) -> "DimerConfiguration":
        return cls(graph, tuple(json.loads(line)))


def white_order(g: IsoradialGraph) -> np.ndarray:
    """White faces sorted row-major by circumcenter (y, then x)."""
    w = g.whites
    c = np.round(g.circumcenters[w] / g.scale_length, 9)
    return w[np.lexsort((c[:, 0], c[:, 1]))]


class MatchingSampler:
    """Batched sequential-conditioning sampler for one finite region."""

    def __init__(self, graph: IsoradialGraph, finite: FiniteInverseKernel | None = None):
        self.graph = graph
        self.finite = finite if finite is not None else FiniteInverseKernel(graph)
        self.dirac: DiracOperator = self.finite.dirac
        self.order = white_order(graph)
        self.rows = self.dirac.row_of[self.order]
        self.Kd = self.dirac.dense()
        # dual edge id of each (row, col) pair
        n = self.Kd.shape[0]
        self.edge_at = np.full((n, n), -1, dtype=np.int64)
        de = graph.dual_edges
        self.edge_at[self.dirac.row_of[graph.edge_white[de]], self.dirac.col_of[graph.edge_black[de]]] = de
        self.max_step_error = 0.0

    @property
    def n(self) -> int:
        return self.Kd.shape[0]

    def sample_block(self, u: np.ndarray) -> np.ndarray:
        """One matching per row of uniforms ``u`` (shape ``(B, n)``); returns edge ids."""
        B, n = u.shape
        A = np.broadcast_to(self.finite.matrix, (B, n, n)).copy()
        Kd = np.broadcast_to(self.Kd, (B, n, n))
        rows = np.broadcast_to(self.rows, (B, n))
        cols, err = schur_sample(Kd, A, rows, u)
        self.max_step_error = max(self.max_step_error, err)
        out = self.edge_at[rows, cols]
        if np.any(out < 0):
            raise SamplingError("drew a non-edge")
        return np.sort(out, axis=1)

    def sample_many(self, n_samples: int, seed: int, stream: int = 0, chunk: int = CHUNK) -> np.ndarray:
        out = []
        budget = max(1, int(2e7 // max(1, self.n * self.n)))
        for k, start in enumerate(range(0, n_samples, chunk)):
            m = min(chunk, n_samples - start)
            u = RngStream(seed, stream * 100_000 + k).random((m, self.n))
            for s in range(0, m, budget):
                out.append(self.sample_block(u[s : s + budget]))
        return np.concatenate(out) if out else np.zeros((0, self.n), dtype=np.int64)


def schur_sample(Kd: np.ndarray, A: np.ndarray, rows: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, float]:
    """Sequential conditioning on a batch of regions of equal size.

    ``Kd`` (B, n, n) holds K by (row, col), ``A`` (B, n, n) the inverse by
    (col, row) and is overwritten; ``rows`` (B, n) is the visiting order.
    Returns the chosen column for each visited row and the largest deviation
    of a conditional distribution's total from 1.
    """
    B, n, _ = A.shape
    ar = np.arange(B)
    out = np.empty((B, n), dtype=np.int64)
    worst = 0.0
    for step in range(n):
        r = rows[:, step]
        krow = Kd[ar, r, :]  # (B, n)
        p = (krow * A[ar, :, r]).real
        worst = max(worst, float(np.max(np.abs(p.sum(axis=1) - 1.0))))
        if np.any(p < -CLAMP):
            raise SamplingError(f"negative conditional probability {p.min():.3g}")
        p = np.clip(p, 0.0, None)
        cdf = np.cumsum(p, axis=1)
        cdf /= cdf[:, -1:]
        c = np.minimum((cdf < u[:, step : step + 1]).sum(axis=1), n - 1)
        bad = p[ar, c] <= 0
        if np.any(bad):
            c[bad] = np.argmax(p[bad], axis=1)
        out[:, step] = c
        col = A[ar, :, r].copy()
        row = A[ar, c, :].copy()
        piv = A[ar, c, r]
        A -= col[:, :, None] * (row / piv[:, None])[:, None, :]
        A[ar, c, :] = 0.0
        A[ar, :, r] = 0.0
    return out, worst


def sample_matching(g: IsoradialGraph, rng) -> DimerConfiguration:
    """Draw one perfect matching of the region ``g`` from the Boltzmann measure."""
    sampler = g.meta.get("_matching_sampler")
    if sampler is None:
        sampler = g.meta["_matching_sampler"] = MatchingSampler(g)
    gen = _as_generator(rng)
    u = gen.random((1, sampler.n))
    return DimerConfiguration(g, tuple(sampler.sample_block(u)[0]))


def sample_matchings(g: IsoradialGraph, n_samples: int, seed: int, stream: int = 0) -> np.ndarray:
    """``(n_samples, n_white)`` array of matched dual-edge ids."""
    sampler = g.meta.get("_matching_sampler")
    if sampler is None:
        sampler = g.meta["_matching_sampler"] = MatchingSampler(g)
    return sampler.sample_many(n_samples, seed, stream)


def sample_lozenge_tiling(region, rng, mesh: float = 1.0) -> LozengeTiling:
    """Uniform lozenge tiling of a triangular-lattice region."""
    T = region if isinstance(region, IsoradialGraph) else build_triangular_lattice(region, mesh)
    m = sample_matching(T, rng)
    return LozengeTiling(T, m.edges)


# ---------------------------------------------------------------------------
# determinantal edge process


def _lu_coin_flip(A: np.ndarray, u: np.ndarray, block: int = 32) -> np.ndarray:
    """In-place blocked LU of ``A`` (B, n, n) with Bernoulli pivots; returns (B, n) bool."""
    B, n, _ = A.shape
    take = np.zeros((B, n), dtype=bool)
    for j0 in range(0, n, block):
        j1 = min(n, j0 + block)
        for j in range(j0, j1):
            p = A[:, j, j].real
            if np.any(p < -CLAMP) or np.any(p > 1 + CLAMP):
                raise SamplingError(f"pivot probability outside [0, 1]: {p.min():.3g}, {p.max():.3g}")
            t = u[:, j] < p
            take[:, j] = t
            A[~t, j, j] -= 1.0
            piv = A[:, j, j]
            if np.any(np.abs(piv) < 1e-300):
                raise SamplingError("zero pivot")
            A[:, j + 1 :, j] /= piv[:, None]
            L = A[:, j + 1 :, j]
            # panel columns and the block's U rows
            A[:, j + 1 :, j + 1 : j1] -= L[:, :, None] * A[:, j, None, j + 1 : j1]
            if j1 < n:
                A[:, j + 1 : j1, j1:] -= L[:, : j1 - j - 1, None] * A[:, j, None, j1:]
        if j1 < n:
            A[:, j1:, j1:] -= A[:, j1:, j0:j1] @ A[:, j0:j1, j1:]
    return take


def sample_edge_process(C: np.ndarray, n_samples: int, seed: int, stream: int = 0,
                        chunk: int = CHUNK) -> np.ndarray:
    """Exact draws of the indicators of a finite edge set.

    ``C`` is the ``n x n`` edge-process kernel; the result is a boolean array
    of shape ``(n_samples, n)``.
    """
    C = np.asarray(C, dtype=complex)
    n = C.shape[0]
    out = np.zeros((n_samples, n), dtype=bool)
    sub = max(1, min(chunk, int(4e7 // max(1, n * n))))
    for k, start in enumerate(range(0, n_samples, chunk)):
        m = min(chunk, n_samples - start)
        u = RngStream(seed, stream * 100_000 + k).random((m, n))
        for s in range(0, m, sub):
            e = min(m, s + sub)
            A = np.broadcast_to(C, (e - s, n, n)).copy()
            out[start + s : start + e] = _lu_coin_flip(A, u[s:e])
    return out


def iter_chunks(n_samples: int, chunk: int = CHUNK) -> Iterator[tuple[int, int, int]]:
    for k, start in enumerate(range(0, n_samples, chunk)):
        yield k, start, min(chunk, n_samples - start)
