"""Reference flow, height functions and exact height covariances.

Orientation convention: along a primal edge u -> v let ``sigma = +1`` when the
face on the left is black (or, on the boundary, the face on the right is
white) and ``-1`` otherwise.  The height then changes by
``sigma * (omega0(e) - omega(e))`` where ``omega0 = theta / pi`` and
``omega = 1`` exactly when the dual edge is a dimer.  Boundary edges carry
``omega = 0``, which makes every face of the region divergence free.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components, shortest_path

from .geometry import BLACK, WHITE, GeometryError, IsoradialGraph
from .kernel import ExactInverseKernel


class HeightError(GeometryError):
    pass


class OverlappingPathsError(HeightError):
    pass


# ---------------------------------------------------------------------------
# reference flow


@dataclass
class ReferenceFlow:
    graph: IsoradialGraph
    values: np.ndarray  # theta/pi per primal edge id, white -> black on dual edges

    def divergence(self) -> np.ndarray:
        """Outflow at each face (white positive, black negative); +-1 when closed."""
        g = self.graph
        div = np.zeros(g.n_faces)
        for f in range(g.n_faces):
            s = self.values[g.face_edges[f]].sum()
            div[f] = s if g.colors[f] == WHITE else -s
        return div

    def closed_faces(self) -> np.ndarray:
        g = self.graph
        return np.array([all(g.interior[e] for e in g.face_edges[f]) for f in range(g.n_faces)])


def reference_flow(g: IsoradialGraph) -> ReferenceFlow:
    return ReferenceFlow(g, g.theta / math.pi)


def edge_orientation(g: IsoradialGraph) -> np.ndarray:
    """``sigma`` for each primal edge taken from ``edges[e, 0]`` to ``edges[e, 1]``."""
    lf, rf = g.edge_left, g.edge_right
    left_black = np.where(lf >= 0, g.colors[np.maximum(lf, 0)] == BLACK, False)
    right_white = np.where(rf >= 0, g.colors[np.maximum(rf, 0)] == WHITE, False)
    has_left = lf >= 0
    return np.where(has_left, np.where(left_black, 1, -1), np.where(right_white, 1, -1)).astype(float)


# ---------------------------------------------------------------------------
# height fields


@dataclass
class HeightField:
    graph: IsoradialGraph
    values: np.ndarray
    base: int

    def __getitem__(self, v):
        return self.values[v]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["vertex_id", "x", "y", "h"])
        for v, (x, y) in enumerate(self.graph.vertices):
            wr.writerow([v, repr(float(x)), repr(float(y)), repr(float(self.values[v]))])
        return buf.getvalue()


def default_base(g: IsoradialGraph) -> int:
    """Lexicographically smallest vertex by (x, y) among vertices with edges."""
    used = np.array([bool(es) for es in g.vertex_edges])
    idx = np.flatnonzero(used)
    p = np.round(g.vertices[idx], 9)
    return int(idx[np.lexsort((p[:, 1], p[:, 0]))[0]])


def edge_increments(g: IsoradialGraph, indicator: np.ndarray) -> np.ndarray:
    """Height change along ``edges[e, 0] -> edges[e, 1]`` for a 0/1 edge indicator."""
    omega = np.asarray(indicator, dtype=float).copy()
    omega[~g.interior] = 0.0
    return edge_orientation(g) * (g.theta / math.pi - omega)


def _integrate(g: IsoradialGraph, inc: np.ndarray, base: int, check: bool = True) -> np.ndarray:
    n = g.n_vertices
    a, b = g.edges[:, 0], g.edges[:, 1]
    adj = sp.csr_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    ncomp, lab = connected_components(adj, directed=False)
    used = np.array([bool(es) for es in g.vertex_edges])
    if len(set(lab[used])) > 1:
        raise HeightError("region is disconnected")
    order, pred = breadth_first_order(adj, base, directed=False, return_predecessors=True)
    # signed increment for each (pred -> child)
    lookup = {}
    for e, (u, v) in enumerate(g.edges):
        lookup[(int(u), int(v))] = inc[e]
        lookup[(int(v), int(u))] = -inc[e]
    h = np.full(n, np.nan)
    h[base] = 0.0
    for v in order[1:]:
        h[v] = h[pred[v]] + lookup[(int(pred[v]), int(v))]
    if check:
        bad = np.flatnonzero(np.abs(h[b] - h[a] - inc) > 1e-9)
        if len(bad):
            raise HeightError(f"increments are not closed around edge {int(bad[0])}")
    return h


def height_from_matching(m, v0: int | None = None) -> HeightField:
    """Height function of a dimer configuration, zero at ``v0``."""
    g = m.graph
    base = default_base(g) if v0 is None else int(v0)
    h = _integrate(g, edge_increments(g, m.indicator()), base)
    return HeightField(g, h, base)


def height_from_indicator(g: IsoradialGraph, indicator: np.ndarray, v0: int | None = None) -> HeightField:
    base = default_base(g) if v0 is None else int(v0)
    return HeightField(g, _integrate(g, edge_increments(g, indicator), base), base)


def matching_from_height(h: HeightField):
    """Recover the dimer configuration whose height function is ``h``."""
    from .sampler import DimerConfiguration

    g = h.graph
    a, b = g.edges[:, 0], g.edges[:, 1]
    inc = h.values[b] - h.values[a]
    omega = g.theta / math.pi - edge_orientation(g) * inc
    isint = np.abs(omega - np.rint(omega)) < 1e-9
    rounded = np.rint(omega)
    ok = isint & ((rounded == 0) | (rounded == 1)) & ((rounded == 0) | g.interior)
    if not np.all(ok):
        e = int(np.flatnonzero(~ok)[0])
        f = int(g.edge_left[e] if g.edge_left[e] >= 0 else g.edge_right[e])
        raise HeightError(f"invalid height increment on edge {e} of face {f}")
    matched = np.flatnonzero(rounded == 1)
    cover = np.zeros(g.n_faces, dtype=np.int64)
    np.add.at(cover, g.edge_left[matched], 1)
    np.add.at(cover, g.edge_right[matched], 1)
    bad = np.flatnonzero(cover != 1)
    if len(bad):
        raise HeightError(f"face {int(bad[0])} has {int(cover[bad[0]])} edges with increment omega0 - 1")
    return DimerConfiguration(g, tuple(int(e) for e in matched))


# ---------------------------------------------------------------------------
# increments as linear functionals of the edge indicators


@dataclass
class IncrementRepresentation:
    """``h(v) - h(u) = sum_e (1_e - mu_e) - sum_f (1_f - mu_f) + constant``."""

    e_edges: list  # dual edges crossed with the white face on the left
    f_edges: list  # dual edges crossed with the black face on the left
    constant: float  # contribution of boundary edges

    def coefficients(self) -> dict:
        c: dict[int, float] = {}
        for e in self.e_edges:
            c[e] = c.get(e, 0.0) + 1.0
        for f in self.f_edges:
            c[f] = c.get(f, 0.0) - 1.0
        return {k: v for k, v in c.items() if v != 0.0}

    def evaluate(self, indicator: np.ndarray, mu: np.ndarray) -> float:
        x = np.asarray(indicator, dtype=float)
        s = sum(x[e] - mu[e] for e in self.e_edges) - sum(x[f] - mu[f] for f in self.f_edges)
        return float(s + self.constant)

    def negated(self) -> "IncrementRepresentation":
        return IncrementRepresentation(list(self.f_edges), list(self.e_edges), -self.constant)


def height_increment_representation(g: IsoradialGraph, path: Sequence[int]) -> IncrementRepresentation:
    """Split a primal vertex path into the dual edges it crosses, by side."""
    e_list, f_list = [], []
    const = 0.0
    sig = edge_orientation(g)
    for u, v in zip(path[:-1], path[1:]):
        e = g.edge_id(int(u), int(v))
        s = sig[e] if g.edges[e, 0] == u else -sig[e]
        if not g.interior[e]:
            const += s * g.theta[e] / math.pi
        elif s < 0:
            e_list.append(int(e))
        else:
            f_list.append(int(e))
    return IncrementRepresentation(e_list, f_list, const)


def path_coefficients(g: IsoradialGraph, paths: Sequence[Sequence[int]], weights=None):
    """``sum_k w_k (h(end_k) - h(start_k)) = sum_e c_e (1_e - mu_e) + constant``.

    Returns ``(edges, c, constant)``; the constant collects boundary edges.
    """
    total: dict[int, float] = {}
    const = 0.0
    weights = np.ones(len(paths)) if weights is None else weights
    for p, wk in zip(paths, weights):
        rep = height_increment_representation(g, p)
        const += wk * rep.constant
        for e, c in rep.coefficients().items():
            total[e] = total.get(e, 0.0) + wk * c
    edges = np.array(sorted(k for k, v in total.items() if v != 0.0), dtype=np.int64)
    return edges, np.array([total[e] for e in edges]), float(const)


# ---------------------------------------------------------------------------
# paths


def lattice_key_index(g: IsoradialGraph) -> dict:
    keys = g.meta.get("vertex_keys")
    if keys is None:
        raise HeightError("graph has no lattice coordinates")
    return {tuple(k): i for i, k in enumerate(keys)}


def lattice_path(g: IsoradialGraph, u: int, v: int, first: str = "i") -> list[int]:
    """L-shaped lattice path from ``u`` to ``v``: all i-steps then all j-steps (or the reverse)."""
    keys = g.meta.get("vertex_keys")
    if keys is None:
        return graph_path(g, u, v)
    index = lattice_key_index(g)
    (i0, j0), (i1, j1) = keys[u], keys[v]
    seq = [(i0, j0)]
    di, dj = np.sign(i1 - i0), np.sign(j1 - j0)
    legs = [("i", abs(i1 - i0), (di, 0)), ("j", abs(j1 - j0), (0, dj))]
    if first != "i":
        legs.reverse()
    for _, n, (a, b) in legs:
        for _ in range(n):
            i, j = seq[-1]
            seq.append((i + a, j + b))
    try:
        return [index[k] for k in seq]
    except KeyError as exc:
        raise HeightError(f"path leaves the region at {exc}") from None


def graph_path(g: IsoradialGraph, u: int, v: int) -> list[int]:
    """Euclidean shortest path along primal edges."""
    n = g.n_vertices
    a, b = g.edges[:, 0], g.edges[:, 1]
    L = np.hypot(*(g.vertices[b] - g.vertices[a]).T)
    adj = sp.csr_matrix((np.r_[L, L], (np.r_[a, b], np.r_[b, a])), shape=(n, n))
    _, pred = shortest_path(adj, indices=u, return_predecessors=True)
    if pred[v] < 0 and u != v:
        raise HeightError("vertices are not connected")
    path = [v]
    while path[-1] != u:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def check_separation(g: IsoradialGraph, p1: Sequence[int], p2: Sequence[int], min_sep: float | None = None):
    if set(p1) & set(p2):
        raise OverlappingPathsError("paths share a vertex")
    sep = 2.0 * g.mesh if min_sep is None else min_sep
    a, b = g.vertices[list(p1)], g.vertices[list(p2)]
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)).min()
    if d < sep - 1e-12:
        raise OverlappingPathsError(f"paths are {d:.3g} apart, need {sep:.3g}")


# ---------------------------------------------------------------------------
# exact covariances


def edge_cross_covariance(g: IsoradialGraph, e1, e2, kernel: ExactInverseKernel) -> np.ndarray:
    """``Cov(1_i, 1_j)`` for i in ``e1`` and j in ``e2`` (edge sets disjoint)."""
    e1 = np.asarray(e1, dtype=np.int64)
    e2 = np.asarray(e2, dtype=np.int64)
    n1, n2 = len(e1), len(e2)
    b1, w1 = g.edge_black[e1], g.edge_white[e1]
    b2, w2 = g.edge_black[e2], g.edge_white[e2]
    k1 = kernel.dirac.edge_values[e1]
    k2 = kernel.dirac.edge_values[e2]
    A12 = kernel.batch(np.repeat(b1, n2), np.tile(w2, n1)).reshape(n1, n2)
    A21 = kernel.batch(np.repeat(b2, n1), np.tile(w1, n2)).reshape(n2, n1)
    return -(k1[:, None] * k2[None, :] * A12 * A21.T).real


def exact_height_covariance(g: IsoradialGraph, u1: int, v1: int, u2: int, v2: int,
                            kernel: ExactInverseKernel | None = None, paths=None,
                            first: str = "i") -> float:
    """``E[(h(v1) - h(u1)) (h(v2) - h(u2))]`` under the whole-plane measure."""
    kernel = kernel or g.meta.get("_exact_kernel") or ExactInverseKernel(g)
    g.meta["_exact_kernel"] = kernel
    if paths is None:
        p1 = lattice_path(g, u1, v1, first)
        p2 = lattice_path(g, u2, v2, first)
    else:
        p1, p2 = paths
    check_separation(g, p1, p2)
    r1 = height_increment_representation(g, p1).coefficients()
    r2 = height_increment_representation(g, p2).coefficients()
    e1 = np.array(list(r1), dtype=np.int64)
    e2 = np.array(list(r2), dtype=np.int64)
    c1 = np.array([r1[e] for e in e1])
    c2 = np.array([r2[e] for e in e2])
    cov = edge_cross_covariance(g, e1, e2, kernel)
    return float(c1 @ cov @ c2)


def exact_functional_variance(g: IsoradialGraph, edges, coeffs, kernel: ExactInverseKernel,
                              block: int = 2048) -> float:
    """``Var(sum_e c_e 1_e)`` under the whole-plane measure."""
    edges = np.asarray(edges, dtype=np.int64)
    coeffs = np.asarray(coeffs, dtype=float)
    b, w = g.edge_black[edges], g.edge_white[edges]
    kv = kernel.dirac.edge_values[edges]
    n = len(edges)
    total = 0.0
    for i0 in range(0, n, block):
        i1 = min(n, i0 + block)
        rows = np.arange(i0, i1)
        A = kernel.batch(np.repeat(b[rows], n), np.tile(w, len(rows))).reshape(len(rows), n)
        At = kernel.batch(np.tile(b, len(rows)), np.repeat(w[rows], n)).reshape(len(rows), n)
        C = kv[rows, None] * A
        Ct = kv[None, :] * At
        cov = -(C * Ct).real
        mu = (kv[rows] * A[np.arange(len(rows)), rows]).real
        cov[np.arange(len(rows)), rows] = mu * (1 - mu)
        total += float(coeffs[rows] @ cov @ coeffs)
    return total


def weighted_height_functional(g: IsoradialGraph, vertices, weights, root: int | None = None):
    """Write ``sum_v c_v h(v)`` (with ``sum c_v = 0``) as ``sum_e a_e (1_e - mu_e)``.

    Uses a breadth-first tree on the given vertices, joined by shortest paths
    where the vertex set is disconnected; ``a_e`` is minus the oriented
    subtree weight below the tree edge ``e``.  Returns ``(edges, a)``.
    """
    vertices = [int(v) for v in vertices]
    weights = np.asarray(weights, dtype=float)
    if abs(weights.sum()) > 1e-9 * max(1.0, np.abs(weights).sum()):
        raise HeightError("weights must sum to zero")
    wmap = dict(zip(vertices, weights))
    S = set(vertices)

    def components(S):
        seen, comps = set(), []
        for s in S:
            if s in seen:
                continue
            comp, stack = [], [s]
            seen.add(s)
            while stack:
                q = stack.pop()
                comp.append(q)
                for r in g.neighbors(q):
                    if r in S and r not in seen:
                        seen.add(r)
                        stack.append(r)
            comps.append(comp)
        return comps

    comps = components(S)
    while len(comps) > 1:
        a = np.array(comps[0])
        b = np.array(comps[1])
        pa, pb = g.vertex_z()[a], g.vertex_z()[b]
        d = np.abs(pa[:, None] - pb[None, :])
        i, j = np.unravel_index(np.argmin(d), d.shape)
        S.update(graph_path(g, int(a[i]), int(b[j])))
        comps = components(S)
    root = vertices[0] if root is None else int(root)
    parent = {root: -1}
    order = [root]
    k = 0
    while k < len(order):
        q = order[k]
        k += 1
        for r in g.neighbors(q):
            if r in S and r not in parent:
                parent[r] = q
                order.append(r)
    sub = {v: wmap.get(v, 0.0) for v in order}
    for v in reversed(order[1:]):
        sub[parent[v]] += sub[v]
    sig = edge_orientation(g)
    coef: dict[int, float] = {}
    for v in order[1:]:
        p = parent[v]
        e = g.edge_id(p, v)
        if not g.interior[e]:
            raise HeightError("functional support touches the boundary")
        s = sig[e] if g.edges[e, 0] == p else -sig[e]
        if sub[v] != 0.0:
            coef[e] = coef.get(e, 0.0) - s * sub[v]
    edges = np.array(sorted(coef), dtype=np.int64)
    return edges, np.array([coef[e] for e in edges])
