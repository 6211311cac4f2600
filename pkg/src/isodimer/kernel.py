"""Dirac operator K and three ways to get its inverse.

* exact: the real-axis integral of the discrete exponential f_wb,
* finite: a dense solve on a finite region (oracle only),
* asymptotic: the two-term expansion valid for |b - w| large.

All positions entering K and f_wb are measured in units of the circumradius
``R = radius * mesh`` so that every rhombus has unit sides.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import (
    BLACK,
    WHITE,
    GeometryError,
    IsoradialGraph,
    rhombus_of,
    validate_isoradial,
)

TWO_PI = 2.0 * math.pi


class KernelError(RuntimeError):
    """Numerical failure in a kernel computation."""


class QuadratureError(KernelError):
    pass


class SingularKernelError(KernelError):
    """The finite K has no inverse: the region has no perfect matching."""


# ---------------------------------------------------------------------------
# Dirac operator


class DiracOperator:
    """Sparse ``K`` with rows indexed by white faces and columns by black faces.

    ``K(w, b) = i (x - y) / R`` where ``w, x, b, y`` is the rhombus of the
    edge listed counterclockwise.  ``K(b, w)`` is the complex conjugate.
    """

    def __init__(self, graph: IsoradialGraph):
        self.graph = graph
        self.whites = graph.whites
        self.blacks = graph.blacks
        nf = graph.n_faces
        self.row_of = np.full(nf, -1, dtype=np.int64)
        self.col_of = np.full(nf, -1, dtype=np.int64)
        self.row_of[self.whites] = np.arange(len(self.whites))
        self.col_of[self.blacks] = np.arange(len(self.blacks))
        de = graph.dual_edges
        R = graph.scale_length
        vz = graph.vertex_z()
        u, v = graph.edges[de, 0], graph.edges[de, 1]
        black_left = graph.edge_left[de] == graph.edge_black[de]
        x = np.where(black_left, vz[v], vz[u])
        y = np.where(black_left, vz[u], vz[v])
        vals = 1j * (x - y) / R
        self.edge_values = np.zeros(len(graph.edges), dtype=complex)
        self.edge_values[de] = vals
        rows = self.row_of[graph.edge_white[de]]
        cols = self.col_of[graph.edge_black[de]]
        self.matrix = sp.csr_matrix(
            (vals, (rows, cols)), shape=(len(self.whites), len(self.blacks))
        )

    @property
    def shape(self):
        return self.matrix.shape

    def entry(self, w: int, b: int) -> complex:
        """K(w, b) for face ids ``w`` (white) and ``b`` (black)."""
        if self.graph.colors[w] != WHITE or self.graph.colors[b] != BLACK:
            raise GeometryError("K(w, b) needs a white and a black face")
        return complex(self.matrix[self.row_of[w], self.col_of[b]])

    def entry_bw(self, b: int, w: int) -> complex:
        return self.entry(w, b).conjugate()

    def edge_value(self, e) -> np.ndarray | complex:
        """K(w_e, b_e) for dual edge(s) ``e``."""
        return self.edge_values[e]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def assemble_dirac(g: IsoradialGraph, validate: bool = True) -> DiracOperator:
    if validate:
        rep = validate_isoradial(g)
        if not rep.passed:
            raise GeometryError("graph failed validation: " + "; ".join(rep.messages[:3]))
    return DiracOperator(g)


# ---------------------------------------------------------------------------
# discrete exponentials


def _cluster_directions(angles: np.ndarray, tol: float = 1e-7) -> tuple[np.ndarray, np.ndarray]:
    """Group angles equal modulo 2 pi; returns (representatives, labels)."""
    a = np.mod(angles, TWO_PI)
    order = np.argsort(a)
    sa = a[order]
    labels_sorted = np.zeros(len(a), dtype=np.int64)
    if len(a):
        jumps = np.diff(sa) > tol
        labels_sorted[1:] = np.cumsum(jumps)
        if sa[-1] - sa[0] > TWO_PI - tol:
            labels_sorted[labels_sorted == labels_sorted[-1]] = 0
    labels = np.empty_like(labels_sorted)
    labels[order] = labels_sorted
    reps = np.array([a[labels == k][0] for k in range(labels.max() + 1)]) if len(a) else np.zeros(0)
    # renumber labels by representative angle
    rank = np.argsort(reps)
    inv = np.empty_like(rank)
    inv[rank] = np.arange(len(rank))
    return reps[rank], inv[labels]


class DiscreteExponential:
    """``f(z) = prod_d (z - e^{i phi_d})^{m_d}`` with integer exponents ``m``."""

    def __init__(self, angles: np.ndarray, exponents: np.ndarray):
        self.angles = np.asarray(angles, dtype=float)
        self.exponents = np.asarray(exponents, dtype=np.int64)

    @property
    def points(self) -> np.ndarray:
        return np.exp(1j * self.angles)

    @property
    def zeros(self) -> list[complex]:
        return [complex(p) for p, m in zip(self.points, self.exponents) for _ in range(max(m, 0))]

    @property
    def poles(self) -> list[complex]:
        return [complex(p) for p, m in zip(self.points, self.exponents) for _ in range(max(-m, 0))]

    @property
    def degree(self) -> int:
        return int(self.exponents.sum())

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.ones(z.shape, dtype=complex)
        for p, m in zip(self.points, self.exponents):
            if m:
                out = out * (z - p) ** int(m)
        return out

    def at_zero(self) -> complex:
        # product of (-e^{i phi})^m, computed as a phase
        m = self.exponents
        return complex(np.exp(1j * float(np.sum(m * (self.angles + math.pi)))))

    def multiset_key(self) -> tuple:
        nz = np.flatnonzero(self.exponents)
        return tuple((round(float(self.angles[k]), 9), int(self.exponents[k])) for k in nz)

    def __repr__(self):
        return f"DiscreteExponential(zeros={len(self.zeros)}, poles={len(self.poles)})"


class RhombusComplex:
    """Integer potential ``E(node)`` with ``f_wv = prod (z - e^{i phi})^{E(v) - E(w)}``.

    Nodes ``0..nV-1`` are primal vertices and ``nV + f`` the dual vertex of
    face ``f``.  A step from node q to node p with unit direction ``u`` acts on
    f by

    * away from a white vertex:  f / (z - u)
    * toward a black vertex:     f / (z - u)
    * away from a black vertex:  f * (z + u)
    * toward a white vertex:     f * (z + u)

    The last two are the inverses of the first two read backwards.
    """

    def __init__(self, graph: IsoradialGraph):
        self.graph = graph
        g = graph
        nV, nF = g.n_vertices, g.n_faces
        self.n_vertices = nV
        R = g.scale_length
        fz = g.face_z() / R
        vz = g.vertex_z() / R
        self.node_z = np.concatenate([vz, fz])
        fi, vi = [], []
        for f, verts in enumerate(g.faces):
            for v in verts:
                fi.append(f)
                vi.append(v)
        fi = np.array(fi, dtype=np.int64)
        vi = np.array(vi, dtype=np.int64)
        d = vz[vi] - fz[fi]  # face -> vertex, unit length
        if np.max(np.abs(np.abs(d) - 1.0)) > 1e-7:
            raise GeometryError("rhombus sides are not of unit length")
        # direction actually contributed by the step face -> vertex
        white = g.colors[fi] == WHITE
        step_dir = np.where(white, d, -d)
        sign = np.where(white, -1, 1)
        self.angles, lab = _cluster_directions(np.angle(step_dir))
        D = len(self.angles)
        self.n_dirs = D
        E = np.zeros((nV + nF, D), dtype=np.int64)
        seen = np.zeros(nV + nF, dtype=bool)
        # adjacency lists with per-incidence data
        inc_v: list[list[int]] = [[] for _ in range(nV)]
        inc_f: list[list[int]] = [[] for _ in range(nF)]
        for k in range(len(fi)):
            inc_v[vi[k]].append(k)
            inc_f[fi[k]].append(k)
        self.component = np.full(nV + nF, -1, dtype=np.int64)
        comp = 0
        for start in range(nV + nF):
            if seen[start]:
                continue
            if start < nV and not inc_v[start]:
                continue
            seen[start] = True
            self.component[start] = comp
            queue = deque([start])
            while queue:
                q = queue.popleft()
                if q < nV:
                    for k in inc_v[q]:
                        p = nV + fi[k]
                        if not seen[p]:
                            E[p] = E[q]
                            E[p, lab[k]] -= sign[k]
                            seen[p] = True
                            self.component[p] = comp
                            queue.append(p)
                else:
                    for k in inc_f[q - nV]:
                        p = vi[k]
                        if not seen[p]:
                            E[p] = E[q]
                            E[p, lab[k]] += sign[k]
                            seen[p] = True
                            self.component[p] = comp
                            queue.append(p)
            comp += 1
        # consistency over every incidence
        delta = E[vi] - E[nV + fi]
        expect = np.zeros_like(delta)
        expect[np.arange(len(fi)), lab] = sign
        if not np.array_equal(delta, expect):
            raise GeometryError("discrete exponential is not path independent on this graph")
        self.E = E
        self._fi, self._vi, self._lab, self._sign = fi, vi, lab, sign

    def node_of_face(self, f) -> np.ndarray | int:
        return self.n_vertices + np.asarray(f)

    def exponents(self, w_node, v_node) -> np.ndarray:
        w_node = np.asarray(w_node)
        v_node = np.asarray(v_node)
        if np.any(self.component[w_node] != self.component[v_node]):
            raise GeometryError("endpoints lie in different components")
        return self.E[v_node] - self.E[w_node]

    def exponential(self, w_face: int, v_node: int) -> DiscreteExponential:
        """``f_{w v}`` for a white face ``w`` and any node ``v``."""
        if self.graph.colors[w_face] != WHITE:
            raise GeometryError("f_wv needs a white starting face")
        return DiscreteExponential(self.angles, self.exponents(self.node_of_face(w_face), v_node))

    def exponential_along(self, path: Sequence[int]) -> DiscreteExponential:
        """Build f along an explicit node path using the step rules directly."""
        nV = self.n_vertices
        m = np.zeros(self.n_dirs, dtype=np.int64)
        for q, p in zip(path[:-1], path[1:]):
            if (q < nV) == (p < nV):
                raise GeometryError("path steps must alternate primal and dual nodes")
            f, v = (q - nV, p) if q >= nV else (p - nV, q)
            u = self.node_z[p] - self.node_z[q]
            if abs(abs(u) - 1.0) > 1e-7:
                raise GeometryError("path step is not a rhombus edge")
            from_face = q >= nV
            face_white = self.graph.colors[f] == WHITE
            # factor direction and sign of the exponent
            if face_white:
                d, s = (u, -1) if from_face else (-u, 1)
            else:
                d, s = (-u, 1) if from_face else (u, -1)
            k = int(np.argmin(np.abs(np.exp(1j * self.angles) - d)))
            if abs(np.exp(1j * self.angles[k]) - d) > 1e-7:
                raise GeometryError("step direction not in the direction set")
            m[k] += s
        return DiscreteExponential(self.angles, m)

    def random_path(self, a: int, b: int, rng: np.random.Generator) -> list[int]:
        """A random (not necessarily shortest) node path from ``a`` to ``b``."""
        nV = self.n_vertices
        g = self.graph
        target = self.node_z[b]

        def nbrs(q):
            if q < nV:
                return [nV + f for f in g.vertex_faces[q]]
            return list(g.faces[q - nV])

        path = [a]
        q = a
        for _ in range(100000):
            if q == b:
                return path
            cand = nbrs(q)
            dist = np.array([abs(self.node_z[c] - target) for c in cand])
            # greedy with random tie breaking and occasional detours
            if rng.random() < 0.25:
                q = cand[int(rng.integers(len(cand)))]
            else:
                best = np.flatnonzero(dist <= dist.min() + 1e-9)
                q = cand[int(rng.choice(best))]
            path.append(q)
        raise GeometryError("random walk failed to reach target")


# ---------------------------------------------------------------------------
# exact inverse kernel


def _pole_gap_direction(angles: np.ndarray, m: np.ndarray, target: float) -> tuple[float, float]:
    """Middle of the pole-free angular gap containing ``target``; also its half width."""
    pa = np.sort(np.mod(angles[m < 0], TWO_PI))
    if len(pa) == 0:
        return target, math.pi
    t = target % TWO_PI
    k = np.searchsorted(pa, t)
    lo = pa[k - 1] if k > 0 else pa[-1] - TWO_PI
    hi = pa[k] if k < len(pa) else pa[0] + TWO_PI
    if min(abs(t - lo), abs(hi - t)) < 1e-9:
        raise QuadratureError("cut direction runs through a pole")
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


class ExactInverseKernel:
    """``K^{-1}(b, w) = -(1/2pi) int_0^inf f_wb(t e^{i phi}) e^{i phi} dt``.

    The ray direction ``phi`` is the middle of the pole-free sector of f_wb
    containing the direction from b to w.  The substitution ``t = e^s`` turns
    the integrand into a smooth, doubly exponentially decaying function of s
    that is analytic in a strip, so the trapezoid rule converges
    geometrically; the step is halved until two estimates agree to ``tol``.
    """

    def __init__(self, graph: IsoradialGraph, tol: float = 1e-10, complex_=None):
        self.graph = graph
        self.tol = tol
        self.rc = complex_ if complex_ is not None else RhombusComplex(graph)
        self.dirac = DiracOperator(graph)
        self._cache: dict[tuple, complex] = {}
        self.max_error_estimate = 0.0

    # directions and cuts --------------------------------------------------

    def _cut(self, b: int, w: int, m: np.ndarray) -> float:
        fz = self.rc.node_z[self.rc.n_vertices:]
        d = fz[w] - fz[b]
        if abs(d) > 1e-9:
            target = math.atan2(d.imag, d.real)
        else:
            # coincident positions: degenerate edge, use the direction of K(w, b)
            k = self.dirac.entry(w, b)
            target = math.atan2(k.imag, k.real) + math.pi
        phi, _ = _pole_gap_direction(self.rc.angles, m, target)
        return phi

    def __call__(self, b: int, w: int) -> complex:
        return complex(self.batch([b], [w])[0])

    def batch(self, bs: Iterable[int], ws: Iterable[int]) -> np.ndarray:
        bs = np.asarray(bs, dtype=np.int64).ravel()
        ws = np.asarray(ws, dtype=np.int64).ravel()
        g = self.graph
        if np.any(g.colors[bs] != BLACK) or np.any(g.colors[ws] != WHITE):
            raise GeometryError("K^{-1}(b, w) needs a black and a white face")
        if len(bs) == 0:
            return np.zeros(0, dtype=complex)
        M = self.rc.exponents(self.rc.node_of_face(ws), self.rc.node_of_face(bs))
        # The exponents fix the displacement b - w and hence the integral,
        # except for coincident b and w where the cut side must be recorded.
        fz = self.rc.node_z[self.rc.n_vertices:]
        side = np.zeros((len(bs), 1), dtype=np.int64)
        coincident = np.flatnonzero(np.abs(fz[bs] - fz[ws]) < 1e-9)
        for k in coincident:
            phi = self._cut(int(bs[k]), int(ws[k]), M[k])
            side[k, 0] = 1 + int(round(np.mod(phi, TWO_PI) * 1e6))
        Mk = np.hstack([M, side])
        U, first, inv = np.unique(Mk, axis=0, return_index=True, return_inverse=True)
        inv = inv.ravel()
        vals = np.empty(len(U), dtype=complex)
        groups: dict[float, list[int]] = {}
        for k in range(len(U)):
            key = U[k].tobytes()
            hit = self._cache.get(key)
            if hit is not None:
                vals[k] = hit
                continue
            phi = self._cut(int(bs[first[k]]), int(ws[first[k]]), U[k, :-1])
            groups.setdefault(round(phi, 12), []).append(k)
        for phi, idx in groups.items():
            res = self._integrate(U[idx, :-1], phi)
            for k, val in zip(idx, res):
                self._cache[U[k].tobytes()] = val
                vals[k] = val
        return vals[inv]

    def _integrate(self, M: np.ndarray, phi: float) -> np.ndarray:
        span = math.log1p(float(np.abs(M).sum(axis=1).max()))
        lo, hi = -36.0, span + 36.0
        h = 0.125
        pts = np.exp(1j * self.rc.angles)
        ephi = complex(math.cos(phi), math.sin(phi))
        Mf = M.astype(float)

        def trap_sum(s):
            z = np.exp(s)[None, :] * ephi
            with np.errstate(divide="ignore"):
                logs = np.log(z - pts[:, None])  # (D, N)
            # the ray may pass through a zero; keep 0 * log|0| finite
            logs.real = np.maximum(logs.real, -700.0)
            vals = np.exp(Mf @ logs) * np.exp(s)[None, :]
            return vals.sum(axis=1)

        s0 = np.arange(lo, hi + h / 2, h)
        total = trap_sum(s0)
        est = total * h
        for _ in range(6):
            mids = s0[:-1] + h / 2
            total = total + trap_sum(mids)
            h /= 2
            s0 = np.sort(np.concatenate([s0, mids]))
            new = total * h
            err = float(np.max(np.abs(new - est)))
            est = new
            if err <= self.tol:
                self.max_error_estimate = max(self.max_error_estimate, err)
                return -ephi * est / TWO_PI
        raise QuadratureError(f"trapezoid rule did not converge (last change {err:.2e})")

    def column(self, w: int, bs=None) -> np.ndarray:
        bs = self.graph.blacks if bs is None else np.asarray(bs)
        return self.batch(bs, np.full(len(bs), w))


def _integrand_reference(rc: RhombusComplex, m: np.ndarray, phi: float) -> complex:
    """scipy.integrate.quad version of the ray integral; slow, for tests."""
    from scipy.integrate import quad

    f = DiscreteExponential(rc.angles, m)
    e = complex(math.cos(phi), math.sin(phi))

    def part(t, which):
        v = f(t * e) * e
        return v.real if which == 0 else v.imag

    re = quad(part, 0, np.inf, args=(0,), epsabs=1e-12, epsrel=1e-12, limit=400)[0]
    im = quad(part, 0, np.inf, args=(1,), epsabs=1e-12, epsrel=1e-12, limit=400)[0]
    return -(re + 1j * im) / TWO_PI


# ---------------------------------------------------------------------------
# finite and asymptotic inverses


MAX_FINITE_DUAL = 20000


class FiniteInverseKernel:
    """Dense inverse of the finite K of a region, indexed by face ids."""

    def __init__(self, graph: IsoradialGraph, dirac: DiracOperator | None = None):
        self.graph = graph
        self.dirac = dirac if dirac is not None else DiracOperator(graph)
        nW, nB = self.dirac.shape
        if nW != nB:
            raise SingularKernelError(f"region has {nW} white and {nB} black faces")
        if nW + nB > MAX_FINITE_DUAL:
            raise KernelError("region too large for a dense solve")
        Kd = self.dirac.dense()
        try:
            lu = np.linalg.inv(Kd) if nW else np.zeros((0, 0), dtype=complex)
        except np.linalg.LinAlgError as exc:
            raise SingularKernelError("finite K is singular: no perfect matching") from exc
        if nW and not np.all(np.isfinite(lu)):
            raise SingularKernelError("finite K is singular: no perfect matching")
        cond_check = np.abs(Kd @ lu - np.eye(nW)).max() if nW else 0.0
        if cond_check > 1e-6:
            raise SingularKernelError("finite K is numerically singular")
        self.matrix = lu  # matrix[col_of[b], row_of[w]]

    def __call__(self, b: int, w: int) -> complex:
        return complex(self.matrix[self.dirac.col_of[b], self.dirac.row_of[w]])

    def batch(self, bs, ws) -> np.ndarray:
        return self.matrix[self.dirac.col_of[np.asarray(bs)], self.dirac.row_of[np.asarray(ws)]]


def inverse_kernel_exact(g: IsoradialGraph, b: int, w: int) -> complex:
    ker = g.meta.get("_exact_kernel")
    if ker is None:
        ker = g.meta["_exact_kernel"] = ExactInverseKernel(g)
    return ker(b, w)


def inverse_kernel_finite(g: IsoradialGraph, b: int, w: int) -> complex:
    ker = g.meta.get("_finite_kernel")
    if ker is None:
        ker = g.meta["_finite_kernel"] = FiniteInverseKernel(g)
    return ker(b, w)


class AsymptoticInverseKernel:
    """``(1/2pi) (1/(b - w) + f_wb(0) / conj(b - w))`` in unit-rhombus coordinates."""

    def __init__(self, graph: IsoradialGraph, complex_: RhombusComplex | None = None):
        self.graph = graph
        self.rc = complex_ if complex_ is not None else RhombusComplex(graph)

    def batch(self, bs, ws, first_term_only: bool = False) -> np.ndarray:
        bs = np.asarray(bs)
        ws = np.asarray(ws)
        rc = self.rc
        bz = rc.node_z[rc.node_of_face(bs)]
        wz = rc.node_z[rc.node_of_face(ws)]
        d = bz - wz
        if np.any(np.abs(d) < 1e-12):
            raise GeometryError("asymptotic formula needs distinct positions")
        if first_term_only:
            return 1.0 / (TWO_PI * d)
        M = rc.exponents(rc.node_of_face(ws), rc.node_of_face(bs))
        f0 = np.exp(1j * (M @ (rc.angles + math.pi)))
        return (1.0 / d + f0 / np.conj(d)) / TWO_PI

    def __call__(self, b, w) -> complex:
        return complex(self.batch([b], [w])[0])


def inverse_kernel_asymptotic(g: IsoradialGraph, b: int, w: int) -> complex:
    return AsymptoticInverseKernel(g)(b, w)


def kernel_bound(delta: float) -> float:
    """Uniform bound ``(1/2pi)(1 + 2/sin^2 delta)`` on |K^{-1}|."""
    if not 0 < delta <= math.pi / 2 + 1e-15:
        raise ValueError("delta must lie in (0, pi/2]")
    return (1.0 + 2.0 / math.sin(delta) ** 2) / TWO_PI


def graph_min_angle(g: IsoradialGraph) -> float:
    """Smallest rhombus angle over dual edges."""
    return float(np.min(g.theta[g.dual_edges]))


# ---------------------------------------------------------------------------
# tables


@dataclass
class KernelRow:
    b: int
    w: int
    distance: float
    exact: complex
    asym: complex

    @property
    def abs_err(self) -> float:
        return abs(self.exact - self.asym)


def kernel_table(g: IsoradialGraph, pairs: Sequence[tuple[int, int]],
                 exact: ExactInverseKernel | None = None) -> list[KernelRow]:
    exact = exact or ExactInverseKernel(g)
    asym = AsymptoticInverseKernel(g, exact.rc)
    bs = [p[0] for p in pairs]
    ws = [p[1] for p in pairs]
    ex = exact.batch(bs, ws)
    fz = g.face_z() / g.scale_length
    rows = []
    for k, (b, w) in enumerate(pairs):
        d = abs(fz[b] - fz[w])
        a = asym(b, w) if d > 1e-12 else complex("nan")
        rows.append(KernelRow(int(b), int(w), float(d), complex(ex[k]), a))
    return rows


KERNEL_CSV_COLUMNS = ["b_id", "w_id", "distance", "re_exact", "im_exact", "re_asym", "im_asym", "abs_err"]


def kernel_table_csv(rows: Sequence[KernelRow]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(KERNEL_CSV_COLUMNS)
    for r in rows:
        wr.writerow([r.b, r.w, repr(r.distance), repr(r.exact.real), repr(r.exact.imag),
                     repr(r.asym.real), repr(r.asym.imag), repr(r.abs_err)])
    return buf.getvalue()
