"""Isoradial graphs, their rhombi and critical weights.

A graph is stored through its primal faces (ccw vertex cycles).  Dual
vertices sit at the circumcenters of the faces and carry a bipartite color;
the dual edge of an interior primal edge ``e`` shares its integer id ``e``.

Coordinates are kept in natural lattice units (unit edge length for the
triangular and square lattices, unit lozenge side for lozenge-with-diagonals
tilings).  ``radius`` records the common circumradius at mesh 1; anything
that needs unit rhombi divides positions by ``radius * mesh``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

WHITE = 0
BLACK = 1

SQRT3 = math.sqrt(3.0)


class GeometryError(ValueError):
    """Raised for malformed regions, tilings or graph documents."""


class BoundaryVertexError(GeometryError):
    """The dual face of a boundary vertex is not closed."""


# ---------------------------------------------------------------------------
# region descriptors


@dataclass(frozen=True)
class Parallelogram:
    """``width x height`` unit cells of a lattice, in lattice coordinates."""

    width: int
    height: int
    origin: tuple = (0, 0)


@dataclass(frozen=True)
class Hexagon:
    """Lattice hexagon of the triangular lattice with side lengths a, b, c."""

    a: int
    b: int
    c: int


@dataclass(frozen=True)
class TriangleSet:
    """Explicit set of triangular-lattice cells ``(i, j, up)``."""

    cells: frozenset


@dataclass(frozen=True)
class Rhombus:
    w: complex
    x: complex
    b: complex
    y: complex
    theta: float


# ---------------------------------------------------------------------------
# the graph


def _circumcenter(p: np.ndarray) -> np.ndarray:
    a, b, c = p[0], p[1], p[2]
    d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    if abs(d) < 1e-300:
        raise GeometryError("degenerate face: collinear vertices")
    sa, sb, sc = a @ a, b @ b, c @ c
    ux = (sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1])) / d
    uy = (sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0])) / d
    return np.array([ux, uy])


class IsoradialGraph:
    """Finite patch of a planar isoradial graph with bipartite dual.

    Parameters
    ----------
    vertices : (n, 2) array of primal vertex positions.
    faces : sequence of vertex-index tuples, each listed counterclockwise.
    colors : per-face color, ``WHITE`` or ``BLACK``.
    radius : common circumradius at mesh 1.
    mesh : scale factor already applied to ``vertices``.
    """

    def __init__(
        self,
        vertices,
        faces: Sequence[Sequence[int]],
        colors,
        radius: float,
        mesh: float = 1.0,
        name: str = "",
        edge_labels: dict | None = None,
        meta: dict | None = None,
    ):
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        self.faces = [tuple(int(v) for v in f) for f in faces]
        self.colors = np.asarray(colors, dtype=np.int8)
        if self.colors.shape != (len(self.faces),):
            raise GeometryError("one color per face is required")
        self.radius = float(radius)
        self.mesh = float(mesh)
        self.name = name
        self.meta = dict(meta or {})
        self._build_edges()
        self.circumcenters = np.array(
            [_circumcenter(self.vertices[list(f[:3])]) for f in self.faces]
        ).reshape(-1, 2)
        self._compute_angles()
        # labels are keyed by sorted vertex pairs so they survive re-indexing
        self.edge_labels = {}
        for key, lab in (edge_labels or {}).items():
            self.edge_labels[tuple(sorted(key))] = lab

    # -- construction helpers -------------------------------------------

    def _build_edges(self):
        index: dict[tuple[int, int], int] = {}
        ends: list[tuple[int, int]] = []
        left: list[int] = []
        right: list[int] = []
        face_edges: list[list[int]] = []
        for fid, f in enumerate(self.faces):
            fe = []
            k = len(f)
            if k < 3:
                raise GeometryError(f"face {fid} has fewer than 3 vertices")
            for i in range(k):
                a, b = f[i], f[(i + 1) % k]
                key = (a, b) if a < b else (b, a)
                eid = index.get(key)
                if eid is None:
                    eid = len(ends)
                    index[key] = eid
                    ends.append(key)
                    left.append(-1)
                    right.append(-1)
                # face is on the left of a -> b
                if a < b:
                    if left[eid] != -1:
                        raise GeometryError(f"edge {key} bounds two faces on one side")
                    left[eid] = fid
                else:
                    if right[eid] != -1:
                        raise GeometryError(f"edge {key} bounds two faces on one side")
                    right[eid] = fid
                fe.append(eid)
            face_edges.append(fe)
        self._edge_index = index
        self.edges = np.array(ends, dtype=np.int64).reshape(-1, 2)
        self.edge_left = np.array(left, dtype=np.int64)
        self.edge_right = np.array(right, dtype=np.int64)
        self.face_edges = face_edges
        self.interior = (self.edge_left >= 0) & (self.edge_right >= 0)
        n = len(self.vertices)
        inc: list[list[int]] = [[] for _ in range(n)]
        for eid, (a, b) in enumerate(ends):
            inc[a].append(eid)
            inc[b].append(eid)
        self.vertex_edges = inc
        vf: list[list[int]] = [[] for _ in range(n)]
        for fid, f in enumerate(self.faces):
            for v in f:
                vf[v].append(fid)
        self.vertex_faces = vf

    def _compute_angles(self):
        R = self.radius * self.mesh
        p = self.vertices
        seg = p[self.edges[:, 1]] - p[self.edges[:, 0]]
        length = np.hypot(seg[:, 0], seg[:, 1])
        # atan2 of half-length against the apothem; arcsin loses digits near pi/2
        f = np.where(self.edge_left >= 0, self.edge_left, self.edge_right)
        mid = 0.5 * (p[self.edges[:, 1]] + p[self.edges[:, 0]])
        apothem = np.hypot(*(self.circumcenters[f] - mid).T)
        self.theta = np.arctan2(0.5 * length, apothem)
        de = np.flatnonzero(self.interior)
        self.dual_edges = de
        cl, cr = self.colors[self.edge_left[de]], self.colors[self.edge_right[de]]
        # improper colorings are reported by validate_isoradial, not here
        self.bad_coloring = de[cl == cr]
        white = np.full(len(self.edges), -1, dtype=np.int64)
        black = np.full(len(self.edges), -1, dtype=np.int64)
        lw = cl == WHITE
        ok = cl != cr
        white[de] = np.where(ok, np.where(lw, self.edge_left[de], self.edge_right[de]), -1)
        black[de] = np.where(ok, np.where(lw, self.edge_right[de], self.edge_left[de]), -1)
        self.edge_white = white
        self.edge_black = black

    # -- basic views ------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def scale_length(self) -> float:
        """Circumradius of the current embedding."""
        return self.radius * self.mesh

    @property
    def whites(self) -> np.ndarray:
        return np.flatnonzero(self.colors == WHITE)

    @property
    def blacks(self) -> np.ndarray:
        return np.flatnonzero(self.colors == BLACK)

    def vertex_z(self) -> np.ndarray:
        return self.vertices[:, 0] + 1j * self.vertices[:, 1]

    def face_z(self) -> np.ndarray:
        return self.circumcenters[:, 0] + 1j * self.circumcenters[:, 1]

    def edge_id(self, a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        try:
            return self._edge_index[key]
        except KeyError:
            raise GeometryError(f"no primal edge between {a} and {b}") from None

    def has_edge(self, a: int, b: int) -> bool:
        return ((a, b) if a < b else (b, a)) in self._edge_index

    def neighbors(self, v: int) -> list[int]:
        out = []
        for e in self.vertex_edges[v]:
            a, b = self.edges[e]
            out.append(int(b if a == v else a))
        return out

    def is_interior_vertex(self, v: int) -> bool:
        return all(self.interior[e] for e in self.vertex_edges[v])

    def interior_vertices(self) -> np.ndarray:
        return np.array(
            [v for v in range(self.n_vertices) if self.vertex_edges[v] and self.is_interior_vertex(v)],
            dtype=np.int64,
        )

    def edge_label(self, e: int):
        a, b = self.edges[e]
        return self.edge_labels.get((int(a), int(b)))

    def black_on_left(self, u: int, v: int) -> bool:
        """True when the black face (or absent white face) lies left of u -> v."""
        e = self.edge_id(u, v)
        a, _ = self.edges[e]
        lf, rf = (self.edge_left[e], self.edge_right[e]) if a == u else (self.edge_right[e], self.edge_left[e])
        if lf >= 0:
            return bool(self.colors[lf] == BLACK)
        return bool(self.colors[rf] == WHITE)

    def nearest_vertex(self, point, candidates=None) -> int:
        z = complex(point[0], point[1]) if not isinstance(point, complex) else point
        vz = self.vertex_z()
        if candidates is None:
            return int(np.argmin(np.abs(vz - z)))
        candidates = np.asarray(candidates)
        return int(candidates[np.argmin(np.abs(vz[candidates] - z))])

    def dual_edge_between(self, w: int, b: int) -> int:
        for e in self.face_edges[w]:
            if self.interior[e] and self.edge_black[e] == b:
                return int(e)
        raise GeometryError(f"faces {w} and {b} are not adjacent")

    def __repr__(self):
        return (
            f"IsoradialGraph({self.name!r}, vertices={self.n_vertices}, faces={self.n_faces}, "
            f"dual_edges={len(self.dual_edges)}, mesh={self.mesh:g})"
        )

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        fz = self.circumcenters
        return {
            "name": self.name,
            "mesh": self.mesh,
            "radius": self.radius,
            "primal_vertices": [
                {"id": i, "x": float(x), "y": float(y)} for i, (x, y) in enumerate(self.vertices)
            ],
            "faces": [list(f) for f in self.faces],
            "primal_edges": [
                {"id": i, "u": int(a), "v": int(b)} for i, (a, b) in enumerate(self.edges)
            ],
            "dual_vertices": [
                {
                    "id": i,
                    "x": float(fz[i, 0]),
                    "y": float(fz[i, 1]),
                    "color": "black" if self.colors[i] == BLACK else "white",
                }
                for i in range(self.n_faces)
            ],
            "dual_edges": [
                {
                    "id": int(e),
                    "primal_edge": int(e),
                    "white": int(self.edge_white[e]),
                    "black": int(self.edge_black[e]),
                    **({"type": self.edge_label(e)} if self.edge_label(e) else {}),
                }
                for e in self.dual_edges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=None, default=_json_float)

    @classmethod
    def from_dict(cls, doc: dict) -> "IsoradialGraph":
        try:
            verts = sorted(doc["primal_vertices"], key=lambda r: r["id"])
            pos = np.array([[r["x"], r["y"]] for r in verts], dtype=float)
            faces = doc["faces"]
            colors = [
                BLACK if r["color"] == "black" else WHITE
                for r in sorted(doc["dual_vertices"], key=lambda r: r["id"])
            ]
            labels = {}
            edges = {r["id"]: (r["u"], r["v"]) for r in doc.get("primal_edges", [])}
            for r in doc.get("dual_edges", []):
                if "type" in r and r["primal_edge"] in edges:
                    labels[edges[r["primal_edge"]]] = r["type"]
            return cls(
                pos, faces, colors, doc["radius"], doc.get("mesh", 1.0), doc.get("name", ""), labels
            )
        except (KeyError, TypeError) as exc:
            raise GeometryError(f"malformed graph document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "IsoradialGraph":
        return cls.from_dict(json.loads(text))


def _json_float(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x))


# ---------------------------------------------------------------------------
# builders


def _tri_pos(i: int, j: int) -> tuple[float, float]:
    return (i + 0.5 * j, 0.5 * SQRT3 * j)


def triangle_cells(extent) -> list[tuple[int, int, bool]]:
    """Cells ``(i, j, up)`` of the triangular lattice covered by ``extent``."""
    if isinstance(extent, TriangleSet):
        return sorted(extent.cells)
    if isinstance(extent, Parallelogram):
        if extent.width <= 0 or extent.height <= 0:
            raise GeometryError("degenerate extent")
        i0, j0 = extent.origin
        return [(i0 + i, j0 + j, up) for j in range(extent.height) for i in range(extent.width)
                for up in (True, False)]
    if isinstance(extent, Hexagon):
        a, b, c = extent.a, extent.b, extent.c
        if min(a, b, c) <= 0:
            raise GeometryError("degenerate extent")
        # corners, walking ccw from the origin along 0, 60, 120, ... degrees
        steps = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]
        lengths = [a, b, c, a, b, c]
        corners = [(0, 0)]
        for (di, dj), n in zip(steps, lengths):
            ci, cj = corners[-1]
            corners.append((ci + n * di, cj + n * dj))
        poly = np.array([_tri_pos(*c) for c in corners[:-1]])
        cells = []
        lo_j, hi_j = -1, b + c + 1
        for j in range(lo_j, hi_j):
            for i in range(-(b + c) - 1, a + b + 1):
                for up in (True, False):
                    cen = _cell_centroid(i, j, up)
                    if _inside_convex(poly, cen):
                        cells.append((i, j, up))
        return cells
    if isinstance(extent, tuple) and len(extent) == 2:
        return triangle_cells(Parallelogram(*extent))
    raise GeometryError(f"unsupported extent {extent!r}")


def _cell_vertices(i: int, j: int, up: bool):
    if up:
        return [(i, j), (i + 1, j), (i, j + 1)]
    return [(i + 1, j), (i + 1, j + 1), (i, j + 1)]


def _cell_centroid(i, j, up):
    pts = np.array([_tri_pos(*p) for p in _cell_vertices(i, j, up)])
    return pts.mean(axis=0)


def _inside_convex(poly: np.ndarray, p: np.ndarray, tol: float = 1e-9) -> bool:
    q = np.roll(poly, -1, axis=0)
    cross = (q[:, 0] - poly[:, 0]) * (p[1] - poly[:, 1]) - (q[:, 1] - poly[:, 1]) * (p[0] - poly[:, 0])
    return bool(np.all(cross >= -tol))


def build_triangular_lattice(extent, mesh: float = 1.0) -> IsoradialGraph:
    """Patch of the equilateral triangular lattice; its dual is the honeycomb.

    Up-pointing triangles are white, down-pointing ones black.  Edge length
    is ``mesh``; every rhombus angle is pi/3 and every critical weight sqrt(3).
    """
    cells = triangle_cells(extent)
    if not cells:
        raise GeometryError("degenerate extent")
    vid: dict[tuple[int, int], int] = {}
    faces, colors = [], []
    for i, j, up in cells:
        f = []
        for p in _cell_vertices(i, j, up):
            if p not in vid:
                vid[p] = len(vid)
            f.append(vid[p])
        faces.append(f)
        colors.append(WHITE if up else BLACK)
    keys = sorted(vid, key=vid.get)
    pos = np.array([_tri_pos(*k) for k in keys]) * mesh
    g = IsoradialGraph(pos, faces, colors, radius=1.0 / SQRT3, mesh=mesh, name="triangular")
    g.meta["lattice"] = "tri"
    g.meta["vertex_keys"] = keys
    g.meta["cells"] = cells
    return g


def build_square_lattice(extent, mesh: float = 1.0) -> IsoradialGraph:
    """``width x height`` unit squares; checkerboard dual coloring."""
    if isinstance(extent, tuple):
        extent = Parallelogram(*extent)
    if not isinstance(extent, Parallelogram) or extent.width <= 0 or extent.height <= 0:
        raise GeometryError("degenerate extent")
    W, H = extent.width, extent.height
    i0, j0 = extent.origin
    vid = {}
    faces, colors = [], []
    for j in range(j0, j0 + H):
        for i in range(i0, i0 + W):
            f = []
            for p in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)):
                if p not in vid:
                    vid[p] = len(vid)
                f.append(vid[p])
            faces.append(f)
            colors.append(WHITE if (i + j) % 2 == 0 else BLACK)
    keys = sorted(vid, key=vid.get)
    pos = np.array(keys, dtype=float) * mesh
    g = IsoradialGraph(pos, faces, colors, radius=1.0 / math.sqrt(2.0), mesh=mesh, name="square")
    g.meta["lattice"] = "square"
    g.meta["vertex_keys"] = keys
    return g


def two_color_faces(faces: Sequence[Sequence[int]], root: int = 0) -> np.ndarray:
    """Proper 2-coloring of the face adjacency graph (BFS from ``root``)."""
    owner: dict[tuple[int, int], list[int]] = {}
    for fid, f in enumerate(faces):
        k = len(f)
        for i in range(k):
            a, b = f[i], f[(i + 1) % k]
            owner.setdefault((min(a, b), max(a, b)), []).append(fid)
    adj: list[list[int]] = [[] for _ in faces]
    for fs in owner.values():
        if len(fs) == 2:
            adj[fs[0]].append(fs[1])
            adj[fs[1]].append(fs[0])
    color = np.full(len(faces), -1, dtype=np.int8)
    for start in [root] + list(range(len(faces))):
        if color[start] >= 0:
            continue
        color[start] = WHITE
        stack = [start]
        while stack:
            f = stack.pop()
            for g in adj[f]:
                if color[g] < 0:
                    color[g] = 1 - color[f]
                    stack.append(g)
                elif color[g] == color[f]:
                    raise GeometryError("face adjacency graph is not bipartite")
    return color


def build_lozenge_with_diagonals(lz) -> IsoradialGraph:
    """Draw both diagonals in every lozenge of ``lz``.

    Each lozenge splits into four right triangles with hypotenuse equal to the
    lozenge side; the circumradius is half the side.  Dual edges are labelled
    by the quadri-tile they represent:

    * ``I``   glued along the short leg (rhombus angle pi/6)
    * ``II``  glued along the long leg (pi/3)
    * ``III`` glued along the hypotenuse, mirror-symmetric kite (pi/2)
    * ``IV``  glued along the hypotenuse, point-symmetric rectangle (pi/2)
    """
    lozenges = lz.lozenges()
    if not lozenges:
        raise GeometryError("malformed tiling: no lozenges")
    T = lz.graph
    tv = T.vertices
    vid: dict[int, int] = {}
    pos: list[np.ndarray] = []

    def tvert(v):
        if v not in vid:
            vid[v] = len(pos)
            pos.append(tv[v])
        return vid[v]

    faces = []
    obtuse_of: dict[int, tuple[int, int]] = {}
    centers = []
    for (p, q, a, c) in lozenges:
        P, Q, A, C = tvert(p), tvert(q), tvert(a), tvert(c)
        O = len(pos)
        pos.append(0.5 * (tv[p] + tv[q]))
        centers.append(O)
        for s, t in ((A, P), (P, C), (C, Q), (Q, A)):
            so, to, oo = pos[s], pos[t], pos[O]
            cr = (so[0] - oo[0]) * (to[1] - oo[1]) - (so[1] - oo[1]) * (to[0] - oo[0])
            f = (O, s, t) if cr > 0 else (O, t, s)
            obtuse_of[len(faces)] = (P, Q)
            faces.append(f)
    pos_arr = np.array(pos)
    colors = two_color_faces(faces)
    labels: dict[tuple[int, int], str] = {}
    center_set = set(centers)
    owner: dict[tuple[int, int], list[int]] = {}
    for fid, f in enumerate(faces):
        for i in range(3):
            a, b = f[i], f[(i + 1) % 3]
            owner.setdefault((min(a, b), max(a, b)), []).append(fid)
    for key, fs in owner.items():
        if len(fs) != 2:
            continue
        a, b = key
        if a in center_set or b in center_set:
            o, t = (a, b) if a in center_set else (b, a)
            # a leg: short when t is an obtuse corner of its lozenge
            labels[key] = "I" if t in obtuse_of[fs[0]] else "II"
        else:
            # hypotenuse shared by two lozenges; compare where the pi/3 corners sit
            e0 = set(obtuse_of[fs[0]]) & {a, b}
            e1 = set(obtuse_of[fs[1]]) & {a, b}
            labels[key] = "III" if e0 == e1 else "IV"
    g = IsoradialGraph(pos_arr, faces, colors, radius=0.5 * T.mesh, mesh=1.0, name="lozenge-diag",
                       edge_labels=labels)
    # keep mesh semantics of the underlying triangular lattice
    g.radius = 0.5
    g.mesh = T.mesh
    g.meta["lattice"] = "lozenge-diag"
    g.meta["t_vertex"] = dict(vid)
    g.meta["centers"] = centers
    g.meta["lozenges"] = lozenges
    return g


def build_periodic_lozenge_with_diagonals(extent, mesh: float = 1.0) -> IsoradialGraph:
    """Lozenge-with-diagonals graph of the single-orientation tiling of a parallelogram."""
    if isinstance(extent, tuple):
        extent = Parallelogram(*extent)
    T = build_triangular_lattice(extent, mesh)
    return build_lozenge_with_diagonals(LozengeTiling.unique_parallelogram_tiling(T))


class LozengeTiling:
    """Lozenge tiling stored as a perfect matching of a triangular patch's dual.

    ``edges`` holds primal edge ids of ``graph``; each one is the short
    diagonal of a lozenge made of the two triangles on either side.
    """

    def __init__(self, graph: IsoradialGraph, edges):
        self.graph = graph
        self.edges = np.asarray(sorted(int(e) for e in edges), dtype=np.int64)
        self._check()

    def _check(self):
        g = self.graph
        if np.any(~g.interior[self.edges]):
            raise GeometryError("malformed tiling: boundary edge used as lozenge diagonal")
        covered = np.zeros(g.n_faces, dtype=np.int64)
        np.add.at(covered, g.edge_left[self.edges], 1)
        np.add.at(covered, g.edge_right[self.edges], 1)
        if np.any(covered != 1):
            raise GeometryError("malformed tiling: triangles not covered exactly once")

    def lozenges(self) -> list[tuple[int, int, int, int]]:
        """``(p, q, a, c)``: obtuse corners p, q and acute corners a (white side), c."""
        g = self.graph
        out = []
        for e in self.edges:
            p, q = (int(v) for v in g.edges[e])
            w, b = g.edge_white[e], g.edge_black[e]
            a = next(v for v in g.faces[w] if v != p and v != q)
            c = next(v for v in g.faces[b] if v != p and v != q)
            out.append((p, q, a, c))
        return out

    def __len__(self):
        return len(self.edges)

    def __eq__(self, other):
        return isinstance(other, LozengeTiling) and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash(self.edges.tobytes())

    @classmethod
    def unique_parallelogram_tiling(cls, T: IsoradialGraph) -> "LozengeTiling":
        """Pair each up triangle with the down triangle of the same cell."""
        cells = T.meta.get("cells")
        if cells is None:
            raise GeometryError("not a triangular lattice patch")
        index = {c: k for k, c in enumerate(cells)}
        edges = []
        for k, (i, j, up) in enumerate(cells):
            if not up:
                continue
            partner = index.get((i, j, False))
            if partner is None:
                raise GeometryError("region is not a union of unit cells")
            shared = set(T.faces[k]) & set(T.faces[partner])
            a, b = shared
            edges.append(T.edge_id(a, b))
        return cls(T, edges)


# ---------------------------------------------------------------------------
# rhombi, weights, validation


def _check_dual_edge(g: IsoradialGraph, e: int):
    if not (0 <= e < len(g.edges)) or not g.interior[e]:
        raise GeometryError(f"unknown dual edge {e}")


def rhombus_of(g: IsoradialGraph, e: int) -> Rhombus:
    """Rhombus ``w, x, b, y`` (counterclockwise) of dual edge ``e``."""
    _check_dual_edge(g, e)
    w, b = g.edge_white[e], g.edge_black[e]
    u, v = g.edges[e]
    # black face left of y -> x
    if g.edge_left[e] == b:
        y, x = u, v
    else:
        y, x = v, u
    fz, vz = g.face_z(), g.vertex_z()
    return Rhombus(w=fz[w], x=vz[x], b=fz[b], y=vz[y], theta=float(g.theta[e]))


def rhombus_angle(g: IsoradialGraph, e: int) -> float:
    _check_dual_edge(g, e)
    return float(g.theta[e])


def critical_weight(g: IsoradialGraph, e: int) -> float:
    _check_dual_edge(g, e)
    return 2.0 * math.sin(g.theta[e])


def dual_face_area(g: IsoradialGraph, v: int) -> float:
    """Area of the dual face ``v*`` (polygon of circumcenters around ``v``)."""
    if not g.vertex_edges[v] or not g.is_interior_vertex(v):
        raise BoundaryVertexError(f"vertex {v} is on the boundary")
    fs = g.vertex_faces[v]
    c = g.circumcenters[fs]
    # order faces by the direction of their centroid seen from v
    cen = np.array([g.vertices[list(g.faces[f])].mean(axis=0) for f in fs])
    ang = np.arctan2(cen[:, 1] - g.vertices[v, 1], cen[:, 0] - g.vertices[v, 0])
    c = c[np.argsort(ang)]
    x, y = c[:, 0], c[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def vertex_areas(g: IsoradialGraph, vertices=None) -> np.ndarray:
    """Dual face areas for ``vertices`` (NaN on the boundary)."""
    vs = range(g.n_vertices) if vertices is None else vertices
    out = []
    for v in vs:
        try:
            out.append(dual_face_area(g, int(v)))
        except BoundaryVertexError:
            out.append(np.nan)
    return np.array(out)


def scale(g: IsoradialGraph, eps: float) -> IsoradialGraph:
    """Copy of ``g`` with every length multiplied by ``eps``."""
    if not eps > 0:
        raise GeometryError("scale factor must be positive")
    h = IsoradialGraph(
        g.vertices * eps, g.faces, g.colors, g.radius, g.mesh * eps, g.name, dict(g.edge_labels)
    )
    h.meta = {k: v for k, v in g.meta.items() if not k.startswith("_")}
    return h


@dataclass
class ValidationReport:
    passed: bool
    max_radius_deviation: float
    bad_faces: list = field(default_factory=list)
    outside_faces: list = field(default_factory=list)
    bad_edges: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    def __bool__(self):
        return self.passed


def validate_isoradial(g: IsoradialGraph, tol: float = 1e-9) -> ValidationReport:
    """Check circumradii, circumcenter placement and bipartiteness of the dual."""
    R = g.radius * g.mesh
    worst = 0.0
    bad_faces, outside = [], []
    msgs = []
    for fid, f in enumerate(g.faces):
        p = g.vertices[list(f)]
        try:
            c = _circumcenter(p)
        except GeometryError:
            bad_faces.append(fid)
            msgs.append(f"face {fid}: degenerate")
            continue
        d = np.hypot(*(p - c).T)
        dev = float(np.max(np.abs(d - R)) / R)
        worst = max(worst, dev)
        if dev > tol:
            bad_faces.append(fid)
            msgs.append(f"face {fid}: circumradius deviation {dev:.3g}")
            continue
        if not _inside_convex(p, c, tol=tol * R * R):
            outside.append(fid)
            msgs.append(f"face {fid}: circumcenter outside the face")
    bad_edges = []
    de = g.dual_edges
    same = g.colors[g.edge_left[de]] == g.colors[g.edge_right[de]]
    for e in de[same]:
        bad_edges.append(int(e))
        msgs.append(f"dual edge {int(e)}: endpoints share a color")
    passed = not (bad_faces or outside or bad_edges)
    return ValidationReport(passed, worst, bad_faces, outside, bad_edges, msgs)
