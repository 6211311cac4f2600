"""Continuum side: Green function, Wick pairings, Dirichlet energy.

Also holds the discrete field functional ``H phi`` and the harness that
compares lattice moments with their Gaussian free field limits.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import mpmath
import numpy as np
from scipy.special import roots_legendre

from .geometry import IsoradialGraph, dual_face_area, vertex_areas

INV_2PI = 1.0 / (2.0 * math.pi)


def _c(p) -> complex:
    if isinstance(p, (complex, float, int, np.number)):
        return complex(p)
    return complex(p[0], p[1])


def green(x, y) -> float:
    """Whole-plane Green function ``-(1/2pi) log|x - y|``."""
    d = abs(_c(x) - _c(y))
    if d == 0:
        raise ValueError("green(x, x) is undefined")
    return -INV_2PI * math.log(d)


def four_point_g(u, v, u2, v2) -> float:
    """``g(v, v2) + g(u, u2) - g(v, u2) - g(u, v2)``."""
    pts = [_c(p) for p in (u, v, u2, v2)]
    if len({(p.real, p.imag) for p in pts}) < 4:
        raise ValueError("the four points must be distinct")
    u, v, u2, v2 = pts
    return green(v, v2) + green(u, u2) - green(v, u2) - green(u, v2)


def cross_ratio_prediction(u, v, u2, v2) -> float:
    """``-(1/2pi^2) log |(v - v2)(u - u2) / ((v - u2)(u - v2))|``."""
    u, v, u2, v2 = (_c(p) for p in (u, v, u2, v2))
    return -math.log(abs((v - v2) * (u - u2) / ((v - u2) * (u - v2)))) / (2.0 * math.pi**2)


def pairings(items: Sequence) -> Iterator[list[tuple]]:
    """All perfect pairings of ``items`` ((k-1)!! of them for even k)."""
    items = list(items)
    if not items:
        yield []
        return
    if len(items) % 2:
        return
    a = items[0]
    for k in range(1, len(items)):
        rest = items[1:k] + items[k + 1 :]
        for p in pairings(rest):
            yield [(a, items[k])] + p


def wick_moment(k: int, endpoints: Sequence[tuple]) -> float:
    """Limit of ``E prod_{i<=k} (h(v_i) - h(u_i))``: zero for odd k, else a pairing sum."""
    if k < 1:
        raise ValueError("k must be positive")
    if len(endpoints) < k:
        raise ValueError("need k endpoint pairs")
    if k % 2:
        return 0.0
    total = 0.0
    for tau in pairings(list(range(k))):
        prod = 1.0
        for i, j in tau:
            (ui, vi), (uj, vj) = endpoints[i], endpoints[j]
            prod *= four_point_g(ui, vi, uj, vj) / math.pi
        total += prod
    return total


def cauchy_zero_diag_det(x: Sequence, digits: int = 40) -> complex | float:
    """``det M`` with ``M_ii = 0`` and ``M_ij = 1/(x_i - x_j)``.

    Evaluated in ``digits``-digit arithmetic: the entries span many orders
    of magnitude for close points and double-precision LU leaves residues far
    above the size of the (exactly zero) odd-order determinant.
    """
    x = np.asarray(x)
    k = len(x)
    if k == 0:
        return 1.0
    if len(set(x.tolist())) != k:
        raise ValueError("points must be distinct")
    with mpmath.workdps(digits):
        xs = [mpmath.mpc(complex(v)) for v in x]
        M = mpmath.matrix(k, k)
        for i in range(k):
            for j in range(k):
                if i != j:
                    M[i, j] = 1 / (xs[i] - xs[j])
        val = complex(mpmath.det(M))
    return val if np.iscomplexobj(x) else float(val.real)


def pairing_sum(x: Sequence) -> complex | float:
    """``sum_tau prod 1/(x_a - x_b)^2`` over perfect pairings; zero for odd k."""
    x = list(x)
    if len(x) % 2:
        return 0.0
    total = 0.0
    for tau in pairings(list(range(len(x)))):
        total += math.prod(1.0 / (x[a] - x[b]) ** 2 for a, b in tau)
    return total


# ---------------------------------------------------------------------------
# test functions


def bump(r):
    """``exp(-1/(1 - r^2))`` on ``r < 1``, zero outside."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    m = r < 1.0
    out[m] = np.exp(-1.0 / (1.0 - r[m] ** 2))
    return out


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(n: int, a: float = 0.0, b: float = 1.0):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = roots_legendre(n)
    t, w = _GL_CACHE[n]
    return 0.5 * (b - a) * t + 0.5 * (b + a), 0.5 * (b - a) * w


def bump_mass_within(r, n: int = 96) -> np.ndarray:
    """``int_{|y| < r} bump(|y|) dy`` for the unit-radius bump."""
    r = np.minimum(np.asarray(r, dtype=float), 1.0)
    t, w = _gauss(n)
    s = r[..., None] * t
    return 2.0 * math.pi * r * np.sum(w * bump(s) * s, axis=-1)


def bump_tail_log_moment(r, n: int = 96) -> np.ndarray:
    """``int_{|y| > r} log|y| bump(|y|) dy``."""
    r = np.minimum(np.asarray(r, dtype=float), 1.0)
    t, w = _gauss(n)
    s = r[..., None] + (1.0 - r[..., None]) * t
    return 2.0 * math.pi * (1.0 - r) * np.sum(w * np.log(s) * bump(s) * s, axis=-1)


BUMP_MASS = float(bump_mass_within(1.0, 400))


@dataclass(frozen=True)
class Bump:
    center: complex
    radius: float = 1.0
    amplitude: float = 1.0

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.amplitude * bump(np.abs(z - self.center) / self.radius)

    @property
    def mass(self) -> float:
        return self.amplitude * self.radius**2 * BUMP_MASS

    def potential(self, z) -> np.ndarray:
        """``int g(z, y) bump(y) dy`` (radial, by Newton's theorem)."""
        z = np.asarray(z, dtype=complex)
        a = self.radius
        r = np.abs(z - self.center) / a
        rs = np.maximum(r, 1e-300)
        inner = bump_mass_within(r) * np.log(rs * a)
        outer = bump_tail_log_moment(r) + np.log(a) * (BUMP_MASS - bump_mass_within(r))
        return -INV_2PI * self.amplitude * a**2 * (inner + outer)

    def potential_gradient(self, z) -> np.ndarray:
        """Gradient of :meth:`potential` as a complex number ``dx + i dy``."""
        z = np.asarray(z, dtype=complex)
        d = z - self.center
        r = np.abs(d)
        enclosed = self.amplitude * self.radius**2 * bump_mass_within(r / self.radius)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(r > 0, -INV_2PI * enclosed * d / np.maximum(r, 1e-300) ** 2, 0.0)
        return g


@dataclass(frozen=True)
class TestFunction:
    """Signed sum of radial bumps with pairwise disjoint supports."""

    __test__ = False  # keep pytest from collecting the class by name

    bumps: tuple

    @classmethod
    def standard(cls, separation: float = 2.0, radius: float = 1.0) -> "TestFunction":
        """``e (psi(x - c) - psi(x + c))`` with ``c = (separation, 0)``; unit maximum."""
        amp = math.e
        return cls((Bump(complex(separation, 0), radius, amp), Bump(complex(-separation, 0), radius, -amp)))

    def __call__(self, x, y=None):
        z = np.asarray(x, dtype=complex) if y is None else np.asarray(x) + 1j * np.asarray(y)
        return sum(b(z) for b in self.bumps)

    def potential(self, z):
        return sum(b.potential(z) for b in self.bumps)

    def potential_gradient(self, z):
        return sum(b.potential_gradient(z) for b in self.bumps)

    @property
    def mass(self) -> float:
        return sum(b.mass for b in self.bumps)

    def bounding_box(self) -> tuple[float, float, float, float]:
        xs = [b.center.real for b in self.bumps]
        ys = [b.center.imag for b in self.bumps]
        r = max(b.radius for b in self.bumps)
        return min(xs) - r, min(ys) - r, max(xs) + r, max(ys) + r

    def scaled(self, factor: float) -> "TestFunction":
        return TestFunction(tuple(Bump(b.center, b.radius, b.amplitude * factor) for b in self.bumps))


# ---------------------------------------------------------------------------
# Dirichlet energy


def _disk_nodes(center: complex, radius: float, nr: int, na: int):
    r, wr = _gauss(nr, 0.0, radius)
    a = np.arange(na) * (2.0 * math.pi / na)
    z = center + r[:, None] * np.exp(1j * a)[None, :]
    w = (wr * r)[:, None] * np.full(na, 2.0 * math.pi / na)[None, :]
    return z.ravel(), w.ravel()


def _self_term(b: Bump, c: Bump, nr: int, na: int, chunk: int = 64) -> float:
    """``int int g(x, y) b(x) c(y)`` for bumps sharing a support, polar around x."""
    xs, wx = _disk_nodes(b.center, b.radius, nr, na)
    fx = b(xs)
    keep = fx != 0
    xs, wx, fx = xs[keep], wx[keep], fx[keep]
    # rho = rho_max * s^3 removes the rho log rho singularity at the origin
    s, ws = _gauss(nr)
    al = np.arange(na) * (2.0 * math.pi / na)
    e = np.exp(1j * al)
    total = 0.0
    for i0 in range(0, len(xs), chunk):
        x = xs[i0 : i0 + chunk, None]
        d = x - c.center
        proj = (np.conj(d) * e[None, :]).real
        dd = np.abs(d) ** 2
        rmax = -proj + np.sqrt(np.maximum(proj**2 + c.radius**2 - dd, 0.0))  # (m, na)
        rho = rmax[:, :, None] * s[None, None, :] ** 3
        jac = rmax[:, :, None] * 3.0 * s[None, None, :] ** 2
        y = x[:, :, None] + rho * e[None, :, None]
        integrand = np.log(np.maximum(rho, 1e-300)) * rho * jac * c(y)
        inner = -INV_2PI * (2.0 * math.pi / na) * np.einsum("mak,k->m", integrand, ws)
        total += float(np.sum(wx[i0 : i0 + chunk] * fx[i0 : i0 + chunk] * inner))
    return total


def _cross_term(b: Bump, c: Bump, nr: int, na: int) -> float:
    xs, wx = _disk_nodes(b.center, b.radius, nr, na)
    ys, wy = _disk_nodes(c.center, c.radius, nr, na)
    fx, fy = b(xs) * wx, c(ys) * wy
    kx, ky = fx != 0, fy != 0
    xs, fx, ys, fy = xs[kx], fx[kx], ys[ky], fy[ky]
    total = 0.0
    step = max(1, int(4e6 // max(1, len(ys))))
    for i0 in range(0, len(xs), step):
        G = np.log(np.abs(xs[i0 : i0 + step, None] - ys[None, :]))
        total += float(fx[i0 : i0 + step] @ G @ fy)
    return -INV_2PI * total


def _overlap(b: Bump, c: Bump) -> bool:
    return abs(b.center - c.center) < b.radius + c.radius


def dirichlet_energy(phi1: TestFunction, phi2: TestFunction | None = None, n: int = 24,
                     return_error: bool = False):
    """``G(phi1, phi2) = int int g(x, y) phi1(x) phi2(y) dx dy``.

    Tensorized Gauss-Legendre (radius) by trapezoid (angle) quadrature; the
    inner integral is taken in polar coordinates around ``x`` whenever the
    two supports meet, which removes the logarithmic singularity.  The
    estimate is repeated with doubled node counts and the change returned as
    an error estimate when ``return_error`` is set.
    """
    phi2 = phi1 if phi2 is None else phi2

    def run(nr, na):
        total = 0.0
        for b in phi1.bumps:
            for c in phi2.bumps:
                total += _self_term(b, c, nr, na) if _overlap(b, c) else _cross_term(b, c, nr, na)
        return total

    coarse = run(n, 2 * n)
    fine = run(2 * n, 4 * n)
    if return_error:
        return fine, abs(fine - coarse)
    return fine


def dirichlet_energy_newton(phi1: TestFunction, phi2: TestFunction | None = None, n: int = 200) -> float:
    """Same form via radial potentials: ``int phi1 (g * phi2)``."""
    phi2 = phi1 if phi2 is None else phi2
    total = 0.0
    for b in phi1.bumps:
        z, w = _disk_nodes(b.center, b.radius, n, 2 * n)
        total += float(np.sum(w * b(z) * phi2.potential(z)))
    return total


def dirichlet_energy_gradient(phi1: TestFunction, phi2: TestFunction | None = None,
                              nr: int = 160, na: int = 256) -> float:
    """Gradient form ``int grad f1 . grad f2`` with ``f_i = g * phi_i``.

    Polar grid around the centroid of the supports; ``r`` in ``[0, R]`` by
    Gauss-Legendre on rings through each support edge, and ``[R, inf)`` via
    ``r = R / s`` so the dipole tail is integrated exactly.
    """
    phi2 = phi1 if phi2 is None else phi2
    cs = [b.center for b in phi1.bumps + phi2.bumps]
    c0 = complex(np.mean(cs))
    reach = max(abs(b.center - c0) + b.radius for b in phi1.bumps + phi2.bumps)
    # break points in radius where the integrand is only C^infinity-but-flat
    brk = sorted({0.0, reach} | {max(0.0, abs(b.center - c0) - b.radius) for b in phi1.bumps + phi2.bumps}
                 | {abs(b.center - c0) for b in phi1.bumps + phi2.bumps})
    al = np.arange(na) * (2.0 * math.pi / na)
    e = np.exp(1j * al)
    total = 0.0
    for a, bnd in zip(brk[:-1], brk[1:]):
        if bnd - a < 1e-12:
            continue
        r, wr = _gauss(nr, a, bnd)
        z = c0 + r[:, None] * e[None, :]
        g1 = phi1.potential_gradient(z)
        g2 = g1 if phi2 is phi1 else phi2.potential_gradient(z)
        dot = (g1 * np.conj(g2)).real
        total += float(np.sum((wr * r)[:, None] * dot) * (2.0 * math.pi / na))
    s, ws = _gauss(nr, 0.0, 1.0)
    s = s[s > 0]
    ws = ws[-len(s):]
    r = reach / s
    z = c0 + r[:, None] * e[None, :]
    g1 = phi1.potential_gradient(z)
    g2 = g1 if phi2 is phi1 else phi2.potential_gradient(z)
    dot = (g1 * np.conj(g2)).real
    jac = reach / s**2
    total += float(np.sum((ws * r * jac)[:, None] * dot) * (2.0 * math.pi / na))
    return total


# ---------------------------------------------------------------------------
# discrete functionals


def functional_weights(g: IsoradialGraph, phi: TestFunction, correct: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Vertices in the support of ``phi`` and weights ``area(v*) phi(v)``.

    With ``correct`` the negative weights are rescaled so the weights sum to
    zero exactly, keeping the support unchanged.
    """
    vals = phi(g.vertex_z())
    idx = np.flatnonzero(vals != 0)
    area = vertex_areas(g, idx)
    if np.any(np.isnan(area)):
        raise ValueError("support of phi reaches the boundary of the region")
    c = area * vals[idx]
    if correct:
        pos, neg = c[c > 0].sum(), -c[c < 0].sum()
        if neg > 0:
            c = np.where(c < 0, c * pos / neg, c)
    return idx, c


def discrete_mean(g: IsoradialGraph, phi: TestFunction) -> float:
    _, c = functional_weights(g, phi, correct=False)
    return float(c.sum())


def field_functional(h, phi: TestFunction, g: IsoradialGraph | None = None, weights=None,
                     correct: bool = True) -> float:
    """``H phi = sum_v area(v*) phi(v) h(v)`` over the support of ``phi``.

    ``weights`` may be a constant (e.g. ``sqrt(3)/2 * mesh**2``) to replace the
    dual face areas, as done for the second quadri height.
    """
    g = h.graph if g is None else g
    vals = h.values if hasattr(h, "values") else np.asarray(h)
    if weights is None:
        idx, c = functional_weights(g, phi, correct)
    else:
        pv = phi(g.vertex_z())
        idx = np.flatnonzero(pv != 0)
        c = weights * pv[idx]
        if correct:
            pos, neg = c[c > 0].sum(), -c[c < 0].sum()
            if neg > 0:
                c = np.where(c < 0, c * pos / neg, c)
    return float(np.dot(c, vals[idx]))


# ---------------------------------------------------------------------------
# report


@dataclass
class ComparisonRow:
    quantity: str
    mesh: float
    estimate: float
    std_error: float
    target: float
    note: str = ""

    @property
    def abs_error(self) -> float:
        return abs(self.estimate - self.target)

    @property
    def rel_error(self) -> float:
        return self.abs_error / abs(self.target) if self.target else float("nan")


@dataclass
class ComparisonReport:
    rows: list = field(default_factory=list)
    header: dict = field(default_factory=dict)

    def add(self, *args, **kw):
        self.rows.append(ComparisonRow(*args, **kw))

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.header.items():
            buf.write(f"# {k}: {v}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["quantity", "mesh", "estimate", "std_error", "target", "abs_error", "rel_error", "note"])
        for r in self.rows:
            wr.writerow([r.quantity, repr(r.mesh), repr(r.estimate), repr(r.std_error), repr(r.target),
                         repr(r.abs_error), repr(r.rel_error), r.note])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"{k}: {v}" for k, v in self.header.items()]
        for r in self.rows:
            se = f" +- {r.std_error:.3g}" if r.std_error else ""
            lines.append(f"{r.quantity:<28} eps={r.mesh:<8.4g} {r.estimate:.6g}{se}  target {r.target:.6g}"
                         f"  rel.err {r.rel_error:.3g} {r.note}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# lattice experiments


def segment_endpoints(k: int, length: float = 1.0) -> list[tuple[complex, complex]]:
    """``k`` horizontal segments ``u_j = j (1/2, sqrt3/2)``, ``v_j = u_j + length``."""
    step = complex(0.5, math.sqrt(3) / 2)
    return [(j * step, j * step + length) for j in range(k)]


def _segment_lattice(k: int, mesh: float, length: float = 1.0):
    """Triangular lattice patch holding the ``k`` segments; returns (g, vertex pairs)."""
    from .geometry import Parallelogram, build_triangular_lattice
    from .height import lattice_key_index

    n = int(round(1.0 / mesh))
    m = int(round(length * n))
    if abs(n * mesh - 1.0) > 1e-12 or abs(m - length * n) > 1e-9:
        raise ValueError("mesh must be 1/n with length * n an integer")
    g = build_triangular_lattice(Parallelogram(m + 2, (k - 1) * n + 2, (-1, -1)), mesh)
    index = lattice_key_index(g)
    pairs = [(index[(0, j * n)], index[(m, j * n)]) for j in range(k)]
    return g, pairs


def sample_increments(g: IsoradialGraph, pairs, n_samples: int, seed: int, kernel=None,
                      stream: int = 0) -> np.ndarray:
    """Joint draws of ``h(v_i) - h(u_i)`` under the whole-plane measure, shape ``(N, k)``.

    Only the dual edges crossed by the lattice paths are drawn, exactly, from
    their determinantal joint law.
    """
    from .gibbs import coupling_matrix
    from .height import height_increment_representation, lattice_path
    from .kernel import ExactInverseKernel
    from .sampler import sample_edge_process

    kernel = kernel or ExactInverseKernel(g)
    reps = [height_increment_representation(g, lattice_path(g, u, v)) for u, v in pairs]
    edges = np.array(sorted({e for r in reps for e in r.coefficients()}), dtype=np.int64)
    pos = {int(e): i for i, e in enumerate(edges)}
    coef = np.zeros((len(edges), len(pairs)))
    for j, r in enumerate(reps):
        for e, c in r.coefficients().items():
            coef[pos[e], j] = c
    const = np.array([r.constant for r in reps])
    mu = g.theta[edges] / math.pi
    X = sample_edge_process(coupling_matrix(g, edges, kernel), n_samples, seed, stream)
    return (X - mu) @ coef + const


def increment_moment(k: int, mesh: float, n_samples: int, seed: int, length: float = 1.0):
    """MC estimate of ``E prod_j (h(v_j) - h(u_j))`` and its Wick target."""
    from .montecarlo import batch_means

    g, pairs = _segment_lattice(k, mesh, length)
    inc = sample_increments(g, pairs, n_samples, seed)
    est = batch_means(np.prod(inc, axis=1))
    return est, wick_moment(k, segment_endpoints(k, length))


def functional_samples(mesh: float, n_samples: int, seed: int, phi: TestFunction | None = None) -> np.ndarray:
    """Draws of ``H phi`` on the triangular lattice under the whole-plane measure."""
    from .gibbs import coupling_matrix
    from .height import weighted_height_functional
    from .kernel import ExactInverseKernel
    from .sampler import sample_edge_process

    phi = phi or TestFunction.standard()
    g = _functional_lattice(phi, mesh)
    idx, c = functional_weights(g, phi)
    edges, a = weighted_height_functional(g, idx, c)
    ek = ExactInverseKernel(g)
    mu = g.theta[edges] / math.pi
    X = sample_edge_process(coupling_matrix(g, edges, ek), n_samples, seed)
    return (X - mu) @ a


def _functional_lattice(phi: TestFunction, mesh: float) -> IsoradialGraph:
    from .geometry import Parallelogram, build_triangular_lattice

    x0, y0, x1, y1 = phi.bounding_box()
    h = math.sqrt(3) / 2
    j0, j1 = math.floor(y0 / (h * mesh)) - 2, math.ceil(y1 / (h * mesh)) + 2
    i0 = math.floor(x0 / mesh - j1 / 2) - 2
    i1 = math.ceil(x1 / mesh - j0 / 2) + 2
    return build_triangular_lattice(Parallelogram(i1 - i0, j1 - j0, (i0, j0)), mesh)


def exact_functional_var(mesh: float, phi: TestFunction | None = None) -> float:
    """Exact ``Var(H phi)`` under the whole-plane measure on the triangular lattice."""
    from .height import exact_functional_variance, weighted_height_functional
    from .kernel import ExactInverseKernel

    phi = phi or TestFunction.standard()
    g = _functional_lattice(phi, mesh)
    idx, c = functional_weights(g, phi)
    edges, a = weighted_height_functional(g, idx, c)
    return exact_functional_variance(g, edges, a, ExactInverseKernel(g))


STANDARD_FOUR_POINTS = (0.0, 1.0, complex(0.5, math.sqrt(3) / 2), complex(1.5, math.sqrt(3) / 2))


def exact_covariance_at(mesh: float, points=STANDARD_FOUR_POINTS) -> float:
    """Whole-plane ``E[(h(v1)-h(u1))(h(v2)-h(u2))]`` on the triangular lattice at ``mesh``."""
    from .geometry import Parallelogram, build_triangular_lattice
    from .height import exact_height_covariance, lattice_key_index

    z = np.array([complex(p) for p in points]) / mesh
    h = math.sqrt(3) / 2
    jj = np.round(z.imag / h).astype(int)
    ii = np.round(z.real - jj / 2).astype(int)
    if np.max(np.abs(ii + jj / 2 - z.real)) > 1e-9 or np.max(np.abs(jj * h - z.imag)) > 1e-9:
        raise ValueError("points are not lattice vertices at this mesh")
    i0, j0 = ii.min() - 2, jj.min() - 2
    g = build_triangular_lattice(Parallelogram(ii.max() - i0 + 3, jj.max() - j0 + 3, (i0, j0)), mesh)
    index = lattice_key_index(g)
    u1, v1, u2, v2 = (index[(int(a), int(b))] for a, b in zip(ii, jj))
    return exact_height_covariance(g, u1, v1, u2, v2)


def moment_comparison(config: dict | None = None) -> ComparisonReport:
    """Lattice moments against their Gaussian free field limits.

    ``config`` keys (all optional): ``covariance_meshes``, ``moment_mesh``,
    ``moment_samples``, ``moments`` (orders k), ``variance_meshes``,
    ``variance_mc_mesh``, ``variance_samples``, ``seed``.
    """
    cfg = {
        "covariance_meshes": [1 / 8, 1 / 16, 1 / 32, 1 / 64],
        "moment_mesh": 1 / 32,
        "moment_samples": 20000,
        "moments": [2, 3, 4],
        "variance_meshes": [1 / 8, 1 / 12, 1 / 16],
        "variance_mc_mesh": 1 / 6,
        "variance_samples": 10000,
        "seed": 0,
    }
    unknown = set(config or {}) - set(cfg)
    if unknown:
        raise ValueError(f"unknown moment_comparison keys: {sorted(unknown)}")
    cfg.update(config or {})
    rep = ComparisonReport(header={"seed": cfg["seed"], "config": dict(cfg), "mc_batches": 20})

    target = cross_ratio_prediction(*STANDARD_FOUR_POINTS)
    prev = None
    for eps in cfg["covariance_meshes"]:
        val = exact_covariance_at(eps)
        err = abs(val - target)
        note = "" if prev is None else ("error decreasing" if err < prev else "error NOT decreasing")
        rep.add("exact_covariance", eps, val, 0.0, target, note)
        prev = err

    for k in cfg["moments"]:
        est, tgt = increment_moment(k, cfg["moment_mesh"], cfg["moment_samples"], cfg["seed"])
        rep.add(f"increment_moment_k{k}", cfg["moment_mesh"], est.mean, est.std_error, tgt,
                "within 3 SE" if est.within(tgt) else "outside 3 SE")

    G = dirichlet_energy(TestFunction.standard())
    vt = G / math.pi
    prev = None
    for eps in cfg["variance_meshes"]:
        v = exact_functional_var(eps)
        err = abs(v - vt)
        note = "exact" if prev is None else ("exact; error decreasing" if err < prev else "exact; error NOT decreasing")
        rep.add("functional_variance", eps, v, 0.0, vt, note)
        prev = err
    if cfg["variance_samples"]:
        from .montecarlo import batch_variance

        x = functional_samples(cfg["variance_mc_mesh"], cfg["variance_samples"], cfg["seed"])
        est = batch_variance(x)
        rep.add("functional_variance_mc", cfg["variance_mc_mesh"], est.mean, est.std_error, vt,
                "within 15%" if abs(est.mean - vt) <= 0.15 * vt else "outside 15%")
    return rep
