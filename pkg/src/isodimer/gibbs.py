"""Local dimer statistics from determinants, and an enumeration oracle."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import IsoradialGraph
from .kernel import DiracOperator, ExactInverseKernel, FiniteInverseKernel

IMAG_WARN = 1e-8
MAX_EVENT = 64


class EnumerationBudgetError(RuntimeError):
    pass


class ImaginaryResidueWarning(RuntimeWarning):
    pass


@dataclass
class Statistic:
    value: float
    imag_residue: float
    backend: str
    description: str = ""

    def __float__(self):
        return self.value


def _backend(g: IsoradialGraph, kernel):
    if kernel is None or kernel == "exact":
        k = g.meta.get("_exact_kernel")
        if k is None:
            k = g.meta["_exact_kernel"] = ExactInverseKernel(g)
        return k
    if kernel == "finite":
        k = g.meta.get("_finite_kernel")
        if k is None:
            k = g.meta["_finite_kernel"] = FiniteInverseKernel(g)
        return k
    return kernel


def backend_name(kernel) -> str:
    return "finite" if isinstance(kernel, FiniteInverseKernel) else "exact"


def _dirac(kernel) -> DiracOperator:
    return kernel.dirac


def coupling_matrix(g: IsoradialGraph, edges: Sequence[int], kernel=None) -> np.ndarray:
    """``C[i, j] = K(w_i, b_i) K^{-1}(b_i, w_j)``, the edge-process kernel."""
    ker = _backend(g, kernel)
    edges = np.asarray(edges, dtype=np.int64)
    bs = g.edge_black[edges]
    ws = g.edge_white[edges]
    n = len(edges)
    A = ker.batch(np.repeat(bs, n), np.tile(ws, n)).reshape(n, n)
    kv = _dirac(ker).edge_values[edges]
    return kv[:, None] * A


def edge_probability(g: IsoradialGraph, e: int, kernel=None) -> float:
    """``Re K(w, b) K^{-1}(b, w)``; equals theta_e / pi in infinite volume."""
    ker = _backend(g, kernel)
    b, w = g.edge_black[e], g.edge_white[e]
    return float((_dirac(ker).edge_values[e] * ker(b, w)).real)


def cylinder_statistic(g: IsoradialGraph, edges: Sequence[int], kernel=None) -> Statistic:
    edges = list(edges)
    if len(edges) > MAX_EVENT:
        raise ValueError(f"at most {MAX_EVENT} edges per event")
    ker = _backend(g, kernel)
    if not edges:
        return Statistic(1.0, 0.0, backend_name(ker), "")
    val = complex(np.linalg.det(coupling_matrix(g, edges, ker)))
    if abs(val.imag) > IMAG_WARN:
        warnings.warn(f"imaginary residue {val.imag:.3g} in cylinder probability",
                      ImaginaryResidueWarning, stacklevel=2)
    return Statistic(val.real, abs(val.imag), backend_name(ker), " ".join(map(str, edges)))


def local_statistic(g: IsoradialGraph, edges: Sequence[int], kernel=None) -> float:
    """Probability that all ``edges`` are dimers: ``prod K(w_i, b_i) det K^{-1}(b_i, w_j)``."""
    return cylinder_statistic(g, edges, kernel).value


def truncated_correlation(g: IsoradialGraph, edges: Sequence[int], signs=None, kernel=None) -> float:
    """``E[prod_i s_i (1_i - mu_i)]`` from the zero-diagonal determinant."""
    edges = list(edges)
    if len(edges) < 2:
        raise ValueError("need at least two edges")
    if len(set(edges)) != len(edges):
        raise ValueError("edges must be distinct")
    C = coupling_matrix(g, edges, kernel)
    np.fill_diagonal(C, 0.0)
    val = complex(np.linalg.det(C))
    s = 1.0 if signs is None else float(np.prod(signs))
    return s * val.real


def edge_covariance(g: IsoradialGraph, edges: Sequence[int], kernel=None) -> np.ndarray:
    """Covariance matrix of the indicators of ``edges`` under the measure."""
    C = coupling_matrix(g, edges, kernel)
    cov = -(C * C.T).real
    mu = np.diag(C).real
    np.fill_diagonal(cov, mu * (1.0 - mu))
    return cov


# ---------------------------------------------------------------------------
# enumeration oracle


@dataclass
class BoltzmannTable:
    """All perfect matchings of a finite dual graph with their weights."""

    matchings: list  # each a sorted tuple of dual-edge ids
    weights: np.ndarray
    partition_function: float
    probabilities: np.ndarray = field(init=False)

    def __post_init__(self):
        self.probabilities = (
            self.weights / self.partition_function if len(self.weights) else np.zeros(0)
        )

    def __len__(self):
        return len(self.matchings)

    def index(self, matching) -> int:
        key = tuple(sorted(int(e) for e in matching))
        return self.matchings.index(key)

    def cylinder(self, edges: Sequence[int]) -> float:
        es = set(int(e) for e in edges)
        return float(sum(p for m, p in zip(self.matchings, self.probabilities) if es <= set(m)))

    def expectation(self, fn) -> float:
        return float(sum(p * fn(m) for m, p in zip(self.matchings, self.probabilities)))

    def truncated(self, edges: Sequence[int]) -> float:
        mus = [self.cylinder([e]) for e in edges]
        return self.expectation(lambda m: math.prod((e in m) - mu for e, mu in zip(edges, mus)))


def brute_force_measure(g: IsoradialGraph, budget: int = 10**6) -> BoltzmannTable:
    """Enumerate every perfect matching of the dual of ``g``."""
    whites = [int(w) for w in g.whites]
    blacks = set(int(b) for b in g.blacks)
    nu = 2.0 * np.sin(g.theta)
    if len(whites) != len(blacks):
        return BoltzmannTable([], np.zeros(0), 0.0)
    if not whites:
        return BoltzmannTable([()], np.ones(1), 1.0)
    opts = {w: [(int(e), int(g.edge_black[e])) for e in g.face_edges[w] if g.interior[e]] for w in whites}
    found: list[tuple] = []
    used_b: set[int] = set()
    chosen: list[int] = []
    remaining = set(whites)

    def rec():
        if not remaining:
            if len(found) >= budget:
                raise EnumerationBudgetError(f"more than {budget} matchings")
            found.append(tuple(sorted(chosen)))
            return
        # branch on the most constrained white face
        best, best_opts = None, None
        for w in remaining:
            o = [(e, b) for e, b in opts[w] if b not in used_b]
            if best_opts is None or len(o) < len(best_opts):
                best, best_opts = w, o
                if len(o) <= 1:
                    break
        if not best_opts:
            return
        remaining.discard(best)
        for e, b in best_opts:
            used_b.add(b)
            chosen.append(e)
            rec()
            chosen.pop()
            used_b.discard(b)
        remaining.add(best)

    rec()
    found.sort()
    weights = np.array([math.prod(nu[list(m)]) for m in found]) if found else np.zeros(0)
    return BoltzmannTable(found, weights, float(weights.sum()))


def statistics_csv(stats: Sequence[Statistic]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["event", "probability", "imag_residue", "backend"])
    for s in stats:
        wr.writerow([s.description, repr(s.value), repr(s.imag_residue), s.backend])
    return buf.getvalue()
