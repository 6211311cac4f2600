"""Local statistics of the whole-plane measure on three isoradial graphs.

Each dual edge appears with probability theta/pi, where theta is its rhombus
half-angle. Two edges sharing a face never appear together, and far-apart
edges decorrelate.
"""

import math

from isodimer.geometry import Hexagon, build_lozenge_with_diagonals, build_square_lattice, build_triangular_lattice
from isodimer.gibbs import edge_probability, local_statistic
from isodimer.kernel import ExactInverseKernel
from isodimer.sampler import RngStream, sample_lozenge_tiling

graphs = {
    "honeycomb": build_triangular_lattice(Hexagon(3, 3, 3)),
    "square": build_square_lattice((6, 6)),
    "lozenges with diagonals": build_lozenge_with_diagonals(sample_lozenge_tiling(Hexagon(2, 2, 2), RngStream(0))),
}

for name, g in graphs.items():
    ek = ExactInverseKernel(g)
    seen = {}
    for e in g.dual_edges:
        seen.setdefault(round(g.theta[e] / math.pi, 9), edge_probability(g, int(e), ek))
    print(name)
    for ratio, p in sorted(seen.items()):
        print(f"  theta/pi = {ratio:.6f}   P(edge) = {p:.12f}")

g = graphs["honeycomb"]
ek = ExactInverseKernel(g)
e0 = int(g.dual_edges[0])
w = g.edge_white[e0]
sibling = next(int(e) for e in g.dual_edges if e != e0 and g.edge_white[e] == w)
print("two edges at one white face:", local_statistic(g, [e0, sibling], ek))
