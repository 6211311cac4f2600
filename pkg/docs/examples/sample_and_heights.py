"""Draw exact uniform lozenge tilings and look at their height functions.

Heights are fixed on the boundary of a side-6 hexagon and fluctuate inside.
Each height field maps back to the tiling it came from.
"""

import numpy as np

from isodimer.geometry import Hexagon, build_triangular_lattice
from isodimer.height import height_from_matching, matching_from_height
from isodimer.sampler import DimerConfiguration, sample_matchings

g = build_triangular_lattice(Hexagon(6, 6, 6))
S = sample_matchings(g, 400, seed=1)
center = g.nearest_vertex(g.vertices.mean(axis=0))
values = []
for row in S:
    m = DimerConfiguration(g, tuple(row))
    h = height_from_matching(m)
    assert matching_from_height(h) == m
    values.append(h[center])
values = np.array(values)
print(f"{len(S)} tilings of a side-6 hexagon ({g.n_faces // 2} lozenges each)")
print(f"centre height: mean {values.mean():.4f}, std {values.std():.4f}")
print("distinct centre values:", sorted(set(np.round(values, 6)))[:8])
