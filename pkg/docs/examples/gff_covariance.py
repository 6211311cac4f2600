"""Exact height covariance on the honeycomb against the free-field prediction.

Two unit segments on a finer and finer lattice: the covariance of their
height increments tends to -(1/2 pi^2) log of the cross-ratio.
"""

from isodimer.gff import STANDARD_FOUR_POINTS, cross_ratio_prediction, exact_covariance_at

target = cross_ratio_prediction(*STANDARD_FOUR_POINTS)
print(f"prediction {target:.6f}")
for n in (4, 8, 16, 32, 64):
    c = exact_covariance_at(1 / n)
    print(f"mesh 1/{n:<3d} covariance {c:.6f}  relative error {abs(c - target) / target:.2e}")
