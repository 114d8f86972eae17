"""
A tour of the two hyperbolic models and the maps between them
=============================================================

Distances, exponential/logarithmic maps, and the isometry connecting the
Poincare ball to the Lorentz hyperboloid, all at curvature -1.
"""

import numpy as np

from hypertopic.geometry import (
    Curvature,
    Geometry,
    HyperPoint,
    distance,
    exp_map,
    log_map,
    origin,
    to_lorentz,
    to_poincare,
)

curv = Curvature(-1.0)

# two points in the unit ball; coordinates are ordinary numpy vectors
x = HyperPoint(Geometry.POINCARE, [0.3, 0.1], curv)
y = HyperPoint(Geometry.POINCARE, [-0.2, 0.4], curv)
print(f"ball distance d(x, y)          = {distance(x, y):.6f}")

# a landmark value: from the origin to radius 0.6 is exactly ln 4
center = origin(Geometry.POINCARE, 2, curv)
edge = HyperPoint(Geometry.POINCARE, [0.6, 0.0], curv)
print(f"d(0, (0.6, 0)) = {distance(center, edge):.12f}  (ln 4 = {np.log(4.0):.12f})")

# the log map turns y into a tangent vector at x; the exp map walks back
v = log_map(x, y)
print(f"tangent vector at x            = {np.round(v.vec, 6)}")
back = exp_map(x, v)
print(f"exp_x(log_x(y)) recovers y     = {np.round(back.coords, 6)} vs {y.coords}")

# the hyperboloid carries the same geometry: convert and compare
lx, ly = to_lorentz(x), to_lorentz(y)
print(f"hyperboloid coordinates of x   = {np.round(lx.coords, 6)}")
print(f"sheet distance d(x, y)         = {distance(lx, ly):.6f}  (same as the ball)")
print(f"round trip ball->sheet->ball   = {np.round(to_poincare(lx).coords, 6)}")

# distances grow without bound as points approach the rim: room for trees
for radius in (0.5, 0.9, 0.99, 0.999):
    rim = HyperPoint(Geometry.POINCARE, [radius, 0.0], curv)
    print(f"d(0, r={radius:<5}) = {distance(center, rim):8.4f}")
