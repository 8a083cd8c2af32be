"""The box-indicator actuator grid: geometry, exact coupling integrals,
and the diagonal L2 projection onto the actuator span.

Run:  python3 demos/02_actuators_and_projection.py
"""

import numpy as np

from schloegl import (
    build_actuator_grid,
    build_fem,
    control_operator_inverse_norm,
    discretize_actuators,
    project_onto_actuator_span,
)

fe = build_fem(24, 24, 0.1)

for m in (1, 2, 3):
    grid = build_actuator_grid(m, width_fraction=0.5)
    print(f"m={m}: {grid.count} boxes, half-widths {grid.half_widths}, "
          f"total coverage {grid.count * grid.box_volume:.4f} (= r^2)")

grid = build_actuator_grid(3, 0.5)
cm = discretize_actuators(grid, fe.mesh)
col_sums = np.asarray(cm.b.sum(axis=0)).ravel()
print(f"\ncoupling matrix B: shape {cm.b.shape}, nnz {cm.b.nnz}")
print(f"max |column sum - box volume| = {np.max(np.abs(col_sums - cm.volumes)):.2e}")

# projecting a linear field returns its box averages
w = fe.mesh.interpolate(lambda x, y: x)
coeffs = project_onto_actuator_span(cm, w)
print("\nbox means of the field x (columns of the 3x3 grid):")
print(np.round(coeffs.reshape(3, 3), 6))
print("centers x-coordinates:", np.round(grid.centers[:3, 0], 6))

print(f"\namplitude-recovery operator norm: {control_operator_inverse_norm(grid):.3f} "
      f"(= m / r on the unit square)")
