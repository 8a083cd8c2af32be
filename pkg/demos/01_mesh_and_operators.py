"""Build a structured triangulation and its P1 operators, then verify the
classic identities: partition of unity, the Neumann kernel, and the exact
gradient energy of a linear field.

Run:  python3 demos/01_mesh_and_operators.py
"""

import numpy as np

from schloegl import RectangleDomain, build_fem, l2_inner, l2_norm

fe = build_fem(nx=24, ny=24, nu=0.1, domain=RectangleDomain(1.0, 1.0))
mesh = fe.mesh
print(f"mesh: {mesh.nx}x{mesh.ny} cells, {mesh.n_nodes} nodes, {mesh.n_tris} triangles")

one = np.ones(mesh.n_nodes)
print(f"1^T M 1 = {l2_inner(one, one, fe.mass):.15f}   (area of the unit square)")
print(f"max |K 1| = {np.max(np.abs(fe.stiffness @ one)):.2e}   (constants in the kernel)")

w = mesh.interpolate(lambda x, y: x)
print(f"w^T K w for w = x: {w @ (fe.stiffness @ w):.15f}   (= nu = {fe.nu})")
print(f"(x, 1)_L2 = {l2_inner(w, one, fe.mass):.15f}   (= 1/2 exactly)")

s = mesh.interpolate(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
print(f"|I_h sin(pi x) sin(pi y)|_L2 = {l2_norm(s, fe.mass):.8f}   (-> 1/2 as the mesh refines)")

print("\nrefinement study of the interpolant norm error:")
for nx in (8, 16, 32, 64):
    f = build_fem(nx, nx, 1.0)
    v = f.mesh.interpolate(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    print(f"  nx={nx:3d}: | |I_h s| - 1/2 | = {abs(l2_norm(v, f.mass) - 0.5):.3e}")
