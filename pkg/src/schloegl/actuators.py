"""Grid of box-indicator actuators and their finite-element coupling.

For grid parameter m the rectangle carries m*m disjoint open boxes, all
of width fraction ``r`` per axis, centered on the tensor grid
{(2k-1)L/(2m)}.  The control-to-field map sends an amplitude vector u to
the piecewise-constant function sum_j u_j 1_{box_j}; its discrete image
is carried by the coupling matrix B with B_ij = integral of phi_i over
box_j, computed exactly by clipping each triangle against the box.

Because supports are disjoint the Gram matrix of the indicators is
diagonal (entries = box volumes), so the L2-orthogonal projection onto
the actuator span reduces to box averages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import RectangleDomain, StructuredTriangulation

__all__ = [
    "ActuatorGrid",
    "CouplingMatrix",
    "build_actuator_grid",
    "discretize_actuators",
    "apply_control_operator",
    "project_onto_actuator_span",
    "projection_norm_sq",
    "control_operator_inverse_norm",
]


@dataclass(frozen=True)
class ActuatorGrid:
    """m*m axis-aligned boxes of per-axis half-widths (r*lx/(2m), r*ly/(2m))."""

    m: int
    width_fraction: float
    domain: RectangleDomain
    centers: np.ndarray  # (m*m, 2), x varies fastest

    @property
    def count(self) -> int:
        return self.m * self.m

    @property
    def half_widths(self) -> tuple[float, float]:
        f = self.width_fraction / (2.0 * self.m)
        return (f * self.domain.lx, f * self.domain.ly)

    @property
    def box_volume(self) -> float:
        hx, hy = self.half_widths
        return 4.0 * hx * hy

    def boxes(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower-left and upper-right corners, each (count, 2)."""
        hw = np.array(self.half_widths)
        return self.centers - hw, self.centers + hw


def build_actuator_grid(m: int, width_fraction: float, domain: RectangleDomain | None = None) -> ActuatorGrid:
    if m < 1:
        raise ValueError(f"grid parameter must be >= 1, got {m}")
    if not (0.0 < width_fraction < 1.0):
        raise ValueError(f"width fraction must lie in (0, 1), got {width_fraction}")
    domain = domain or RectangleDomain()
    cx = (2.0 * np.arange(1, m + 1) - 1.0) * domain.lx / (2.0 * m)
    cy = (2.0 * np.arange(1, m + 1) - 1.0) * domain.ly / (2.0 * m)
    gx, gy = np.meshgrid(cx, cy)
    centers = np.column_stack([gx.ravel(), gy.ravel()])
    return ActuatorGrid(m=m, width_fraction=width_fraction, domain=domain, centers=centers)


@dataclass(frozen=True)
class CouplingMatrix:
    """Discrete control operator data: B (n_nodes x count) and box volumes."""

    b: sp.csr_matrix
    volumes: np.ndarray
    grid: ActuatorGrid

    @property
    def count(self) -> int:
        return self.b.shape[1]


def _clip_axis(poly: list, axis: int, bound: float, keep_below: bool) -> list:
    """Sutherland-Hodgman clip against an axis-aligned half-plane."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        pin = (p[axis] <= bound) if keep_below else (p[axis] >= bound)
        qin = (q[axis] <= bound) if keep_below else (q[axis] >= bound)
        if pin:
            out.append(p)
            if not qin:
                t = (bound - p[axis]) / (q[axis] - p[axis])
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        elif qin:
            t = (bound - p[axis]) / (q[axis] - p[axis])
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _clip_triangle_to_box(tri_pts: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> list:
    poly = [tuple(pt) for pt in tri_pts]
    for axis, bound, keep_below in ((0, lo[0], False), (0, hi[0], True), (1, lo[1], False), (1, hi[1], True)):
        if not poly:
            return []
        poly = _clip_axis(poly, axis, bound, keep_below)
    return poly


def discretize_actuators(grid: ActuatorGrid, mesh: StructuredTriangulation) -> CouplingMatrix:
    """Exact integrals of the P1 basis over each actuator box.

    Each triangle is clipped against the box (Sutherland-Hodgman on the
    four axis-aligned planes); the linear shape functions are integrated
    over the clipped polygon by fan triangulation (integral of a linear
    function over a triangle = area * mean of vertex values).
    """
    lo_all, hi_all = grid.boxes()
    pts = mesh.nodes[mesh.triangles]  # (ne, 3, 2)
    tmin = pts.min(axis=1)
    tmax = pts.max(axis=1)

    rows, cols, vals = [], [], []
    for j in range(grid.count):
        lo, hi = lo_all[j], hi_all[j]
        cand = np.flatnonzero(
            (tmin[:, 0] < hi[0]) & (tmax[:, 0] > lo[0]) & (tmin[:, 1] < hi[1]) & (tmax[:, 1] > lo[1])
        )
        for e in cand:
            tri = pts[e]
            poly = _clip_triangle_to_box(tri, lo, hi)
            if len(poly) < 3:
                continue
            # barycentric representation of each shape function on this element
            v0 = tri[0]
            d1 = tri[1] - v0
            d2 = tri[2] - v0
            det = d1[0] * d2[1] - d1[1] * d2[0]
            # shape values at the polygon vertices: columns = local nodes
            shape_at = np.empty((len(poly), 3))
            for k, (px, py) in enumerate(poly):
                rx, ry = px - v0[0], py - v0[1]
                lam1 = (rx * d2[1] - ry * d2[0]) / det
                lam2 = (d1[0] * ry - d1[1] * rx) / det
                shape_at[k] = (1.0 - lam1 - lam2, lam1, lam2)
            acc = np.zeros(3)
            p0 = poly[0]
            for k in range(1, len(poly) - 1):
                p1, p2 = poly[k], poly[k + 1]
                area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
                if area == 0.0:
                    continue
                acc += area * (shape_at[0] + shape_at[k] + shape_at[k + 1]) / 3.0
            for loc in range(3):
                if acc[loc] != 0.0:
                    rows.append(mesh.triangles[e, loc])
                    cols.append(j)
                    vals.append(acc[loc])

    b = sp.csr_matrix(
        (np.array(vals), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(mesh.n_nodes, grid.count),
    )
    volumes = np.full(grid.count, grid.box_volume)
    return CouplingMatrix(b=b, volumes=volumes, grid=grid)


def apply_control_operator(coupling: CouplingMatrix, u: np.ndarray) -> np.ndarray:
    """Load vector of the actuator field with amplitudes u, i.e. B @ u."""
    u = np.asarray(u, dtype=float)
    if u.shape != (coupling.count,):
        raise ValueError(f"control vector length {u.shape} does not match actuator count {coupling.count}")
    return coupling.b @ u


def project_onto_actuator_span(coupling: CouplingMatrix, z: np.ndarray) -> np.ndarray:
    """Coefficients of the L2-orthogonal projection of the field z.

    Disjoint supports make the Gram matrix diagonal, so coefficient j is
    the mean of z over box j: (z, 1_box_j) / vol(box_j).
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (coupling.b.shape[0],):
        raise ValueError(f"field length {z.shape} does not match mesh node count {coupling.b.shape[0]}")
    return (coupling.b.T @ z) / coupling.volumes


def projection_norm_sq(coupling: CouplingMatrix, z: np.ndarray) -> float:
    """Squared L2 norm of the projection onto the actuator span."""
    pair = coupling.b.T @ np.asarray(z, dtype=float)
    return float(np.sum(pair * pair / coupling.volumes))


def control_operator_inverse_norm(grid: ActuatorGrid) -> float:
    """Operator norm of (amplitudes from L2 field) in the Euclidean norm.

    For disjoint boxes the maximizer of the Euclidean amplitude norm over
    unit-L2 fields concentrates on the smallest box, giving
    (min_j vol(box_j))^(-1/2); here all volumes are equal.
    """
    return float(grid.box_volume ** -0.5)
