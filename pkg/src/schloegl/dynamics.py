"""Semi-discrete Schloegl dynamics and the Crank-Nicolson/Adams-Bashforth stepper.

The PDE  dy/dt - nu*Lap(y) + f(y) = h + (control field),  with cubic
reaction f(w) = (w - z1)(w - z2)(w - z3) and homogeneous Neumann
conditions, is discretized in space with P1 elements (consistent mass,
nodal product approximation of the cubic) and in time with
Crank-Nicolson diffusion / Adams-Bashforth-2 reaction:

    (M/dt + K/2) y1 = (M/dt - K/2) y0 - M (1.5 f(y0) - 0.5 f(y_-1)) + load

Forcing and control enter the load lagged (evaluated at the step start).
The first step is one semi-implicit Euler step (implicit diffusion,
explicit reaction) since AB2 needs two history levels.  Both shifted
operators are factorized once per step size and reused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import splu

from .geometry import FemOperators, StructuredTriangulation

__all__ = [
    "SchloeglParams",
    "ForcingSpec",
    "IntegratorConfig",
    "TrajectoryRecord",
    "BlowUpError",
    "cubic_reaction",
    "cubic_reaction_derivative",
    "shifted_reaction",
    "shifted_reaction_derivative",
    "eval_forcing",
    "CrankNicolsonAB2",
    "simulate_free",
    "scalar_cnab_trajectory",
]

BLOWUP_LIMIT = 1e8


class BlowUpError(RuntimeError):
    """State became nonfinite or exceeded the blow-up limit."""

    def __init__(self, time: float, message: str | None = None):
        self.time = time
        super().__init__(message or f"state blew up at t = {time:.6g}")


@dataclass(frozen=True)
class SchloeglParams:
    """Diffusion coefficient and the three reaction roots."""

    nu: float = 0.1
    roots: tuple[float, float, float] = (-1.0, 0.0, 2.0)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"diffusion coefficient must be positive, got {self.nu}")

    @property
    def elementary_sums(self) -> tuple[float, float, float]:
        """(z1+z2+z3, -(z1 z2 + z1 z3 + z2 z3), z1 z2 z3)."""
        z1, z2, z3 = self.roots
        return (z1 + z2 + z3, -(z1 * z2 + z1 * z3 + z2 * z3), z1 * z2 * z3)


def cubic_reaction(w, params: SchloeglParams):
    """f(w) = (w - z1)(w - z2)(w - z3), elementwise (product form)."""
    z1, z2, z3 = params.roots
    return (w - z1) * (w - z2) * (w - z3)


def cubic_reaction_derivative(w, params: SchloeglParams):
    """f'(w), elementwise, from the product rule."""
    z1, z2, z3 = params.roots
    return (w - z2) * (w - z3) + (w - z1) * (w - z3) + (w - z1) * (w - z2)


def shifted_reaction(z, y_ref, params: SchloeglParams):
    """Reaction increment around a reference state: f(z + y_ref) - f(y_ref).

    Evaluated in expanded form z^3 + (3 y_ref - s2) z^2
    + (3 y_ref^2 - 2 s2 y_ref - s1) z with (s2, s1) the elementary sums,
    which satisfies the increment identity exactly (nodewise, up to
    roundoff) against the product form of :func:`cubic_reaction`.
    """
    z = np.asarray(z, dtype=float)
    y_ref = np.asarray(y_ref, dtype=float)
    if z.shape != y_ref.shape:
        raise ValueError(f"shape mismatch between error {z.shape} and reference {y_ref.shape}")
    s2, s1, _ = params.elementary_sums
    return z * (z * z + (3.0 * y_ref - s2) * z + (3.0 * y_ref * y_ref - 2.0 * s2 * y_ref - s1))


def shifted_reaction_derivative(z, y_ref, params: SchloeglParams):
    """d/dz of the shifted reaction; equals f'(z + y_ref)."""
    s2, s1, _ = params.elementary_sums
    return 3.0 * z * z + 2.0 * (3.0 * y_ref - s2) * z + (3.0 * y_ref * y_ref - 2.0 * s2 * y_ref - s1)


@dataclass(frozen=True)
class ForcingSpec:
    """External force variants: zero, the periodic indicator, or a callback.

    The periodic indicator is 0.5 * 1{|sin 6t| > 1/2}(t) * 1{|x|^2 < 1/2}(x).
    Custom callbacks receive (t, x, y) with coordinate arrays and return
    nodal values.
    """

    kind: str = "zero"
    fn: Callable | None = None

    @staticmethod
    def zero() -> "ForcingSpec":
        return ForcingSpec(kind="zero")

    @staticmethod
    def periodic_indicator() -> "ForcingSpec":
        return ForcingSpec(kind="periodic")

    @staticmethod
    def custom(fn: Callable) -> "ForcingSpec":
        return ForcingSpec(kind="custom", fn=fn)

    def time_gate(self, t: float) -> float:
        """Scalar time factor for the periodic variant (0 or 1)."""
        return 1.0 if abs(math.sin(6.0 * t)) > 0.5 else 0.0


def eval_forcing(spec: ForcingSpec, t: float, mesh: StructuredTriangulation) -> np.ndarray:
    """Nodal interpolation of the forcing at time t."""
    if spec.kind == "zero":
        return np.zeros(mesh.n_nodes)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    if spec.kind == "periodic":
        spatial = 0.5 * (x * x + y * y < 0.5)
        return spec.time_gate(t) * spatial
    if spec.kind == "custom":
        return np.asarray(spec.fn(t, x, y), dtype=float)
    raise ValueError(f"unknown forcing kind {spec.kind!r}")


class ForcingLoad:
    """Cached per-step load vectors M @ h(t) for a fixed mesh/forcing pair."""

    def __init__(self, spec: ForcingSpec, fe: FemOperators):
        self.spec = spec
        self.fe = fe
        if spec.kind == "periodic":
            x, y = fe.mesh.nodes[:, 0], fe.mesh.nodes[:, 1]
            self._base = fe.mass @ (0.5 * (x * x + y * y < 0.5))

    def __call__(self, t: float) -> np.ndarray | None:
        if self.spec.kind == "zero":
            return None
        if self.spec.kind == "periodic":
            g = self.spec.time_gate(t)
            return self._base if g == 1.0 else None
        return self.fe.mass @ eval_forcing(self.spec, t, self.fe.mesh)


@dataclass(frozen=True)
class IntegratorConfig:
    """Time step, state-snapshot stride, and cost weight for diagnostics."""

    dt: float = 1e-3
    state_stride: int = 10
    cost_beta: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.state_stride < 1:
            raise ValueError(f"state stride must be >= 1, got {self.state_stride}")


@dataclass
class TrajectoryRecord:
    """Per-step diagnostics plus strided state snapshots of one run.

    ``times``/``state_norm``/``err_norm``/``running_cost`` have one entry
    per time level (n_steps + 1); ``control_norms`` and ``controls`` have
    one entry per step.  ``states`` holds snapshots at ``state_times``
    (every ``state_stride`` levels, endpoints always included).
    """

    times: np.ndarray
    state_norm: np.ndarray
    err_norm: np.ndarray | None
    control_norms: np.ndarray
    running_cost: np.ndarray
    controls: np.ndarray | None
    state_times: np.ndarray
    states: np.ndarray
    state_levels: np.ndarray
    final_state: np.ndarray = field(repr=False, default=None)
    final_prev_state: np.ndarray = field(repr=False, default=None)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def state_at_level(self, n: int) -> np.ndarray:
        """Stored state at time level n; raises unless n falls on the stride."""
        idx = np.flatnonzero(self.state_levels == n)
        if idx.size == 0:
            raise KeyError(f"state at level {n} was not stored (stride too coarse)")
        return self.states[idx[0]]


class CrankNicolsonAB2:
    """Time stepper owning the factorized shifted operators.

    Immutable after construction; safe to share across runs at the same
    step size.
    """

    def __init__(self, fe: FemOperators, params: SchloeglParams, dt: float):
        if not dt > 0:
            raise ValueError(f"time step must be positive, got {dt}")
        self.fe = fe
        self.params = params
        self.dt = dt
        mass, stiff = fe.mass, fe.stiffness
        self._cn_lhs = splu((mass / dt + 0.5 * stiff).tocsc())
        self._cn_rhs = (mass / dt - 0.5 * stiff).tocsr()
        self._euler_lhs = splu((mass / dt + stiff).tocsc())
        self._mass_over_dt = (mass / dt).tocsr()

    def startup_step(self, y0: np.ndarray, load: np.ndarray | None) -> np.ndarray:
        """Semi-implicit Euler: (M/dt + K) y1 = (M/dt) y0 - M f(y0) + load."""
        rhs = self._mass_over_dt @ y0 - self.fe.mass @ cubic_reaction(y0, self.params)
        if load is not None:
            rhs = rhs + load
        return self._euler_lhs.solve(rhs)

    def ab2_step(self, y_prev: np.ndarray, y_curr: np.ndarray, load: np.ndarray | None) -> np.ndarray:
        f_curr = cubic_reaction(y_curr, self.params)
        f_prev = cubic_reaction(y_prev, self.params)
        rhs = self._cn_rhs @ y_curr - self.fe.mass @ (1.5 * f_curr - 0.5 * f_prev)
        if load is not None:
            rhs = rhs + load
        return self._cn_lhs.solve(rhs)

    def check_finite(self, y: np.ndarray, t: float) -> None:
        m = np.max(np.abs(y))
        if not np.isfinite(m) or m > BLOWUP_LIMIT:
            raise BlowUpError(t)


class _Recorder:
    """Accumulates per-step diagnostics and strided snapshots."""

    def __init__(self, fe: FemOperators, n_steps: int, dt: float, stride: int, beta: float,
                 n_controls: int | None, track_error: bool):
        self.fe = fe
        self.dt = dt
        self.beta = beta
        self.stride = stride
        self.times = np.arange(n_steps + 1) * dt
        self.state_norm = np.zeros(n_steps + 1)
        self.err_norm = np.zeros(n_steps + 1) if track_error else None
        self.control_norms = np.zeros(n_steps)
        self.running_cost = np.zeros(n_steps + 1)
        self.controls = np.zeros((n_steps, n_controls)) if n_controls else None
        self._snap_levels = []
        self._snaps = []
        self._n_steps = n_steps
        self._prev_err_sq = 0.0

    def record_level(self, n: int, y: np.ndarray, err_sq: float | None):
        self.state_norm[n] = self.fe.norm(y)
        if self.err_norm is not None:
            e2 = max(err_sq, 0.0)
            self.err_norm[n] = math.sqrt(e2)
            if n > 0:
                self.running_cost[n] += self.running_cost[n - 1] + 0.5 * self.dt * (self._prev_err_sq + e2)
            self._prev_err_sq = e2
        elif n > 0:
            self.running_cost[n] += self.running_cost[n - 1]
        if n % self.stride == 0 or n == self._n_steps:
            self._snap_levels.append(n)
            self._snaps.append(y.copy())

    def record_control(self, n: int, u: np.ndarray | None, u_norm: float):
        # the cost weighs the Euclidean amplitude norm regardless of the
        # saturation norm; the stored series follows the same convention
        # so the running cost re-integrates from the CSV columns
        eu = u_norm if u is None else float(np.linalg.norm(u))
        self.control_norms[n] = eu
        if self.controls is not None and u is not None:
            self.controls[n] = u
        # exact integral of the piecewise-constant control on [t_n, t_n+1]
        self.running_cost[n + 1] = self.beta * self.dt * eu * eu

    def finish(self, y_curr: np.ndarray, y_prev: np.ndarray | None) -> TrajectoryRecord:
        return TrajectoryRecord(
            times=self.times,
            state_norm=self.state_norm,
            err_norm=self.err_norm,
            control_norms=self.control_norms,
            running_cost=self.running_cost,
            controls=self.controls,
            state_times=np.array(self._snap_levels) * self.dt,
            states=np.array(self._snaps),
            state_levels=np.array(self._snap_levels),
            final_state=y_curr.copy(),
            final_prev_state=None if y_prev is None else y_prev.copy(),
        )


def _n_steps_for(horizon: float, dt: float) -> int:
    n = round(horizon / dt)
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a positive multiple of the step size {dt}")
    return n


def simulate_free(y0: np.ndarray, horizon: float, fe: FemOperators, params: SchloeglParams,
                  forcing: ForcingSpec | None = None, cfg: IntegratorConfig | None = None) -> TrajectoryRecord:
    """Uncontrolled trajectory from y0 over [0, horizon].

    Raises :class:`BlowUpError` with the offending time if the state
    leaves the finite range.
    """
    cfg = cfg or IntegratorConfig()
    forcing = forcing or ForcingSpec.zero()
    n_steps = _n_steps_for(horizon, cfg.dt)
    stepper = CrankNicolsonAB2(fe, params, cfg.dt)
    load = ForcingLoad(forcing, fe)

    rec = _Recorder(fe, n_steps, cfg.dt, cfg.state_stride, 0.0, None, track_error=False)
    y_prev = None
    y = np.asarray(y0, dtype=float).copy()
    rec.record_level(0, y, None)
    for n in range(n_steps):
        t = n * cfg.dt
        if y_prev is None:
            y_next = stepper.startup_step(y, load(t))
        else:
            y_next = stepper.ab2_step(y_prev, y, load(t))
        stepper.check_finite(y_next, (n + 1) * cfg.dt)
        y_prev, y = y, y_next
        rec.record_level(n + 1, y, None)
    return rec.finish(y, y_prev)


def scalar_cnab_trajectory(y0: float, dt: float, n_steps: int, params: SchloeglParams,
                           forcing_values: np.ndarray | None = None) -> np.ndarray:
    """Scalar oracle: the same CN/AB2 recurrences with all spatial terms absent.

    Spatially constant PDE data reduces exactly to
        y1 = y0 - dt f(y0) + dt h0
        y_{n+1} = y_n - dt (1.5 f(y_n) - 0.5 f(y_{n-1})) + dt h_n.
    """
    h = np.zeros(n_steps) if forcing_values is None else np.asarray(forcing_values, dtype=float)
    out = np.empty(n_steps + 1)
    out[0] = y0
    out[1] = y0 - dt * cubic_reaction(y0, params) + dt * h[0]
    for n in range(1, n_steps):
        f_curr = cubic_reaction(out[n], params)
        f_prev = cubic_reaction(out[n - 1], params)
        out[n + 1] = out[n] - dt * (1.5 * f_curr - 0.5 * f_prev) + dt * h[n]
    return out
