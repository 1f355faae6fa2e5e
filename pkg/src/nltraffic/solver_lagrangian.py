"""Lagrangian solver: characteristics, the representation formula, and a fixed-point iteration.

Given a density trajectory ``rho`` on a uniform time grid, ``pi_map`` builds the
velocity fields ``w_i(t, x) = v_i(t, x, (eta_i1 * rho_1)(x), ...)`` together with
``d/dx w_i``. ``sigma_solve`` solves the linear continuity equations driven by
those fields,

    rho_i(t, x) = rho_o,i(X_i(0; t, x)) * exp(-int_0^t d/dx w_i(s, X_i(s; t, x)) ds),

and ``fixed_point`` iterates ``rho -> sigma_solve(pi_map(rho))`` on short
subintervals, halving a subinterval whenever the iteration stops contracting.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _core
from .errors import (
    ContractionError,
    DomainError,
    InvalidConfigurationError,
    NumericError,
)
from .kernels import ConvolutionPlan
from .mesh import DensityTrajectory, Grid1D
from .problem import Problem

log = logging.getLogger(__name__)


def _interp_cells(values: np.ndarray, grid: Grid1D, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of cell-center rows ``values (m, N)`` at ``x``; shape ``(m,) + x.shape``.

    Held constant between the outer cell centers and the domain ends.
    """
    flat = np.ascontiguousarray(x, dtype=float).reshape(-1)
    out = _core.interp_linear(np.ascontiguousarray(values, dtype=float), flat, grid.x_lo, grid.dx)
    return np.asarray(out).reshape((values.shape[0],) + np.shape(x))


@dataclass
class VelocityFieldW:
    """Velocity fields and their x-derivatives built from a stored trajectory.

    ``q[m, i, j]`` and ``dq[m, i, j]`` hold ``eta_ij * rho_j`` and its x-derivative
    at time node ``m``. Since the convolution is linear, interpolating ``q``
    linearly in time is exactly the convolution of the time-interpolated density.
    Outside ``[x_lo, x_hi]`` the velocity is clamped to zero.
    """

    grid: Grid1D
    laws: list
    times: np.ndarray
    q: np.ndarray
    dq: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.q.shape[1]

    @property
    def t_lo(self) -> float:
        return float(self.times[0])

    @property
    def t_hi(self) -> float:
        return float(self.times[-1])

    def _slice(self, t: float):
        times = self.times
        span = max(abs(times[-1]), 1.0) * 1e-12
        if t < times[0] - span or t > times[-1] + span:
            raise DomainError(f"t={t} outside the trajectory range [{times[0]}, {times[-1]}]")
        if len(times) == 1:
            return self.q[0], self.dq[0]
        m = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        th = min(max((t - times[m]) / (times[m + 1] - times[m]), 0.0), 1.0)
        if th == 0.0:
            return self.q[m], self.dq[m]
        if th == 1.0:
            return self.q[m + 1], self.dq[m + 1]
        return (
            (1.0 - th) * self.q[m] + th * self.q[m + 1],
            (1.0 - th) * self.dq[m] + th * self.dq[m + 1],
        )

    def evaluate(self, i: int, t: float, x) -> tuple[np.ndarray, np.ndarray]:
        """``(w_i(t, x), d/dx w_i(t, x))`` for an array of positions at one time."""
        x = np.asarray(x, dtype=float)
        q_t, dq_t = self._slice(t)
        n = q_t.shape[1]
        both = _interp_cells(np.concatenate((q_t[i], dq_t[i])), self.grid, x)
        qv, dqv = both[:n], both[n:]
        law = self.laws[i]
        w = law.speed(t, x, qv)
        dw = law.dx(t, x, qv) + (law.dq(t, x, qv) * dqv).sum(axis=0)
        outside = (x < self.grid.x_lo) | (x > self.grid.x_hi)
        if outside.any():
            w = np.where(outside, 0.0, w)
            dw = np.where(outside, 0.0, dw)
        return w, dw

    def w(self, i: int, t: float, x):
        return self.evaluate(i, t, x)[0]

    def dxw(self, i: int, t: float, x):
        return self.evaluate(i, t, x)[1]


@dataclass
class AnalyticVelocityField:
    """Velocity field from callables ``w(t, x)`` and ``dxw(t, x)`` shared by all classes."""

    w_fn: object
    dxw_fn: object
    n_classes: int = 1
    t_lo: float = 0.0

    def evaluate(self, i: int, t: float, x):
        x = np.asarray(x, dtype=float)
        return (
            np.broadcast_to(np.asarray(self.w_fn(t, x), dtype=float), x.shape),
            np.broadcast_to(np.asarray(self.dxw_fn(t, x), dtype=float), x.shape),
        )

    def w(self, i, t, x):
        return self.evaluate(i, t, x)[0]

    def dxw(self, i, t, x):
        return self.evaluate(i, t, x)[1]


def pi_map(laws: Sequence, plan: ConvolutionPlan, times, states) -> VelocityFieldW:
    """Velocity fields of a trajectory given at ``times`` with ``states[m]`` of shape ``(n, N)``."""
    states = np.asarray(states, dtype=float)
    times = np.asarray(times, dtype=float)
    if states.ndim != 3 or states.shape[0] != times.size or times.size == 0:
        raise InvalidConfigurationError("pi_map needs one (n, N) state per time node")
    q = plan.apply(states)
    dq = plan.apply(states, derivative=True)
    return VelocityFieldW(plan.grid, list(laws), times, q, dq)


def _rk4_back(field, i: int, t: float, h: float, X: np.ndarray, E: np.ndarray):
    """One classical RK4 step of ``X' = w, E' = d/dx w`` from ``t`` down to ``t - h``."""
    k1, d1 = field.evaluate(i, t, X)
    k2, d2 = field.evaluate(i, t - 0.5 * h, X - 0.5 * h * k1)
    k3, d3 = field.evaluate(i, t - 0.5 * h, X - 0.5 * h * k2)
    k4, d4 = field.evaluate(i, t - h, X - h * k3)
    X = X - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    E = E + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return X, E


def characteristics_backward(field, i: int, t: float, x, substeps: int, t_end: float | None = None):
    """Follow ``x' = w_i(s, x)`` from ``(t, x)`` back to ``t_end``.

    Returns the foot ``X_i(t_end; t, x)`` and ``E = int_{t_end}^t d/dx w_i`` along
    the path, both accumulated by the same RK4 stages.
    """
    if substeps < 1:
        raise InvalidConfigurationError("substeps must be >= 1")
    t_end = getattr(field, "t_lo", 0.0) if t_end is None else t_end
    X = np.array(x, dtype=float, copy=True)
    E = np.zeros_like(X)
    h = (t - t_end) / substeps
    s = t
    for k in range(substeps):
        X, E = _rk4_back(field, i, s, h, X, E)
        s = t - (k + 1) * h
    return X, E


def _lookup(rho0_i: np.ndarray, grid: Grid1D, X: np.ndarray) -> np.ndarray:
    """Piecewise-constant value of cell data at ``X``; zero outside the domain."""
    idx = grid.cell_of(X)
    inside = (idx >= 0) & (idx < grid.n_cells)
    return np.where(inside, rho0_i[np.clip(idx, 0, grid.n_cells - 1)], 0.0)


LOOKUPS = ("tube", "point")

# Largest residual ratio accepted from the third iteration on.
CONTRACTION_RATIO = 0.9


def _march(field, i: int, times, X: np.ndarray, substeps: int):
    """Integrate targets at every node ``times[1:]`` (rows of ``X``) back to ``times[0]``."""
    M = times.size - 1
    E = np.zeros_like(X)
    for m in range(M - 1, -1, -1):
        h = (times[m + 1] - times[m]) / substeps
        Xa, Ea = X[m:], E[m:]
        for s in range(substeps):
            Xa, Ea = _rk4_back(field, i, times[m + 1] - s * h, h, Xa, Ea)
        X[m:], E[m:] = Xa, Ea
    return X, E


def sigma_solve(
    field,
    rho0,
    grid: Grid1D,
    times,
    substeps: int = 1,
    stats: dict | None = None,
    lookup: str = "tube",
) -> np.ndarray:
    """Solve the linear continuity equations driven by ``field`` on every node of ``times``.

    ``times[0]`` is the time of ``rho0``. Characteristics are integrated back to
    ``times[0]`` with ``substeps`` RK4 steps per node interval; all targets alive
    at a node are advanced together.

    ``lookup="point"`` evaluates the representation formula at cell centers:
    ``rho0`` read piecewise-constantly at the foot times ``exp(-E)``.
    ``lookup="tube"`` traces the two cell edges instead and returns the exact
    mass of ``rho0`` between their feet divided by ``dx``, i.e. the cell average
    of the same formula. It is continuous in the feet and conserves mass up to
    boundary exchange. Returns an array of shape ``(len(times), n, N)``.
    """
    if lookup not in LOOKUPS:
        raise InvalidConfigurationError(f"lookup must be one of {LOOKUPS}, got {lookup!r}")
    rho0 = np.asarray(rho0, dtype=float)
    times = np.asarray(times, dtype=float)
    n_cls, N = rho0.shape
    M = times.size - 1
    out = np.empty((M + 1, n_cls, N))
    out[0] = rho0
    if M == 0:
        return out
    pts = grid.edges if lookup == "tube" else grid.centers
    clamped = 0
    inflow = np.zeros(n_cls)
    outflow = np.zeros(n_cls)
    for i in range(n_cls):
        if not rho0[i].any():
            out[1:, i] = 0.0
            continue
        X, E = _march(field, i, times, np.broadcast_to(pts, (M, pts.size)).copy(), substeps)
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(E))):
            bad = np.argwhere(~np.isfinite(X + E))[0]
            raise NumericError(f"non-finite characteristic for class {i} at t={times[bad[0] + 1]}, x={pts[bad[1]]}")
        clamped += int(((X < grid.x_lo) | (X > grid.x_hi)).sum())
        if lookup == "tube":
            cum = np.concatenate(([0.0], np.cumsum(rho0[i]) * grid.dx))
            C = np.interp(X, grid.edges, cum)
            out[1:, i] = np.diff(C, axis=-1) / grid.dx
            # mass swept across each domain end by the last node
            inflow[i] = -C[-1, 0]
            outflow[i] = cum[-1] - C[-1, -1]
        else:
            out[1:, i] = _lookup(rho0[i], grid, X) * np.exp(-E)
    if stats is not None:
        stats["clamped"] = stats.get("clamped", 0) + clamped
        if lookup == "tube":
            stats["exchange"] = (inflow, outflow)
    return out


@dataclass
class LagrangianConfig:
    t_final: float
    snapshot_times: Sequence[float] = ()
    node_dt: float | None = None  # default: 8 dx / vmax
    substeps: int = 1
    lookup: str = "tube"
    tol: float = 1e-8
    max_iter: int = 60
    interval: float | None = None  # default: 4 node_dt
    min_interval: float = 1e-4
    engine: str = "auto"

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise InvalidConfigurationError("tol must be > 0")
        if self.substeps < 1:
            raise InvalidConfigurationError("substeps must be >= 1")
        if self.lookup not in LOOKUPS:
            raise InvalidConfigurationError(f"lookup must be one of {LOOKUPS}, got {self.lookup!r}")
        self.snapshot_times = sorted(float(t) for t in self.snapshot_times)


@dataclass
class SubintervalReport:
    t_start: float
    t_end: float
    iterations: int
    residuals: list
    halvings: int = 0

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0


@dataclass
class FixedPointReport:
    subintervals: list = field(default_factory=list)
    clamped_characteristics: int = 0

    @property
    def total_iterations(self) -> int:
        return sum(s.iterations for s in self.subintervals)


@dataclass
class LagrangianResult:
    trajectory: DensityTrajectory
    velocities: list
    report: FixedPointReport
    metadata: dict = field(default_factory=dict)
    # cumulative boundary exchange per class at each snapshot (tube lookup only)
    inflow: list = field(default_factory=list)
    outflow: list = field(default_factory=list)

    def mass_balance(self) -> np.ndarray:
        """Per snapshot and class: ``mass(t) - mass(t0) - inflow + outflow``."""
        g = self.trajectory.grid
        masses = np.array([g.dx * s.sum(axis=1) for s in self.trajectory.states])
        return masses - masses[0] - np.array(self.inflow) + np.array(self.outflow)


def sup_l1(a: np.ndarray, b: np.ndarray, dx: float) -> float:
    """``max_t sum_i ||a_i(t) - b_i(t)||_L1`` for stacked trajectories."""
    return float(dx * np.abs(a - b).sum(axis=(-1, -2)).max())


def apply_T(problem: Problem, plan: ConvolutionPlan, state, times, rho, config: LagrangianConfig, stats=None):
    """One application of ``Sigma o Pi`` to node trajectory ``rho`` on ``times``."""
    field_ = pi_map(problem.laws, plan, times, rho)
    return sigma_solve(field_, state, problem.grid, times, config.substeps, stats, config.lookup)


def iterate_subinterval(problem: Problem, plan: ConvolutionPlan, state, times, config: LagrangianConfig, stats=None):
    """Fixed-point iteration on one subinterval from the constant-in-time extension of ``state``.

    Returns ``(trajectory_nodes, residuals, status)``. Status is ``"converged"``,
    ``"slow"`` (from the third iteration on, a residual ratio above
    ``CONTRACTION_RATIO``) or ``"max_iter"``. The first two iterations may grow:
    the constant-in-time start is far from the fixed point on long intervals.
    """
    dx = problem.grid.dx
    rho = np.broadcast_to(state, (len(times),) + state.shape).copy()
    residuals: list[float] = []
    for _ in range(config.max_iter):
        new = apply_T(problem, plan, state, times, rho, config, stats)
        res = sup_l1(new, rho, dx)
        rho = new
        residuals.append(res)
        if res <= config.tol:
            return rho, residuals, "converged"
        if len(residuals) >= 3 and res > CONTRACTION_RATIO * residuals[-2]:
            return rho, residuals, "slow"
    return rho, residuals, "max_iter"


def fixed_point(problem: Problem, config: LagrangianConfig, observer=None) -> LagrangianResult:
    """Solve the nonlocal system by chained contractions on subintervals of ``[t0, t_final]``.

    Subintervals never straddle a snapshot time. Short subintervals are cheaper
    than long ones (marching cost grows with the square of the node count), so the
    nominal length is a few nodes; after a halving it grows back one doubling per
    converged subinterval.
    """
    grid = problem.grid
    t0 = problem.t0
    if not config.t_final > t0:
        raise InvalidConfigurationError(f"t_final ({config.t_final}) must exceed t0 ({t0})")
    snaps = config.snapshot_times
    if snaps and (snaps[0] < t0 - 1e-12 or snaps[-1] > config.t_final + 1e-12):
        raise InvalidConfigurationError(f"snapshot times {snaps} outside [{t0}, {config.t_final}]")
    node_dt = config.node_dt or 8.0 * grid.dx / max(problem.vmax, 1e-12)
    nominal = config.interval or 4.0 * node_dt
    plan = ConvolutionPlan(problem.kernels, grid, engine=config.engine)
    report = FixedPointReport()
    stats: dict = {}
    traj = DensityTrajectory(grid)
    velocities = []
    x = grid.centers
    inflow = np.zeros(problem.n_classes)
    outflow = np.zeros(problem.n_classes)
    flows_in, flows_out = [], []

    def record(t, state):
        field_ = pi_map(problem.laws, plan, [t], state[None])
        traj.append(t, state)
        velocities.append(np.stack([field_.w(i, t, x) for i in range(problem.n_classes)]))
        flows_in.append(inflow.copy())
        flows_out.append(outflow.copy())

    state = problem.rho0.copy()
    if snaps and abs(snaps[0] - t0) <= 1e-12:
        record(t0, state)
    if observer is not None:
        observer(t0, state)
    targets = sorted({t for t in snaps if t > t0} | {float(config.t_final)})
    t = t0
    interval = nominal
    for target in targets:
        while t < target - 1e-12 * max(1.0, abs(target)):
            halvings = 0
            while True:
                t_end = min(t + interval, target)
                if target - t_end < 1e-9 * interval:
                    t_end = target
                m = max(1, math.ceil((t_end - t) / node_dt - 1e-9))
                times = np.linspace(t, t_end, m + 1)
                rho, residuals, status = iterate_subinterval(problem, plan, state, times, config, stats)
                if status == "converged":
                    break
                sub = SubintervalReport(t, t_end, len(residuals), residuals, halvings)
                if interval / 2 < config.min_interval:
                    report.subintervals.append(sub)
                    raise ContractionError(
                        f"fixed point did not converge on [{t:.6g}, {t_end:.6g}] ({status})", report
                    )
                interval /= 2
                halvings += 1
                log.info("no contraction on [%g, %g]; halving to %g", t, t_end, interval)
            report.subintervals.append(SubintervalReport(t, t_end, len(residuals), residuals, halvings))
            if "exchange" in stats:
                inflow += stats["exchange"][0]
                outflow += stats["exchange"][1]
            if observer is not None:
                for tm, sm in zip(times[1:], rho[1:]):
                    observer(float(tm), sm)
            state = rho[-1].copy()
            t = t_end
            if halvings == 0:
                interval = min(interval * 2, nominal)
        if target in snaps:
            record(target, state)
    report.clamped_characteristics = stats.get("clamped", 0)
    meta = {
        "solver": "lagrangian",
        "node_dt": node_dt,
        "interval": nominal,
        "substeps": config.substeps,
        "tol": config.tol,
        "lookup": config.lookup,
        "outside_velocity": "w clamped to 0 outside [x_lo, x_hi]",
        "kernel_raw_defects": plan.raw_defects(),
    }
    return LagrangianResult(traj, velocities, report, meta, flows_in, flows_out)
