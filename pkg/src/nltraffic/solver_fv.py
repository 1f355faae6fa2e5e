"""Lax-Friedrichs finite-volume solver for the nonlocal multiclass system.

Each step evaluates the class velocities from discrete convolutions of the
current state, picks a global CFL step (shortened to land on snapshot times)
and applies the conservative Lax-Friedrichs update with free-flow ghost cells.
In ``local-lwr`` mode the convolutions are replaced by the point densities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _core
from .errors import (
    CflViolationError,
    FrozenStateError,
    InvalidConfigurationError,
    SolverDivergenceError,
)
from .kernels import ConvolutionPlan
from .mesh import DensityTrajectory, Grid1D, cfl_timestep
from .problem import Problem

log = logging.getLogger(__name__)

MODES = ("nonlocal", "local-lwr")


@dataclass
class FvConfig:
    t_final: float
    snapshot_times: Sequence[float] = ()
    cfl_safety: float = 0.9
    mode: str = "nonlocal"
    boundary_mode: str = "free-flow"
    engine: str = "auto"

    def __post_init__(self) -> None:
        if not (0 < self.cfl_safety <= 1):
            raise InvalidConfigurationError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.mode not in MODES:
            raise InvalidConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.boundary_mode != "free-flow":
            raise InvalidConfigurationError("only free-flow boundaries are supported")
        self.snapshot_times = sorted(float(t) for t in self.snapshot_times)


@dataclass
class StepRecord:
    m: int
    t: float
    dt: float
    vmax: np.ndarray

    @property
    def vmax_global(self) -> float:
        return float(self.vmax.max())


@dataclass
class FvResult:
    trajectory: DensityTrajectory
    velocities: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    # cumulative boundary exchange per class at each snapshot
    inflow: list = field(default_factory=list)
    outflow: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def mass_balance(self) -> np.ndarray:
        """Per snapshot and class: ``mass(t) - mass(t0) - inflow + outflow``."""
        g = self.trajectory.grid
        masses = np.array([g.dx * s.sum(axis=1) for s in self.trajectory.states])
        return masses - masses[0] - np.array(self.inflow) + np.array(self.outflow)


def compute_velocities(
    state: np.ndarray,
    plan: ConvolutionPlan | None,
    laws: Sequence,
    t: float,
    grid: Grid1D,
    mode: str = "nonlocal",
) -> np.ndarray:
    """Velocity of every class in every cell, shape ``(n, N)``."""
    x = grid.centers
    n = state.shape[0]
    out = np.empty_like(state)
    if mode == "local-lwr":
        for i in range(n):
            out[i] = laws[i].speed(t, x, state)
    else:
        q = plan.apply(state)
        if not np.all(np.isfinite(q)):
            raise SolverDivergenceError(f"non-finite convolution at t={t}")
        for i in range(n):
            out[i] = laws[i].speed(t, x, q[i])
    return out


def step_lf(state, velocities, dt: float, dx: float, return_fluxes: bool = False):
    """Lax-Friedrichs update of every class; ghost cells copy the boundary cell.

    With ``return_fluxes`` also returns the per-class mass entering at the left
    and leaving at the right during the step.
    """
    vmax = float(np.max(velocities)) if velocities.size else 0.0
    courant = dt * vmax / dx
    if courant > 1.0 + 1e-12:
        raise CflViolationError(courant, dt, dx, vmax)
    new, f_in, f_out = _core.lf_step(
        np.ascontiguousarray(state, dtype=float),
        np.ascontiguousarray(velocities, dtype=float),
        dt / dx,
    )
    if return_fluxes:
        return new, dt * np.asarray(f_in), dt * np.asarray(f_out)
    return new


def run(
    problem: Problem,
    config: FvConfig,
    dt_schedule: Sequence[float] | None = None,
    observer=None,
) -> FvResult:
    """Integrate from ``problem.t0`` to ``config.t_final``, storing every snapshot time.

    ``dt_schedule`` replays a previous run's step sizes (paired perturbation
    experiments); the CFL guard in ``step_lf`` still applies. ``observer(t,
    state, inflow, outflow)`` is called at t0 and after every step without
    influencing the step sizes.
    """
    grid = problem.grid
    t0 = problem.t0
    if not config.t_final > t0:
        raise InvalidConfigurationError(f"t_final ({config.t_final}) must exceed t0 ({t0})")
    snaps = config.snapshot_times
    if snaps and (snaps[0] < t0 - 1e-12 or snaps[-1] > config.t_final + 1e-12):
        raise InvalidConfigurationError(f"snapshot times {snaps} outside [{t0}, {config.t_final}]")
    plan = None
    if config.mode == "nonlocal":
        plan = ConvolutionPlan(problem.kernels, grid, engine=config.engine)

    state = problem.rho0.copy()
    traj = DensityTrajectory(grid)
    result = FvResult(
        trajectory=traj,
        metadata={
            "solver": "fv",
            "mode": config.mode,
            "boundary": "free-flow: ghost cell = boundary cell for rho and v; convolution uses zero extension",
            "snapshot_policy": "dt shortened to land exactly on each snapshot time",
            "cfl_safety": config.cfl_safety,
            "backend": _core.BACKEND,
            "kernel_raw_defects": plan.raw_defects() if plan else None,
        },
    )
    inflow = np.zeros(problem.n_classes)
    outflow = np.zeros(problem.n_classes)

    def record(t_snap: float, v: np.ndarray | None) -> None:
        if v is None:
            v = compute_velocities(state, plan, problem.laws, t_snap, grid, config.mode)
        traj.append(t_snap, state)
        result.velocities.append(v)
        result.inflow.append(inflow.copy())
        result.outflow.append(outflow.copy())

    targets = sorted({t for t in snaps if t > t0} | {float(config.t_final)})
    if snaps and abs(snaps[0] - t0) <= 1e-12:
        record(t0, None)

    t = t0
    m = 0
    if observer is not None:
        observer(t, state, inflow, outflow)
    for target in targets:
        while t < target:
            v = compute_velocities(state, plan, problem.laws, t, grid, config.mode)
            if not np.all(np.isfinite(v)):
                raise SolverDivergenceError(f"non-finite velocity at step {m}, t={t:.6g}", step=m, partial=traj)
            vmax = v.max(axis=1)
            if dt_schedule is not None:
                if m >= len(dt_schedule):
                    raise InvalidConfigurationError("dt_schedule exhausted before t_final")
                dt = float(dt_schedule[m])
            else:
                if not vmax.max() > 0:
                    raise FrozenStateError(
                        f"all velocities vanished at t={t:.6g} < t_final={config.t_final}", t, partial=traj
                    )
                dt = cfl_timestep(float(vmax.max()), grid.dx, config.cfl_safety)
            remaining = target - t
            landed = remaining <= dt
            if landed:
                dt = remaining
            new, f_in, f_out = step_lf(state, v, dt, grid.dx, return_fluxes=True)
            if not np.all(np.isfinite(new)):
                raise SolverDivergenceError(f"non-finite state at step {m}, t={t:.6g}", step=m, partial=traj)
            state = new
            inflow += f_in
            outflow += f_out
            result.steps.append(StepRecord(m, t, dt, vmax))
            t = target if landed else t + dt
            m += 1
            if observer is not None:
                observer(t, state, inflow, outflow)
        if target in snaps:
            record(target, None)
    log.debug("fv run finished: %d steps, backend %s", m, _core.BACKEND)
    return result


def run_local_lwr(problem: Problem, config: FvConfig, dt_schedule=None, observer=None) -> FvResult:
    """Same scheme with the convolutions replaced by point densities (classical LWR)."""
    local = FvConfig(
        t_final=config.t_final,
        snapshot_times=config.snapshot_times,
        cfl_safety=config.cfl_safety,
        mode="local-lwr",
        engine=config.engine,
    )
    return run(problem, local, dt_schedule=dt_schedule, observer=observer)
