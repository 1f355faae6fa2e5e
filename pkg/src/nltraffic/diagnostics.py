"""Empirical checks of the well-posedness estimates: growth rate Q, TV bound, stability scaling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import solver_fv as fv
from .errors import InvalidConfigurationError
from .mesh import DensityTrajectory, Grid1D, l1_norm, tv_discrete
from .problem import Problem
from .solver_lagrangian import LagrangianConfig, fixed_point
from .speed_laws import AssumptionReport, law_norm, validate_assumption_v

log = logging.getLogger(__name__)

KINDS = ("initial-data", "speed-law", "kernel", "time")
SOLVERS = ("fv", "fv-local-lwr", "lagrangian")


@dataclass
class QEstimate:
    """Inputs and value of the growth rate ``Q = (3 + M e0 + 3 M e1 + M^2 e1^2 + M e2) |v|``."""

    M: float
    eta_norm: float
    deta_norm: float
    ddeta_norm: float
    v_norm: float
    law_reports: list = field(default_factory=list)

    @property
    def Q(self) -> float:
        M, e0, e1, e2 = self.M, self.eta_norm, self.deta_norm, self.ddeta_norm
        return (3.0 + M * e0 + 3.0 * M * e1 + M * M * e1 * e1 + M * e2) * self.v_norm


def estimate_Q(
    rho0,
    kernels,
    laws: Sequence,
    grid: Grid1D,
    reports: Sequence[AssumptionReport] | None = None,
    t_range: tuple[float, float] = (0.0, 0.0),
) -> QEstimate:
    """Evaluate ``Q`` with exact kernel sup-norms and sampled speed-law bounds.

    The law bounds are sampled over the reachable convolution range
    ``[0, M * sup|eta|]`` and the grid's domain.
    """
    rho0 = np.asarray(rho0, dtype=float)
    M = float(l1_norm(rho0, grid).sum())
    e0, e1, e2 = kernels.sup_norms()
    if reports is None:
        q_hi = max(M * e0, 1e-3)
        reports = []
        for law in laws:
            try:
                reports.append(
                    validate_assumption_v(
                        law,
                        n_classes=len(laws),
                        q_range=(0.0, q_hi),
                        x_range=(grid.x_lo, grid.x_hi),
                        t_range=t_range,
                        n_t=1 if t_range[0] == t_range[1] else 5,
                    )
                )
            except NotImplementedError as exc:
                raise InvalidConfigurationError(f"speed law {law!r} provides no derivative bounds") from exc
    if len(reports) != len(laws):
        raise InvalidConfigurationError(f"{len(reports)} law reports for {len(laws)} laws")
    return QEstimate(M, e0, e1, e2, law_norm(list(reports)), list(reports))


@dataclass
class TvRow:
    t: float
    tv: float
    bound: float
    passed: bool


def tv_bound(tv0: float, Q: float, M: float, elapsed: float) -> float:
    """``(TV0 + Q t M) e^{Q t}``; infinite once the exponential overflows."""
    base = tv0 + Q * elapsed * M
    if base == 0.0:
        return 0.0
    growth = Q * elapsed
    if growth > 700.0:
        return math.inf
    return base * math.exp(growth)


def check_tv_bound(traj: DensityTrajectory, q: QEstimate, t0: float | None = None) -> list[TvRow]:
    """Compare the total variation of every slice (summed over classes) with the bound.

    The first slice is the initial datum unless ``t0`` says otherwise.
    """
    states = traj.states
    if not states:
        return []
    t0 = traj.times[0] if t0 is None else t0
    tv0 = float(tv_discrete(states[0]).sum())
    rows = []
    for t, s in zip(traj.times, states):
        tv = float(tv_discrete(s).sum())
        bound = tv_bound(tv0, q.Q, q.M, t - t0)
        rows.append(TvRow(t, tv, bound, tv <= bound + 1e-12 * max(1.0, bound)))
    return rows


def comb_initial_datum(m: int, grid: Grid1D, height: float = 1.0) -> np.ndarray:
    """``m`` teeth ``[i/m, i/m + 1/(2m)]``, ``i = 1..m``: TV ``2m`` and mass ``1/2`` at unit height."""
    if m < 1:
        raise InvalidConfigurationError(f"comb needs m >= 1, got {m}")
    width = 1.0 / (2 * m)
    if width < 4 * grid.dx * (1 - 1e-9):
        raise InvalidConfigurationError(f"comb with m={m} needs at least 4 cells per tooth (dx={grid.dx})")
    if grid.x_lo > 1.0 / m + 1e-12 or grid.x_hi < 1.0 + width - 1e-12:
        raise InvalidConfigurationError(f"domain [{grid.x_lo}, {grid.x_hi}] does not contain [{1 / m}, {1 + width}]")
    out = np.zeros(grid.n_cells)
    x = grid.centers
    for i in range(1, m + 1):
        lo, hi = i / m, i / m + width
        if not (grid.aligned(lo) and grid.aligned(hi)):
            raise InvalidConfigurationError(f"comb edge {lo} or {hi} is not a cell edge (dx={grid.dx})")
        out[(x > lo) & (x < hi)] = height
    return out[None]


@dataclass
class StabilityReport:
    kind: str
    epsilons: list
    probe_times: list
    distances: np.ndarray  # (len(epsilons), len(probe_times))
    configs: list = field(default_factory=list)
    solver: str = "fv"
    max_spread: float = 2.0

    @property
    def ratios(self) -> np.ndarray:
        eps = np.asarray(self.epsilons, dtype=float)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(eps > 0, self.distances / eps, np.nan)

    def spread(self) -> list[float]:
        """Max/min of ``distance / eps`` over nonzero ``eps``, per probe time (1 if all zero)."""
        out = []
        r = self.ratios[np.asarray(self.epsilons) > 0]
        for col in r.T:
            if np.all(col == 0):
                out.append(1.0)
            elif np.any(col <= 0):
                out.append(math.inf)
            else:
                out.append(float(col.max() / col.min()))
        return out

    def linear(self) -> bool:
        return all(s <= self.max_spread for s in self.spread())

    def growth(self, t: float, factor: float = 2.0) -> np.ndarray:
        """``distance(factor t) / distance(t)`` per epsilon; both times must be probes."""
        times = np.asarray(self.probe_times)
        i = int(np.argmin(np.abs(times - t)))
        j = int(np.argmin(np.abs(times - factor * t)))
        if abs(times[i] - t) > 1e-9 or abs(times[j] - factor * t) > 1e-9:
            raise InvalidConfigurationError(f"probes must include {t} and {factor * t}")
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.distances[:, j] / self.distances[:, i]


def _check_progression(eps: Sequence[float]) -> None:
    nz = sorted(e for e in eps if e != 0)
    if any(e < 0 for e in eps):
        raise InvalidConfigurationError("perturbation sizes must be non-negative")
    if len(nz) < 3:
        raise InvalidConfigurationError("need at least 3 nonzero perturbation sizes")
    r = [b / a for a, b in zip(nz, nz[1:])]
    if max(r) / min(r) > 1 + 1e-6:
        raise InvalidConfigurationError(f"perturbation sizes {nz} are not a geometric progression")


def solve_at(problem: Problem, solver: str, times: Sequence[float], t_final: float | None = None,
             cfl_safety: float = 0.9, dt_schedule=None, lag_config: dict | None = None):
    """States at ``times`` plus the step schedule used (FV only)."""
    times = sorted(set(float(t) for t in times))
    t_final = times[-1] if t_final is None else t_final
    if solver in ("fv", "fv-local-lwr"):
        mode = "nonlocal" if solver == "fv" else "local-lwr"
        res = fv.run(problem, fv.FvConfig(t_final, times, cfl_safety, mode=mode), dt_schedule=dt_schedule)
        return dict(zip(res.trajectory.times, res.trajectory.states)), [s.dt for s in res.steps]
    if solver == "lagrangian":
        res = fixed_point(problem, LagrangianConfig(t_final, times, **(lag_config or {})))
        return dict(zip(res.trajectory.times, res.trajectory.states)), None
    raise InvalidConfigurationError(f"unknown solver {solver!r}")


def _perturb(problem: Problem, kind: str, eps: float, block) -> tuple[Problem, dict]:
    if kind == "initial-data":
        lo, hi = block
        x = problem.grid.centers
        chi = ((x > lo) & (x < hi)).astype(float)
        return problem.with_(rho0=problem.rho0 + eps * chi[None]), {"kind": kind, "eps": eps, "block": [lo, hi]}
    if kind == "speed-law":
        return problem.with_(laws=[law.scaled(1.0 + eps) for law in problem.laws]), {
            "kind": kind, "eps": eps, "vmax_factor": 1.0 + eps}
    if kind == "kernel":
        return problem.with_(kernels=problem.kernels.map(lambda k: k.scaled(forward=1.0 + eps))), {
            "kind": kind, "eps": eps, "forward_factor": 1.0 + eps}
    raise InvalidConfigurationError(f"unknown perturbation kind {kind!r}")


def _default_block(problem: Problem) -> tuple[float, float]:
    g = problem.grid
    nz = np.nonzero(problem.rho0.sum(axis=0) > 0)[0]
    if nz.size == 0:
        return g.x_lo, g.x_hi
    return float(g.edges[nz[0]]), float(g.edges[nz[-1] + 1])


def stability_experiment(
    kind: str,
    problem: Problem,
    epsilons: Sequence[float],
    probe_times: Sequence[float],
    solver: str = "fv",
    cfl_safety: float = 0.9,
    block: tuple[float, float] | None = None,
    lag_config: dict | None = None,
    max_spread: float = 2.0,
) -> StabilityReport:
    """Measure ``||rho_eps(t) - rho(t)||`` (summed over classes) against ``eps``.

    FV perturbed runs replay the base run's step sizes, so a perturbation never
    changes the time grid (a changed step count would add an O(dx) jump that does
    not scale with ``eps``). For ``kind="time"`` the distance is
    ``||rho(t + eps) - rho(t)||`` along the base run.
    """
    if kind not in KINDS:
        raise InvalidConfigurationError(f"kind must be one of {KINDS}, got {kind!r}")
    _check_progression(epsilons)
    probes = sorted(float(t) for t in probe_times)
    dx = problem.grid.dx
    eps_list = [float(e) for e in epsilons]
    dist = np.zeros((len(eps_list), len(probes)))
    configs = []
    if kind == "time":
        times = set(probes) | {t + e for t in probes for e in eps_list}
        states, _ = solve_at(problem, solver, times, cfl_safety=cfl_safety, lag_config=lag_config)
        lookup = {round(t, 12): s for t, s in states.items()}
        for a, e in enumerate(eps_list):
            for b, t in enumerate(probes):
                dist[a, b] = dx * np.abs(lookup[round(t + e, 12)] - lookup[round(t, 12)]).sum()
            configs.append({"kind": kind, "eps": e})
        return StabilityReport(kind, eps_list, probes, dist, configs, solver, max_spread)

    block = block or _default_block(problem)
    base, schedule = solve_at(problem, solver, probes, cfl_safety=cfl_safety, lag_config=lag_config)
    for a, e in enumerate(eps_list):
        perturbed, desc = _perturb(problem, kind, e, block)
        configs.append(desc)
        states, _ = solve_at(perturbed, solver, probes, cfl_safety=cfl_safety, dt_schedule=schedule,
                             lag_config=lag_config)
        for b, t in enumerate(probes):
            dist[a, b] = dx * np.abs(states[t] - base[t]).sum()
        log.info("%s eps=%g distances %s", kind, e, dist[a])
    return StabilityReport(kind, eps_list, probes, dist, configs, solver, max_spread)
