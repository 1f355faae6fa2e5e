"""Machine-checkable properties of both solvers, run by ``nltraffic property-suite``."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import solver_fv as fv
from .diagnostics import check_tv_bound, comb_initial_datum, estimate_Q, stability_experiment
from .kernels import ConvolutionPlan, KernelMatrix, KernelSpec, convolve, discretize
from .mesh import Grid1D
from .problem import Problem
from .scenario import build_problem, preset, run_scenario
from .solver_lagrangian import (
    AnalyticVelocityField,
    LagrangianConfig,
    apply_T,
    characteristics_backward,
    fixed_point,
    iterate_subinterval,
    sup_l1,
)
from .speed_laws import ConstantLaw

log = logging.getLogger(__name__)

SCENARIO_PRESETS = ("horizon", "overtake", "bottleneck")


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def _quartic(x, c, w):
    s = np.clip(1.0 - ((x - c) / w) ** 2, 0.0, None)
    return s * s


def fv_transport_errors(cells=(200, 400, 800)) -> list[float]:
    """L1 error of FV transport of a smooth bump at unit speed up to t = 1."""
    errs = []
    for n in cells:
        g = Grid1D(0.0, 6.0, n)
        x = g.centers
        p = Problem(g, _quartic(x, 2.0, 1.0), [ConstantLaw(1.0)], KernelMatrix.uniform(1, KernelSpec(1.0, 0.01)))
        r = fv.run(p, fv.FvConfig(1.0, [1.0]))
        errs.append(g.dx * float(np.abs(r.trajectory.states[-1][0] - _quartic(x, 3.0, 1.0)).sum()))
    return errs


def characteristic_errors(substeps=(4, 8, 16), t: float = 1.0) -> list[float]:
    """Foot error on ``w = x`` (foot ``x e^{-t}``) for a set of starting points."""
    field = AnalyticVelocityField(lambda s, x: x, lambda s, x: np.ones_like(x))
    x = np.linspace(0.5, 2.0, 7)
    exact = x * np.exp(-t)
    return [float(np.abs(characteristics_backward(field, 0, t, x, k, t_end=0.0)[0] - exact).max()) for k in substeps]


def comb_shift_distance(m: int = 4, eps: float = 1.0 / 16, t: float = 1.0, cells: int = 2000) -> float:
    g = Grid1D(0.0, 5.0, cells)
    p = Problem(g, comb_initial_datum(m, g), [ConstantLaw(1.0)], KernelMatrix.uniform(1, KernelSpec(1.0, 0.01)))
    r = fixed_point(p, LagrangianConfig(t + eps, [t, t + eps]))
    a, b = r.trajectory.states
    return g.dx * float(np.abs(b - a).sum())


def engine_agreement(n: int = 10_000, seed: int = 0) -> float:
    g = Grid1D(0.0, 10.0, n)
    dk = discretize(KernelSpec(1.5, 0.01), g)
    rho = np.random.default_rng(seed).random(n)
    a = convolve(dk, rho, engine="direct")
    b = convolve(dk, rho, engine="fft")
    return float(np.abs(a - b).max() / np.abs(a).max())


def fixed_point_idempotence(problem: Problem, t_end: float = 0.5, tol: float = 1e-8) -> tuple[float, float]:
    """Converge on ``[t0, t_end]`` and report the change from one further application of T."""
    cfg = LagrangianConfig(t_end, [t_end], tol=tol)
    plan = ConvolutionPlan(problem.kernels, problem.grid)
    node_dt = 8.0 * problem.grid.dx / problem.vmax
    times = np.linspace(problem.t0, t_end, max(2, int(np.ceil((t_end - problem.t0) / node_dt)) + 1))
    rho, _, status = iterate_subinterval(problem, plan, problem.rho0, times, cfg)
    if status != "converged":
        return float("inf"), tol
    again = apply_T(problem, plan, problem.rho0, times, rho, cfg)
    return sup_l1(again, rho, problem.grid.dx), tol


def run_suite(quick: bool = False) -> list[Check]:
    cells = 400 if quick else 2000
    checks: list[Check] = []
    for name in SCENARIO_PRESETS:
        for solver in ("fv-nonlocal", "lagrangian"):
            cfg = preset(name, cells=cells, solver=solver)
            start = time.perf_counter()
            run = run_scenario(cfg)
            elapsed = time.perf_counter() - start
            mass0 = run.trajectory.grid.dx * run.trajectory.states[0].sum(axis=1)
            drift = float(np.max(np.abs(run.mass_balance()) / mass0))
            tol = 1e-10 if solver != "lagrangian" else 1e-3
            checks.append(Check(f"mass-balance/{name}/{solver}", drift <= tol, drift, tol, f"{elapsed:.1f}s"))
            low = min(float(s.min()) for s in run.trajectory.states)
            checks.append(Check(f"positivity/{name}/{solver}", low >= 0.0, low, 0.0))
            problem = build_problem(cfg)
            q = estimate_Q(problem.rho0, problem.kernels, problem.laws, problem.grid)
            rows = check_tv_bound(run.trajectory, q)
            worst = max(r.tv / r.bound if r.bound > 0 else (0.0 if r.tv == 0 else np.inf) for r in rows)
            checks.append(Check(f"tv-bound/{name}/{solver}", all(r.passed for r in rows), worst, 1.0,
                                f"Q={q.Q:.3g}"))

    d = comb_shift_distance()
    checks.append(Check("comb-time-lipschitz", abs(d - 0.5) <= 0.025, d, 0.5, "m=4, eps=1/16"))

    errs = characteristic_errors()
    ratio = min(a / b for a, b in zip(errs, errs[1:]))
    checks.append(Check("characteristics-order", ratio >= 12.0, ratio, 12.0))
    errs = fv_transport_errors()
    ratio = min(a / b for a, b in zip(errs, errs[1:]))
    checks.append(Check("fv-transport-order", ratio >= 1.8, ratio, 1.8))
    rel = engine_agreement(4000 if quick else 10_000)
    checks.append(Check("engine-agreement", rel <= 1e-10, rel, 1e-10))

    horizon = build_problem(preset("horizon", cells=400 if quick else 1000))
    probes = [0.9, 3.3, 6.4]
    for kind in ("initial-data", "speed-law", "kernel"):
        rep = stability_experiment(kind, horizon, [1e-2, 1e-3, 1e-4], probes)
        checks.append(Check(f"stability-linear/{kind}", rep.linear(), max(rep.spread()), 2.0))
        zero = stability_experiment(kind, horizon, [0.0, 1e-2, 1e-3, 1e-4], probes[:1])
        checks.append(Check(f"stability-identity/{kind}", bool(np.all(zero.distances[0] == 0)),
                            float(zero.distances[0].max()), 0.0))

    diff, tol = fixed_point_idempotence(build_problem(preset("bottleneck", cells=cells)))
    checks.append(Check("fixed-point-idempotent", diff <= 2 * tol, diff, 2 * tol))
    return checks


def write_report(checks: list[Check], path: str | Path | None) -> str:
    lines = ["check,passed,value,threshold,detail"]
    for c in checks:
        lines.append(f"{c.name},{int(c.passed)},{c.value:.17g},{c.threshold:.17g},{c.detail}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


__all__ = ["Check", "run_suite", "write_report"]
