"""Scenario configuration, presets, run orchestration, summaries and CSV output."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import _core
from . import solver_fv as fv
from .diagnostics import comb_initial_datum
from .errors import ConfigError, NltrafficError
from .kernels import KernelMatrix, KernelSpec, SampledKernel
from .mesh import DensityTrajectory, Grid1D, tv_discrete
from .problem import Problem
from .solver_lagrangian import LagrangianConfig, fixed_point
from .speed_laws import BottleneckProfile, ConstantLaw, CubicLaw

log = logging.getLogger(__name__)

SOLVER_ALIASES = {
    "fv": "fv-nonlocal",
    "fv-nonlocal": "fv-nonlocal",
    "lwr": "fv-local-lwr",
    "fv-local-lwr": "fv-local-lwr",
    "lagrangian": "lagrangian",
}
TOP_KEYS = {
    "name", "domain", "n_cells", "t_o", "t_final", "snapshots", "classes", "kernels",
    "solver", "cfl_safety", "seed", "lagrangian", "summary",
}
LAGRANGIAN_KEYS = {"tol", "max_iter", "node_dt", "substeps", "lookup", "interval"}
SUMMARY_KEYS = {"theta_fraction", "phi", "marker"}
DEFAULT_CELLS = 2000
FULL_CELLS = 10000


# ---------------------------------------------------------------- config types


@dataclass(frozen=True)
class ClassSpec:
    law: str  # "cubic" | "constant"
    vmax: float
    profile: str  # "none" | "bottleneck"
    blocks: tuple  # ((lo, hi, value), ...)
    comb: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    domain: tuple
    n_cells: int
    t_final: float
    snapshots: tuple
    classes: tuple
    kernels: tuple  # n x n of ("bump", f, b) or ("taps", taps, dx, origin)
    solver: str = "fv-nonlocal"
    t_o: float = 0.0
    cfl_safety: float = 0.9
    seed: int = 0
    lagrangian: tuple = ()  # sorted (key, value) pairs
    theta_fraction: float = 0.01
    phi: float = 0.999
    marker: float | None = None

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def with_(self, **changes) -> "ScenarioConfig":
        doc = to_document(self)
        for k, v in changes.items():
            doc[k] = v
        return parse_config(doc)


# ---------------------------------------------------------------- parsing


class _Collector:
    def __init__(self) -> None:
        self.errors: list[str] = []

    def add(self, path: str, msg: str) -> None:
        self.errors.append(f"{path}: {msg}")

    def number(self, doc, key, path, *, positive=False, nonneg=False, default=None, integer=False):
        if key not in doc:
            if default is None:
                self.add(f"{path}.{key}" if path else key, "missing")
            return default
        v = doc[key]
        where = f"{path}.{key}" if path else key
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.add(where, f"must be a finite number, got {v!r}")
            return default
        if integer and int(v) != v:
            self.add(where, f"must be an integer, got {v!r}")
            return default
        if positive and not v > 0:
            self.add(where, f"must be > 0, got {v!r}")
            return default
        if nonneg and v < 0:
            self.add(where, f"must be >= 0, got {v!r}")
            return default
        return int(v) if integer else float(v)

    def unknown(self, doc: dict, allowed: set, path: str) -> None:
        for k in sorted(set(doc) - allowed):
            self.add(f"{path}.{k}" if path else k, "unknown key")


def _parse_kernel(doc, path: str, col: _Collector):
    if not isinstance(doc, dict):
        col.add(path, "kernel must be an object {f, b} or {taps, dx}")
        return None
    if "taps" in doc:
        col.unknown(doc, {"taps", "dx", "origin"}, path)
        taps = doc.get("taps")
        if not isinstance(taps, list) or not taps or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) and math.isfinite(t) and t >= 0 for t in taps
        ):
            col.add(f"{path}.taps", "must be a non-empty list of non-negative numbers")
            return None
        if not any(taps):
            col.add(f"{path}.taps", "must not be identically zero")
            return None
        dx = col.number(doc, "dx", path, positive=True)
        origin = col.number(doc, "origin", path, nonneg=True, integer=True, default=0)
        if origin is not None and origin >= len(taps):
            col.add(f"{path}.origin", f"must index into taps (len {len(taps)})")
            return None
        if dx is None:
            return None
        return ("taps", tuple(float(t) for t in taps), dx, origin)
    col.unknown(doc, {"f", "b"}, path)
    f = col.number(doc, "f", path, positive=True)
    b = col.number(doc, "b", path, positive=True)
    if f is None or b is None:
        return None
    return ("bump", f, b)


def _parse_class(doc, path: str, col: _Collector):
    if not isinstance(doc, dict):
        col.add(path, "class must be an object {speed, initial}")
        return None
    col.unknown(doc, {"speed", "initial"}, path)
    sp = doc.get("speed", {"law": "cubic"})
    if not isinstance(sp, dict):
        col.add(f"{path}.speed", "must be an object")
        return None
    col.unknown(sp, {"law", "vmax", "profile"}, f"{path}.speed")
    law = sp.get("law", "cubic")
    if law not in ("cubic", "constant"):
        col.add(f"{path}.speed.law", f"must be 'cubic' or 'constant', got {law!r}")
    vmax = col.number(sp, "vmax", f"{path}.speed", positive=True, default=1.0)
    profile = sp.get("profile", "none")
    if profile not in ("none", "bottleneck"):
        col.add(f"{path}.speed.profile", f"must be 'none' or 'bottleneck', got {profile!r}")
    if law == "constant" and profile != "none":
        col.add(f"{path}.speed.profile", "a constant law takes no profile")
    ini = doc.get("initial")
    if not isinstance(ini, dict):
        col.add(f"{path}.initial", "missing or not an object")
        return None
    col.unknown(ini, {"blocks", "comb"}, f"{path}.initial")
    blocks = []
    for k, blk in enumerate(ini.get("blocks", [])):
        bp = f"{path}.initial.blocks[{k}]"
        if not isinstance(blk, dict):
            col.add(bp, "must be an object {lo, hi, value}")
            continue
        col.unknown(blk, {"lo", "hi", "value"}, bp)
        lo = col.number(blk, "lo", bp)
        hi = col.number(blk, "hi", bp)
        val = col.number(blk, "value", bp, nonneg=True)
        if None in (lo, hi, val):
            continue
        if not hi > lo:
            col.add(bp, f"hi ({hi}) must exceed lo ({lo})")
            continue
        blocks.append((lo, hi, val))
    comb = col.number(ini, "comb", f"{path}.initial", positive=True, integer=True, default=0) if "comb" in ini else 0
    if not blocks and not comb:
        col.add(f"{path}.initial", "needs 'blocks' or 'comb'")
    return ClassSpec(law, vmax if vmax is not None else 1.0, profile, tuple(blocks), comb or 0)


def parse_config(document: dict) -> ScenarioConfig:
    """Validate a JSON-like document; every violation is reported with its path."""
    col = _Collector()
    if not isinstance(document, dict):
        raise ConfigError(["<root>: document must be a JSON object"])
    col.unknown(document, TOP_KEYS, "")

    dom = document.get("domain")
    domain = None
    if not (isinstance(dom, list) and len(dom) == 2 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in dom)):
        col.add("domain", "must be [x_lo, x_hi] with finite numbers")
    elif not dom[1] > dom[0]:
        col.add("domain", f"x_hi ({dom[1]}) must exceed x_lo ({dom[0]})")
    else:
        domain = (float(dom[0]), float(dom[1]))
    n_cells = col.number(document, "n_cells", "", integer=True, default=DEFAULT_CELLS)
    if n_cells is not None and n_cells < 2:
        col.add("n_cells", f"must be >= 2, got {n_cells}")
    t_o = col.number(document, "t_o", "", default=0.0)
    t_final = col.number(document, "t_final", "")
    if t_final is not None and t_o is not None and not t_final > t_o:
        col.add("t_final", f"must exceed t_o ({t_o})")
    snaps = document.get("snapshots", [])
    snapshots = ()
    if not isinstance(snaps, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in snaps):
        col.add("snapshots", "must be a list of numbers")
    else:
        snapshots = tuple(sorted(float(v) for v in snaps))
        if len(set(snapshots)) != len(snapshots):
            col.add("snapshots", "duplicate times")
        if t_final is not None and t_o is not None:
            for v in snapshots:
                if v < t_o or v > t_final:
                    col.add("snapshots", f"time {v} outside [t_o, t_final] = [{t_o}, {t_final}]")

    raw_classes = document.get("classes")
    classes = []
    if not isinstance(raw_classes, list) or not raw_classes:
        col.add("classes", "must be a non-empty list")
    else:
        for i, c in enumerate(raw_classes):
            spec = _parse_class(c, f"classes[{i}]", col)
            if spec is not None:
                classes.append(spec)
    n = len(raw_classes) if isinstance(raw_classes, list) else 0

    kern = document.get("kernels")
    kernels = None
    if isinstance(kern, dict):
        k = _parse_kernel(kern, "kernels", col)
        kernels = tuple(tuple(k for _ in range(n)) for _ in range(n)) if k else None
    elif isinstance(kern, list):
        if len(kern) != n:
            col.add("kernels", f"has {len(kern)} rows for {n} classes")
        else:
            rows = []
            for i, row in enumerate(kern):
                if isinstance(row, dict):
                    k = _parse_kernel(row, f"kernels[{i}]", col)
                    rows.append(tuple(k for _ in range(n)))
                elif isinstance(row, list) and len(row) == n:
                    rows.append(tuple(_parse_kernel(e, f"kernels[{i}][{j}]", col) for j, e in enumerate(row)))
                else:
                    col.add(f"kernels[{i}]", f"row must be a kernel or a list of {n} kernels")
            kernels = tuple(rows)
    else:
        col.add("kernels", "must be a kernel object or an n x n matrix")

    solver = document.get("solver", "fv-nonlocal")
    if solver not in SOLVER_ALIASES:
        col.add("solver", f"must be one of {sorted(SOLVER_ALIASES)}, got {solver!r}")
    cfl = col.number(document, "cfl_safety", "", default=0.9)
    if cfl is not None and not 0 < cfl <= 1:
        col.add("cfl_safety", f"must lie in (0, 1], got {cfl}")
    seed = col.number(document, "seed", "", integer=True, nonneg=True, default=0)

    lag = document.get("lagrangian", {})
    lag_items = ()
    if not isinstance(lag, dict):
        col.add("lagrangian", "must be an object")
    else:
        col.unknown(lag, LAGRANGIAN_KEYS, "lagrangian")
        if "lookup" in lag and lag["lookup"] not in ("tube", "point"):
            col.add("lagrangian.lookup", "must be 'tube' or 'point'")
        for key in ("tol", "node_dt", "interval"):
            if key in lag and lag[key] is not None:
                col.number(lag, key, "lagrangian", positive=True)
        for key in ("max_iter", "substeps"):
            if key in lag:
                col.number(lag, key, "lagrangian", positive=True, integer=True)
        lag_items = tuple(sorted((k, v) for k, v in lag.items() if k in LAGRANGIAN_KEYS))

    summ = document.get("summary", {})
    theta, phi, marker = 0.01, 0.999, None
    if not isinstance(summ, dict):
        col.add("summary", "must be an object")
    else:
        col.unknown(summ, SUMMARY_KEYS, "summary")
        theta = col.number(summ, "theta_fraction", "summary", positive=True, default=0.01)
        phi = col.number(summ, "phi", "summary", positive=True, default=0.999)
        if phi is not None and phi > 1:
            col.add("summary.phi", f"must lie in (0, 1], got {phi}")
        if summ.get("marker") is not None:
            marker = col.number(summ, "marker", "summary")

    name = document.get("name", "scenario")
    if not isinstance(name, str):
        col.add("name", "must be a string")

    cfg = None
    if not col.errors:
        cfg = ScenarioConfig(
            name=name, domain=domain, n_cells=n_cells, t_final=t_final, snapshots=snapshots,
            classes=tuple(classes), kernels=kernels, solver=SOLVER_ALIASES[solver], t_o=t_o,
            cfl_safety=cfl, seed=seed, lagrangian=lag_items, theta_fraction=theta, phi=phi, marker=marker,
        )
        # semantic checks needing a grid
        try:
            build_problem(cfg)
        except NltrafficError as exc:
            col.add("classes", str(exc))
    if col.errors:
        raise ConfigError(col.errors)
    return cfg


def _kernel_doc(k) -> dict:
    if k[0] == "bump":
        return {"f": k[1], "b": k[2]}
    return {"taps": list(k[1]), "dx": k[2], "origin": k[3]}


def to_document(cfg: ScenarioConfig) -> dict:
    """Inverse of ``parse_config`` (canonical form: full kernel matrix, explicit defaults)."""
    classes = []
    for c in cfg.classes:
        ini: dict[str, Any] = {}
        if c.blocks:
            ini["blocks"] = [{"lo": lo, "hi": hi, "value": v} for lo, hi, v in c.blocks]
        if c.comb:
            ini["comb"] = c.comb
        classes.append({"speed": {"law": c.law, "vmax": c.vmax, "profile": c.profile}, "initial": ini})
    summary: dict[str, Any] = {"theta_fraction": cfg.theta_fraction, "phi": cfg.phi}
    if cfg.marker is not None:
        summary["marker"] = cfg.marker
    return {
        "name": cfg.name,
        "domain": list(cfg.domain),
        "n_cells": cfg.n_cells,
        "t_o": cfg.t_o,
        "t_final": cfg.t_final,
        "snapshots": list(cfg.snapshots),
        "classes": classes,
        "kernels": [[_kernel_doc(k) for k in row] for row in cfg.kernels],
        "solver": cfg.solver,
        "cfl_safety": cfg.cfl_safety,
        "seed": cfg.seed,
        "lagrangian": dict(cfg.lagrangian),
        "summary": summary,
    }


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    return parse_config(doc)


# ---------------------------------------------------------------- presets


def _bump(f, b):
    return {"f": f, "b": b}


def _horizon() -> dict:
    cls = {"speed": {"law": "cubic", "vmax": 1.0}, "initial": {"blocks": [{"lo": 0.0, "hi": 2.0, "value": 0.5}]}}
    return {
        "name": "horizon",
        "domain": [0.0, 10.0],
        "n_cells": DEFAULT_CELLS,
        "t_final": 6.4,
        "snapshots": [0.0, 0.9, 3.3, 6.4],
        "classes": [cls, copy.deepcopy(cls)],
        "kernels": [_bump(1.5, 0.01), _bump(0.3, 0.01)],
        "solver": "fv-nonlocal",
    }


def _overtake() -> dict:
    blocks = [(1.0, 5.0), (8.0, 12.0), (15.0, 19.0)]
    speeds = [1.5, 0.9, 0.5]
    return {
        "name": "overtake",
        "domain": [0.0, 100.0],
        "n_cells": DEFAULT_CELLS,
        "t_final": 80.9,
        "snapshots": [0.0, 7.0, 28.7, 80.9],
        "classes": [
            {"speed": {"law": "cubic", "vmax": v}, "initial": {"blocks": [{"lo": lo, "hi": hi, "value": 0.3}]}}
            for v, (lo, hi) in zip(speeds, blocks)
        ],
        "kernels": _bump(1.0, 0.01),
        "solver": "fv-nonlocal",
    }


def _bottleneck() -> dict:
    return {
        "name": "bottleneck",
        "domain": [0.0, 20.0],
        "n_cells": DEFAULT_CELLS,
        "t_final": 60.0,
        "snapshots": [0.0, 4.0, 37.5, 43.3, 60.0],
        "classes": [{
            "speed": {"law": "cubic", "vmax": 1.0, "profile": "bottleneck"},
            "initial": {"blocks": [{"lo": 1.0, "hi": 3.0, "value": 0.8}]},
        }],
        "kernels": _bump(1.0, 0.01),
        "solver": "fv-nonlocal",
        "summary": {"marker": 10.0, "phi": 0.999},
    }


def _comb() -> dict:
    return {
        "name": "comb",
        "domain": [0.0, 5.0],
        "n_cells": DEFAULT_CELLS,
        "t_final": 2.0,
        "snapshots": [0.0, 1.0, 1.0625, 2.0],
        "classes": [{"speed": {"law": "constant", "vmax": 1.0}, "initial": {"comb": 4}}],
        "kernels": _bump(1.0, 0.01),
        "solver": "lagrangian",
    }


PRESETS = {
    "horizon": (_horizon, "two classes with look-ahead horizons 1.5 and 0.3 from the same block"),
    "overtake": (_overtake, "three classes with maximal speeds 1.5/0.9/0.5 overtaking each other"),
    "bottleneck": (_bottleneck, "one class through a speed bottleneck on [5, 10]; LWR twin via solver fv-local-lwr"),
    "comb": (_comb, "pure transport of a 4-tooth comb at unit speed"),
}


def preset_document(name: str, cells: int | None = None, full_resolution: bool = False,
                    solver: str | None = None) -> dict:
    if name not in PRESETS:
        raise ConfigError([f"preset: unknown preset {name!r}; available: {sorted(PRESETS)}"])
    doc = PRESETS[name][0]()
    if full_resolution:
        doc["n_cells"] = FULL_CELLS
    if cells is not None:
        doc["n_cells"] = cells
    if solver is not None:
        doc["solver"] = solver
    return doc


def preset(name: str, cells: int | None = None, full_resolution: bool = False,
           solver: str | None = None) -> ScenarioConfig:
    return parse_config(preset_document(name, cells, full_resolution, solver))


def lwr_twin(cfg: ScenarioConfig) -> ScenarioConfig:
    """Same scenario with the convolutions replaced by point densities."""
    return cfg.with_(solver="fv-local-lwr", name=cfg.name + "-lwr")


# ---------------------------------------------------------------- problem building


def _kernel_obj(k):
    if k[0] == "bump":
        return KernelSpec(k[1], k[2])
    return SampledKernel(k[1], k[2], k[3])


def build_problem(cfg: ScenarioConfig) -> Problem:
    grid = Grid1D(cfg.domain[0], cfg.domain[1], cfg.n_cells)
    x = grid.centers
    rho0 = np.zeros((cfg.n_classes, grid.n_cells))
    laws = []
    for i, c in enumerate(cfg.classes):
        for lo, hi, val in c.blocks:
            rho0[i][(x > lo) & (x < hi)] += val
        if c.comb:
            rho0[i] += comb_initial_datum(c.comb, grid)[0]
        if c.law == "constant":
            laws.append(ConstantLaw(c.vmax))
        else:
            laws.append(CubicLaw(c.vmax, BottleneckProfile() if c.profile == "bottleneck" else None))
    kernels = KernelMatrix([[_kernel_obj(k) for k in row] for row in cfg.kernels])
    return Problem(grid, rho0, laws, kernels, t0=cfg.t_o, name=cfg.name)


# ---------------------------------------------------------------- summaries


@dataclass
class SnapshotSummary:
    t: float
    mass: float
    tv: float
    max: float
    centroid: float
    support_lo: float
    support_hi: float
    front_steepness: float


@dataclass
class RunSummary:
    """Per class, one ``SnapshotSummary`` per snapshot; clearance per class if a marker is set."""

    classes: list  # list[list[SnapshotSummary]]
    marker: float | None = None
    phi: float = 0.999
    clearance: list = field(default_factory=list)

    def column(self, i: int, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.classes[i]])

    def at(self, i: int, t: float) -> SnapshotSummary:
        for s in self.classes[i]:
            if abs(s.t - t) <= 1e-9 * max(1.0, abs(t)):
                return s
        raise KeyError(t)


def front_steepness(rho: np.ndarray, dx: float) -> float:
    """Largest downward slope to the right of the density maximum."""
    k = int(np.argmax(rho))
    tail = np.append(rho[k:], 0.0)
    drops = -np.diff(tail) / dx
    return float(max(drops.max(), 0.0)) if drops.size else 0.0


def fraction_past(state_i: np.ndarray, grid: Grid1D, marker: float, total: float) -> float:
    """Share of ``total`` not left of ``marker`` (mass that left the domain counts as past)."""
    if total <= 0:
        return 1.0
    edges = grid.edges
    left = np.clip((marker - edges[:-1]) / grid.dx, 0.0, 1.0)
    return float(1.0 - grid.dx * (state_i * left).sum() / total)


def clearance_time(times, fractions, phi: float) -> float:
    """Earliest time the fraction reaches ``phi``, interpolated linearly; NaN if never."""
    times = np.asarray(times, dtype=float)
    fr = np.asarray(fractions, dtype=float)
    hit = np.nonzero(fr >= phi)[0]
    if hit.size == 0:
        return math.nan
    k = int(hit[0])
    if k == 0:
        return float(times[0])
    f0, f1 = fr[k - 1], fr[k]
    return float(times[k - 1] + (phi - f0) / (f1 - f0) * (times[k] - times[k - 1]))


def summarize(traj: DensityTrajectory, theta_fraction: float = 0.01, marker: float | None = None,
              phi: float = 0.999, series: tuple | None = None) -> RunSummary:
    """Mass, TV, maximum, centroid, support and front steepness per class and snapshot.

    Clearance past ``marker`` is taken from ``series = (times, states)`` when
    given (e.g. every solver step), else from the snapshots.
    """
    g = traj.grid
    x = g.centers
    rho0 = traj.states[0]
    out = []
    for i in range(traj.n_classes):
        theta = theta_fraction * float(rho0[i].max()) if rho0[i].max() > 0 else 0.0
        rows = []
        for t, s in zip(traj.times, traj.states):
            r = s[i]
            mass = g.dx * float(r.sum())
            centroid = float((x * r).sum() * g.dx / mass) if mass > 0 else math.nan
            above = np.nonzero(r > theta)[0]
            lo = float(g.edges[above[0]]) if above.size else math.nan
            hi = float(g.edges[above[-1] + 1]) if above.size else math.nan
            rows.append(SnapshotSummary(t, mass, float(tv_discrete(r)[0]), float(r.max()), centroid, lo, hi,
                                        front_steepness(r, g.dx)))
        out.append(rows)
    summary = RunSummary(out, marker, phi)
    if marker is not None:
        times, states = series if series is not None else (traj.times, traj.states)
        for i in range(traj.n_classes):
            total = g.dx * float(rho0[i].sum())
            fr = [fraction_past(s[i], g, marker, total) for s in states]
            summary.clearance.append(clearance_time(times, fr, phi))
    return summary


# ---------------------------------------------------------------- running


@dataclass
class ScenarioRun:
    config: ScenarioConfig
    trajectory: DensityTrajectory
    velocities: list
    summary: RunSummary
    result: Any
    runtime: float
    files: list = field(default_factory=list)

    def mass_balance(self) -> np.ndarray:
        return self.result.mass_balance()


class _Series:
    """Observer keeping the fraction-past-marker series at every solver time."""

    def __init__(self, grid: Grid1D, marker: float | None, rho0: np.ndarray) -> None:
        self.grid = grid
        self.marker = marker
        self.totals = grid.dx * rho0.sum(axis=1)
        self.times: list[float] = []
        self.fractions: list[list[float]] = []

    def __call__(self, t, state, *_):
        if self.marker is None:
            return
        self.times.append(float(t))
        self.fractions.append([fraction_past(state[i], self.grid, self.marker, self.totals[i])
                               for i in range(state.shape[0])])


def execute(cfg: ScenarioConfig):
    """Run the configured solver; returns ``(problem, result, series, runtime)``."""
    problem = build_problem(cfg)
    series = _Series(problem.grid, cfg.marker, problem.rho0)
    start = time.perf_counter()
    if cfg.solver == "lagrangian":
        lcfg = LagrangianConfig(cfg.t_final, cfg.snapshots, **dict(cfg.lagrangian))
        result = fixed_point(problem, lcfg, observer=series)
    else:
        mode = "nonlocal" if cfg.solver == "fv-nonlocal" else "local-lwr"
        fcfg = fv.FvConfig(cfg.t_final, cfg.snapshots, cfg.cfl_safety, mode=mode)
        result = fv.run(problem, fcfg, observer=series)
    return problem, result, series, time.perf_counter() - start


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> ScenarioRun:
    """Run, summarize and (with ``out_dir``) write snapshot CSVs, logs, summary and a plot script."""
    problem, result, series, runtime = execute(cfg)
    traj = result.trajectory
    summary = summarize(traj, cfg.theta_fraction, None, cfg.phi)
    if cfg.marker is not None:
        summary.marker = cfg.marker
        fr = np.array(series.fractions)
        summary.clearance = [clearance_time(series.times, fr[:, i], cfg.phi) for i in range(problem.n_classes)]
    run = ScenarioRun(cfg, traj, result.velocities, summary, result, runtime)
    log.info("%s (%s, %d cells) finished in %.2fs", cfg.name, cfg.solver, cfg.n_cells, runtime)
    if out_dir is not None:
        run.files = write_outputs(run, Path(out_dir))
    return run


# ---------------------------------------------------------------- output


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_snapshot_csv(path: Path, t: float, grid: Grid1D, state: np.ndarray, vel: np.ndarray) -> None:
    n = state.shape[0]
    header = ["t", "x"] + [f"rho_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)]
    lines = [",".join(header)]
    ts = _fmt(t)
    cols = np.vstack([state, vel])
    for k, xk in enumerate(grid.centers):
        lines.append(",".join([ts, _fmt(xk)] + [_fmt(v) for v in cols[:, k]]))
    path.write_text("\n".join(lines) + "\n")


def write_outputs(run: ScenarioRun, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    traj = run.trajectory
    for k, (t, s, v) in enumerate(zip(traj.times, traj.states, run.velocities)):
        p = out / f"snapshot_{k:03d}.csv"
        write_snapshot_csv(p, t, traj.grid, s, v)
        files.append(p)
    res = run.result
    if isinstance(res, fv.FvResult):
        p = out / "steps.csv"
        rows = ["m,t_m,dt_m,vmax_m"] + [f"{s.m},{_fmt(s.t)},{_fmt(s.dt)},{_fmt(s.vmax_global)}" for s in res.steps]
        p.write_text("\n".join(rows) + "\n")
        files.append(p)
    else:
        p = out / "fixed_point.csv"
        rows = ["subinterval,t_start,t_end,iterations,final_residual,halvings"]
        for j, s in enumerate(res.report.subintervals):
            rows.append(f"{j},{_fmt(s.t_start)},{_fmt(s.t_end)},{s.iterations},{_fmt(s.final_residual)},{s.halvings}")
        p.write_text("\n".join(rows) + "\n")
        files.append(p)
    p = out / "summary.csv"
    rows = ["class,t,mass,tv,max,centroid,support_lo,support_hi,front_steepness"]
    for i, cls in enumerate(run.summary.classes):
        for s in cls:
            rows.append(",".join([str(i + 1)] + [_fmt(v) for v in (s.t, s.mass, s.tv, s.max, s.centroid,
                                                                   s.support_lo, s.support_hi, s.front_steepness)]))
    p.write_text("\n".join(rows) + "\n")
    files.append(p)
    if run.summary.marker is not None:
        p = out / "clearance.csv"
        rows = ["class,marker,phi,time"] + [
            f"{i + 1},{_fmt(run.summary.marker)},{_fmt(run.summary.phi)},{_fmt(c)}"
            for i, c in enumerate(run.summary.clearance)]
        p.write_text("\n".join(rows) + "\n")
        files.append(p)
    p = out / "metadata.json"
    meta = {
        "config": to_document(run.config),
        "solver_metadata": res.metadata,
        "backend": _core.BACKEND,
        "runtime_s": run.runtime,
        "mass_balance": np.asarray(run.mass_balance()).tolist(),
    }
    p.write_text(json.dumps(meta, indent=2, default=float) + "\n")
    files.append(p)
    p = out / "plot.gp"
    p.write_text(gnuplot_script(run, [f.name for f in files if f.name.startswith("snapshot_")]))
    files.append(p)
    return files


def gnuplot_script(run: ScenarioRun, snapshot_files: list[str]) -> str:
    n = run.trajectory.n_classes
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'x'",
        "set ylabel 'density'",
        f"set terminal pngcairo size 900,{300 * len(snapshot_files)}",
        f"set output '{run.config.name}.png'",
        f"set multiplot layout {len(snapshot_files)},1",
    ]
    for name, t in zip(snapshot_files, run.trajectory.times):
        plots = ", ".join(f"'{name}' using 2:{3 + i} with lines title 'rho_{i + 1}'" for i in range(n))
        lines.append(f"set title 't = {t:g}'")
        lines.append(f"plot {plots}")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def compare_solvers(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> list[dict]:
    """Run the FV and Lagrangian solvers on one scenario and report L1 distances per snapshot."""
    a = run_scenario(cfg.with_(solver="fv-nonlocal"))
    b = run_scenario(cfg.with_(solver="lagrangian"))
    g = a.trajectory.grid
    rows = []
    for t, sa, sb in zip(a.trajectory.times, a.trajectory.states, b.trajectory.states):
        for i in range(sa.shape[0]):
            rows.append({"t": t, "class": i + 1, "l1": g.dx * float(np.abs(sa[i] - sb[i]).sum())})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        text = ["t,class,l1_distance"] + [f"{_fmt(r['t'])},{r['class']},{_fmt(r['l1'])}" for r in rows]
        (out / "compare.csv").write_text("\n".join(text) + "\n")
    return rows


__all__ = [
    "ScenarioConfig", "ClassSpec", "parse_config", "to_document", "load_config", "PRESETS", "preset",
    "preset_document", "lwr_twin", "build_problem", "summarize", "RunSummary", "run_scenario",
    "compare_solvers", "clearance_time", "fraction_past",
]
