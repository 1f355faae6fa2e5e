"""Command-line entry point: ``nltraffic run | compare-solvers | property-suite | list-presets``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import _core
from .errors import (
    CflViolationError,
    ConfigError,
    ContractionError,
    FrozenStateError,
    InvalidConfigurationError,
    NumericError,
    ShapeMismatchError,
    SolverDivergenceError,
)
from .scenario import PRESETS, compare_solvers, load_config, parse_config, preset_document, run_scenario

log = logging.getLogger("nltraffic")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_SUITE_FAILED = 3

SOLVER_FLAGS = {"fv": "fv-nonlocal", "lwr": "fv-local-lwr", "lagrangian": "lagrangian"}


def _config_from_arg(target: str, cells: int | None, solver: str | None, full_resolution: bool):
    solver = SOLVER_FLAGS[solver] if solver else None
    if target in PRESETS:
        return parse_config(preset_document(target, cells, full_resolution, solver))
    path = Path(target)
    if not path.is_file():
        raise ConfigError([f"{target}: neither a preset ({', '.join(sorted(PRESETS))}) nor a readable file"])
    cfg = load_config(path)
    changes = {}
    if cells is not None:
        changes["n_cells"] = cells
    elif full_resolution:
        changes["n_cells"] = 10000
    if solver:
        changes["solver"] = solver
    return cfg.with_(**changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _config_from_arg(args.target, args.cells, args.solver, args.full_resolution)
    out = Path(args.out) if args.out else Path("runs") / f"{cfg.name}-{cfg.solver}-{cfg.n_cells}"
    run = run_scenario(cfg, out)
    print(f"{cfg.name}: solver {cfg.solver}, {cfg.n_cells} cells, backend {_core.BACKEND}, {run.runtime:.2f}s")
    for i, cls in enumerate(run.summary.classes):
        for s in cls:
            print(f"  class {i + 1} t={s.t:<8g} mass={s.mass:.6f} max={s.max:.4f} centroid={s.centroid:.4f}")
    if run.summary.marker is not None:
        for i, c in enumerate(run.summary.clearance):
            print(f"  class {i + 1} clearance past x={run.summary.marker:g} (phi={run.summary.phi:g}): {c:.4f}")
    print(f"wrote {len(run.files)} files to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if args.preset not in PRESETS:
        raise ConfigError([f"preset: unknown preset {args.preset!r}; available: {sorted(PRESETS)}"])
    cfg = parse_config(preset_document(args.preset, args.cells))
    rows = compare_solvers(cfg, args.out)
    print("t,class,l1_distance")
    for r in rows:
        print(f"{r['t']:g},{r['class']},{r['l1']:.6g}")
    return EXIT_OK


def cmd_suite(args) -> int:
    from .property_suite import run_suite, write_report

    checks = run_suite(quick=args.quick)
    sys.stdout.write(write_report(checks, args.out))
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_SUITE_FAILED
    return EXIT_OK


def cmd_list(args) -> int:
    for name, (_, desc) in PRESETS.items():
        print(f"{name:<12} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nltraffic", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a preset or a JSON config")
    r.add_argument("target", help="preset name or path to a JSON config")
    r.add_argument("--cells", type=int)
    r.add_argument("--solver", choices=sorted(SOLVER_FLAGS))
    r.add_argument("--out", help="output directory (default runs/<name>-<solver>-<cells>)")
    r.add_argument("--full-resolution", "--paper-resolution", dest="full_resolution", action="store_true",
                   help="use 10000 cells")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare-solvers", help="L1 distance between FV and Lagrangian snapshots")
    c.add_argument("preset")
    c.add_argument("--cells", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("property-suite", help="run the property checks; exit 3 on any failure")
    s.add_argument("--quick", action="store_true", help="coarse meshes, about 20 s")
    s.add_argument("--out", help="also write the CSV report here")
    s.set_defaults(func=cmd_suite)

    ls = sub.add_parser("list-presets")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for solver failures here
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidConfigurationError, ShapeMismatchError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverDivergenceError, FrozenStateError, ContractionError, NumericError, CflViolationError) as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
