import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nltraffic.errors import ConfigError
from nltraffic.kernels import KernelSpec, SampledKernel
from nltraffic.mesh import DensityTrajectory, Grid1D
from nltraffic.scenario import (
    PRESETS,
    build_problem,
    clearance_time,
    compare_solvers,
    fraction_past,
    load_config,
    lwr_twin,
    parse_config,
    preset,
    preset_document,
    run_scenario,
    summarize,
    to_document,
)
from nltraffic.speed_laws import BottleneckProfile, CubicLaw


def _doc(**over):
    doc = {
        "domain": [0.0, 10.0],
        "n_cells": 200,
        "t_final": 1.0,
        "snapshots": [0.0, 1.0],
        "classes": [{"speed": {"law": "cubic", "vmax": 1.0},
                     "initial": {"blocks": [{"lo": 1.0, "hi": 2.0, "value": 0.5}]}}],
        "kernels": {"f": 1.0, "b": 0.01},
        "solver": "fv",
        "cfl_safety": 0.9,
    }
    doc.update(over)
    return doc


def test_horizon_preset_expands():
    cfg = preset("horizon", full_resolution=True)
    assert cfg.domain == (0.0, 10.0) and cfg.n_cells == 10000
    assert cfg.kernels[0] == (("bump", 1.5, 0.01),) * 2
    assert cfg.kernels[1] == (("bump", 0.3, 0.01),) * 2
    p = build_problem(cfg)
    x = p.grid.centers
    assert np.array_equal(p.rho0[0], np.where(x < 2, 0.5, 0.0)) and np.array_equal(p.rho0[0], p.rho0[1])
    assert preset("horizon").n_cells == 2000


def test_overtake_preset_expands():
    p = build_problem(preset("overtake"))
    assert [law.vmax for law in p.laws] == [1.5, 0.9, 0.5]
    assert p.grid.x_hi == 100.0
    for i, (lo, hi) in enumerate([(1, 5), (8, 12), (15, 19)]):
        nz = p.grid.centers[p.rho0[i] > 0]
        assert nz.min() > lo and nz.max() < hi and p.rho0[i].max() == 0.3
    assert all(k == KernelSpec(1.0, 0.01) for row in p.kernels.entries for k in row)


def test_bottleneck_preset_and_twin():
    cfg = preset("bottleneck")
    p = build_problem(cfg)
    assert p.laws == [CubicLaw(1.0, BottleneckProfile())]
    assert p.grid.x_hi == 20.0 and p.rho0.max() == 0.8
    assert cfg.marker == 10.0 and cfg.phi == 0.999
    twin = lwr_twin(cfg)
    assert twin.solver == "fv-local-lwr" and twin.classes == cfg.classes


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_validates_and_round_trips(name):
    cfg = preset(name)
    assert parse_config(to_document(cfg)) == cfg
    assert parse_config(json.loads(json.dumps(to_document(cfg)))) == cfg
    assert len(cfg.kernels) == cfg.n_classes == build_problem(cfg).n_classes


def test_unknown_keys_rejected_with_paths():
    doc = _doc(colour="red")
    doc["classes"][0]["speed"]["extra"] = 1
    doc["kernels"]["shape"] = "bump"
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    msgs = exc.value.violations
    assert "colour: unknown key" in msgs
    assert "classes[0].speed.extra: unknown key" in msgs
    assert "kernels.shape: unknown key" in msgs


def test_all_violations_reported():
    doc = _doc(domain=[5.0, 1.0], n_cells=1.5, cfl_safety=2.0, solver="godunov", snapshots=[0.0, 3.0])
    doc["classes"].append({"speed": {"law": "quadratic"}, "initial": {}})
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    paths = {v.split(":")[0] for v in exc.value.violations}
    assert {"domain", "n_cells", "cfl_safety", "solver", "snapshots", "classes[1].speed.law",
            "classes[1].initial"} <= paths
    assert len(exc.value.violations) >= 7


def test_inconsistent_class_count():
    doc = _doc(kernels=[{"f": 1.0, "b": 0.01}, {"f": 1.0, "b": 0.01}])
    with pytest.raises(ConfigError, match="2 rows for 1 classes"):
        parse_config(doc)


def test_taps_kernel_config():
    cfg = parse_config(_doc(kernels={"taps": [0.0, 1.0, 2.0, 1.0], "dx": 0.1, "origin": 3}))
    p = build_problem(cfg)
    assert isinstance(p.kernels[0, 0], SampledKernel)
    assert parse_config(to_document(cfg)) == cfg
    with pytest.raises(ConfigError):
        parse_config(_doc(kernels={"taps": [0.0, -1.0], "dx": 0.1}))


def test_semantic_errors_surface_as_config_errors():
    doc = _doc(classes=[{"speed": {"law": "constant"}, "initial": {"comb": 4}}], n_cells=20)
    with pytest.raises(ConfigError, match="cells per tooth"):
        parse_config(doc)


def test_load_config_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)


@given(
    st.floats(0.1, 5.0), st.integers(50, 400), st.floats(0.5, 3.0), st.sampled_from(["fv", "lwr", "lagrangian"]),
    st.lists(st.tuples(st.floats(0.5, 2.0), st.floats(0.01, 1.0)), min_size=1, max_size=3),
    st.floats(0.1, 1.0),
)
def test_round_trip_generated(length, cells, t_final, solver, classes, cfl):
    doc = _doc(domain=[0.0, 10.0 + length], n_cells=cells, t_final=t_final, snapshots=[0.0, t_final],
               solver=solver, cfl_safety=cfl,
               classes=[{"speed": {"vmax": v}, "initial": {"blocks": [{"lo": 1.0, "hi": 3.0, "value": h}]}}
                        for v, h in classes])
    cfg = parse_config(doc)
    assert parse_config(to_document(cfg)) == cfg


def test_preset_document_overrides():
    doc = preset_document("bottleneck", cells=500, solver="lagrangian")
    assert doc["n_cells"] == 500 and doc["solver"] == "lagrangian"
    with pytest.raises(ConfigError):
        preset_document("nope")


# ---- summaries


def test_stationary_block_centroid_constant():
    g = Grid1D(0.0, 10.0, 100)
    traj = DensityTrajectory(g)
    block = np.where((g.centers > 3) & (g.centers < 5), 0.4, 0.0)[None]
    for t in (0.0, 1.0, 2.0):
        traj.append(t, block)
    s = summarize(traj)
    assert np.all(s.column(0, "centroid") == pytest.approx(4.0))
    assert s.at(0, 1.0).support_lo == pytest.approx(3.0) and s.at(0, 1.0).support_hi == pytest.approx(5.0)


def test_transport_centroid_moves_with_unit_speed():
    doc = _doc(classes=[{"speed": {"law": "constant", "vmax": 1.0},
                         "initial": {"blocks": [{"lo": 1.0, "hi": 2.0, "value": 0.5}]}}],
               solver="lagrangian", t_final=4.0, snapshots=[0.0, 1.0, 2.5, 4.0], n_cells=400)
    run = run_scenario(parse_config(doc))
    c = run.summary.column(0, "centroid")
    assert c - c[0] == pytest.approx([0.0, 1.0, 2.5, 4.0], rel=0.01, abs=1e-12)


def test_fraction_past_counts_partial_cells_and_outflow():
    g = Grid1D(0.0, 4.0, 4)
    state = np.array([1.0, 1.0, 1.0, 1.0])
    assert fraction_past(state, g, 2.5, 4.0) == pytest.approx(0.375)
    assert fraction_past(np.zeros(4), g, 2.5, 4.0) == 1.0
    assert fraction_past(state, g, 0.0, 0.0) == 1.0


def test_clearance_time_interpolates_and_is_monotone():
    times = [0.0, 1.0, 2.0, 3.0]
    fr = [0.0, 0.5, 0.9, 1.0]
    assert clearance_time(times, fr, 0.7) == pytest.approx(1.5)
    assert math.isnan(clearance_time(times, [0.0, 0.1, 0.2, 0.3], 0.5))
    phis = np.linspace(0.05, 1.0, 20)
    ct = [clearance_time(times, fr, p) for p in phis]
    assert ct == sorted(ct)


def test_horizon_fast_class_front_is_steeper():
    run = run_scenario(preset("horizon"))
    assert run.summary.at(0, 6.4).front_steepness > run.summary.at(1, 6.4).front_steepness
    c = [run.summary.at(i, 6.4).centroid for i in range(2)]
    assert c[0] > c[1]


def test_overtake_orders_by_maximal_speed():
    run = run_scenario(preset("overtake"))
    c = [run.summary.at(i, 80.9).centroid for i in range(3)]
    assert c[0] > c[1] > c[2]


def test_bottleneck_nonlocal_clears_before_lwr():
    cfg = preset("bottleneck")
    nonlocal_run = run_scenario(cfg)
    lwr_run = run_scenario(lwr_twin(cfg))
    assert nonlocal_run.summary.clearance[0] < lwr_run.summary.clearance[0]


# ---- outputs


def test_outputs_written_and_deterministic(tmp_path):
    cfg = parse_config(_doc(snapshots=[0.0, 0.5, 1.0], summary={"marker": 3.0, "phi": 0.5}))
    a = run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    names = sorted(p.name for p in a.files)
    assert names == ["clearance.csv", "metadata.json", "plot.gp", "snapshot_000.csv", "snapshot_001.csv",
                     "snapshot_002.csv", "steps.csv", "summary.csv"]
    for p in a.files:
        if p.suffix == ".csv":
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
    lines = (tmp_path / "a" / "snapshot_001.csv").read_text().splitlines()
    assert lines[0] == "t,x,rho_1,v_1"
    assert len(lines) == 201
    t, x, rho, v = (float(s) for s in lines[1].split(","))
    assert t == 0.5 and x == pytest.approx(0.025)
    assert (tmp_path / "a" / "steps.csv").read_text().startswith("m,t_m,dt_m,vmax_m\n")
    meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
    assert parse_config(meta["config"]) == cfg


def test_snapshot_values_round_trip_exactly(tmp_path):
    cfg = parse_config(_doc())
    run = run_scenario(cfg, tmp_path)
    data = np.loadtxt(tmp_path / "snapshot_001.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 2], run.trajectory.states[1][0])
    assert np.array_equal(data[:, 3], run.velocities[1][0])


def test_lagrangian_outputs_fixed_point_report(tmp_path):
    cfg = parse_config(_doc(solver="lagrangian"))
    run = run_scenario(cfg, tmp_path)
    rows = (tmp_path / "fixed_point.csv").read_text().splitlines()
    assert rows[0] == "subinterval,t_start,t_end,iterations,final_residual,halvings"
    assert len(rows) == 1 + len(run.result.report.subintervals)
    assert all(float(r.split(",")[4]) <= 1e-8 for r in rows[1:])


def test_compare_solvers_writes_distances(tmp_path):
    cfg = parse_config(_doc())
    rows = compare_solvers(cfg, tmp_path)
    assert [r["t"] for r in rows] == [0.0, 1.0]
    assert rows[0]["l1"] == 0.0 and 0 < rows[1]["l1"] < 0.25
    assert (tmp_path / "compare.csv").read_text().startswith("t,class,l1_distance\n")
