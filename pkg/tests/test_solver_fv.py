import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from nltraffic import solver_fv as fv
from nltraffic.errors import (
    CflViolationError,
    FrozenStateError,
    InvalidConfigurationError,
    SolverDivergenceError,
)
from nltraffic.kernels import ConvolutionPlan, KernelMatrix, KernelSpec, eval_kernel
from nltraffic.mesh import Grid1D
from nltraffic.problem import Problem
from nltraffic.scenario import build_problem, preset
from nltraffic.speed_laws import BottleneckProfile, ConstantLaw, CubicLaw, FunctionLaw


def _problem(n=400, rho0=None, law=None, kernel=KernelSpec(1.0, 0.01), domain=(0.0, 10.0)):
    g = Grid1D(*domain, n)
    if rho0 is None:
        rho0 = np.where((g.centers > 2) & (g.centers < 4), 0.6, 0.0)
    return Problem(g, rho0, [law or CubicLaw(1.0)], KernelMatrix.uniform(1, kernel))


def test_zero_state_velocity_is_max_speed():
    g = Grid1D(0.0, 20.0, 400)
    law = CubicLaw(1.0, BottleneckProfile())
    plan = ConvolutionPlan(KernelMatrix.uniform(1, KernelSpec(1.0, 0.01)), g)
    v = fv.compute_velocities(np.zeros((1, 400)), plan, [law], 0.0, g)
    assert np.array_equal(v[0], BottleneckProfile()(g.centers))


def test_full_road_velocity_vanishes_inside():
    p = _problem(rho0=np.ones(400))
    plan = ConvolutionPlan(p.kernels, p.grid)
    v = fv.compute_velocities(p.rho0, plan, p.laws, 0.0, p.grid)[0]
    inner = (p.grid.centers > 0.1) & (p.grid.centers < 8.9)
    assert np.abs(v[inner]).max() <= 1e-12


def test_mid_platoon_velocity_against_quadrature():
    p = build_problem(preset("horizon", cells=2000))
    plan = ConvolutionPlan(p.kernels, p.grid)
    v = fv.compute_velocities(p.rho0, plan, p.laws, 0.0, p.grid)
    k = np.searchsorted(p.grid.centers, 1.0)
    x = p.grid.centers[k]
    for i, spec in enumerate((KernelSpec(1.5, 0.01), KernelSpec(0.3, 0.01))):
        # both classes contribute 0.5 * (kernel mass over the platoon)
        lo, hi = max(-spec.f, x - 2.0), min(spec.b, x)
        q = 2 * 0.5 * quad(lambda s: float(eval_kernel(spec, s)), lo, hi, points=[0.0])[0]
        assert v[i, k] == pytest.approx((1 - q) ** 3, abs=2e-3)


def test_zero_state_stays_zero():
    p = _problem(rho0=np.zeros(400))
    r = fv.run(p, fv.FvConfig(1.0, [0.0, 1.0]))
    assert not r.trajectory.states[-1].any()


def test_step_is_translation_for_constant_speed():
    errs = []
    for n in (200, 400, 800):
        g = Grid1D(0.0, 4.0, n)
        bump = lambda x: np.clip(1 - (x - 1.5) ** 2, 0, None) ** 2
        state = bump(g.centers)[None]
        dt = 0.5 * g.dx
        # fixed Courant number, fixed final time
        for _ in range(int(round(0.5 / dt))):
            state = fv.step_lf(state, np.ones_like(state), dt, g.dx)
        errs.append(g.dx * np.abs(state[0] - bump(g.centers - 0.5)).sum())
    assert errs[0] / errs[1] >= 1.8 and errs[1] / errs[2] >= 1.8


@given(arrays(float, (2, 50), elements=st.floats(0, 5)), arrays(float, (2, 50), elements=st.floats(0, 2)),
       st.floats(0.01, 1.0))
def test_step_preserves_positivity(state, vel, courant):
    dx = 0.1
    vmax = vel.max()
    dt = courant * dx / vmax if vmax > 0 else dx
    out = fv.step_lf(state, vel, dt, dx)
    assert out.min() >= 0.0


def test_step_rejects_cfl_violation():
    with pytest.raises(CflViolationError):
        fv.step_lf(np.ones((1, 10)), np.ones((1, 10)), 0.2, 0.1)


@given(arrays(float, 60, elements=st.floats(0, 1)))
def test_step_conserves_interior_mass(bump):
    state = np.zeros((1, 100))
    state[0, 20:80] = bump
    vel = np.random.default_rng(0).uniform(0, 1, state.shape)
    out = fv.step_lf(state, vel, 0.09, 0.1)
    assert abs(out.sum() - state.sum()) <= 1e-12 * max(1.0, state.sum())


def test_run_mass_positivity_and_cfl_log():
    p = build_problem(preset("horizon", cells=500))
    cfg = fv.FvConfig(6.4, [0.0, 0.9, 3.3, 6.4], cfl_safety=0.9)
    r = fv.run(p, cfg)
    assert r.trajectory.times == [0.0, 0.9, 3.3, 6.4]
    m0 = p.grid.dx * p.rho0.sum(axis=1)
    assert np.abs(r.mass_balance()).max() <= 1e-12 * m0.max()
    assert min(s.min() for s in r.trajectory.states) >= 0.0
    for s in r.steps:
        assert 0 < s.dt <= cfg.cfl_safety * p.grid.dx / s.vmax_global * (1 + 1e-14)
    ts = [s.t for s in r.steps]
    assert ts == sorted(ts)


def test_horizon_fast_class_front_ahead():
    p = build_problem(preset("horizon", cells=2000))
    r = fv.run(p, fv.FvConfig(3.3, [3.3]))
    state = r.trajectory.at(3.3)
    front = [p.grid.centers[np.nonzero(state[i] > 0.01)[0][-1]] for i in range(2)]
    assert front[0] > front[1]


def test_constant_law_local_equals_nonlocal():
    p = _problem(law=ConstantLaw(0.8))
    a = fv.run(p, fv.FvConfig(2.0, [2.0]))
    b = fv.run_local_lwr(p, fv.FvConfig(2.0, [2.0]))
    assert np.abs(a.trajectory.states[-1] - b.trajectory.states[-1]).max() <= 1e-12


def test_local_lwr_zero_datum():
    r = fv.run_local_lwr(_problem(rho0=np.zeros(400)), fv.FvConfig(1.0, [1.0]))
    assert not r.trajectory.states[-1].any()


def test_dt_schedule_is_replayed():
    p = _problem()
    base = fv.run(p, fv.FvConfig(1.0, [1.0]))
    sched = [s.dt for s in base.steps]
    again = fv.run(p, fv.FvConfig(1.0, [1.0]), dt_schedule=sched)
    assert [s.dt for s in again.steps] == sched
    assert np.array_equal(again.trajectory.states[-1], base.trajectory.states[-1])
    with pytest.raises(InvalidConfigurationError):
        fv.run(p, fv.FvConfig(1.0, [1.0]), dt_schedule=sched[:3])


def test_observer_sees_every_step():
    seen = []
    r = fv.run(_problem(), fv.FvConfig(0.5, [0.5]), observer=lambda t, s, i, o: seen.append(t))
    assert len(seen) == len(r.steps) + 1 and seen[-1] == 0.5


def test_frozen_state_reported():
    p = _problem(law=ConstantLaw(0.0))
    with pytest.raises(FrozenStateError) as exc:
        fv.run(p, fv.FvConfig(1.0, [0.0, 1.0]))
    assert exc.value.partial is not None and exc.value.partial.times == [0.0]


def test_divergence_aborts_with_step_index():
    nan_law = FunctionLaw(lambda t, x, q: np.where(t > 0.05, np.nan, 1.0) * np.ones_like(q[0]),
                          lambda t, x, q: np.zeros_like(q), lambda t, x, q: np.zeros_like(q[0]))
    with pytest.raises(SolverDivergenceError) as exc:
        fv.run(_problem(law=nan_law), fv.FvConfig(1.0, [0.0, 1.0]))
    assert exc.value.step is not None and exc.value.step > 0


@pytest.mark.parametrize("kwargs", [dict(cfl_safety=0.0), dict(cfl_safety=1.5), dict(mode="godunov"),
                                    dict(boundary_mode="periodic")])
def test_bad_config(kwargs):
    with pytest.raises(InvalidConfigurationError):
        fv.FvConfig(1.0, **kwargs)


def test_snapshots_outside_range_rejected():
    with pytest.raises(InvalidConfigurationError):
        fv.run(_problem(), fv.FvConfig(1.0, [2.0]))
