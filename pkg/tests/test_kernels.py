import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from nltraffic.errors import DegenerateKernelError, InvalidKernelError, ShapeMismatchError
from nltraffic.kernels import (
    ConvolutionPlan,
    KernelMatrix,
    KernelSpec,
    SampledKernel,
    convolve,
    discretize,
    eval_kernel,
    eval_kernel_dx,
    eval_kernel_dxx,
    normalization_constant,
)
from nltraffic.mesh import Grid1D

horizons = st.floats(0.05, 3.0)


def test_normalization_constants():
    assert normalization_constant(1.0, 1.0) == pytest.approx(0.9375, rel=1e-15)
    assert normalization_constant(1.5, 0.01) == pytest.approx(1.2417218543, rel=1e-9)


@pytest.mark.parametrize("f,b", [(0.0, 1.0), (1.0, -0.1), (float("nan"), 1.0), (1.0, float("inf"))])
def test_bad_horizons_rejected(f, b):
    with pytest.raises(InvalidKernelError):
        KernelSpec(f, b)


def test_point_values():
    k = KernelSpec(1.0, 1.0)
    assert eval_kernel(k, -0.5) == pytest.approx(0.52734375, rel=1e-15)
    k = KernelSpec(1.5, 0.01)
    assert eval_kernel(k, 0.0) == pytest.approx(k.amplitude)
    assert eval_kernel(k, -1.5) == 0.0 and eval_kernel_dx(k, -1.5) == 0.0
    assert eval_kernel(k, 0.01) == pytest.approx(0.0, abs=1e-15) and eval_kernel_dx(k, 0.01) == pytest.approx(0.0, abs=1e-12)


@given(horizons, horizons)
def test_kernel_integrates_to_one(f, b):
    k = KernelSpec(f, b)
    left = quad(lambda x: float(eval_kernel(k, x)), -f, 0.0)[0]
    right = quad(lambda x: float(eval_kernel(k, x)), 0.0, b)[0]
    assert left + right == pytest.approx(1.0, rel=1e-10)


@given(horizons, horizons, st.floats(-4, 4))
def test_kernel_non_negative_and_derivatives_match_differences(f, b, x):
    k = KernelSpec(f, b)
    assert eval_kernel(k, x) >= 0
    h = 1e-6
    if abs(x) > 2 * h and abs(x + f) > 2 * h and abs(x - b) > 2 * h:
        fd = (eval_kernel(k, x + h) - eval_kernel(k, x - h)) / (2 * h)
        assert eval_kernel_dx(k, x) == pytest.approx(fd, rel=1e-5, abs=1e-5 * k.amplitude / min(f, b))
        fd2 = (eval_kernel_dx(k, x + h) - eval_kernel_dx(k, x - h)) / (2 * h)
        assert eval_kernel_dxx(k, x) == pytest.approx(fd2, rel=1e-4, abs=1e-4 * k.amplitude / min(f, b) ** 2)


@given(horizons, horizons)
def test_sup_norms_match_dense_sampling(f, b):
    k = KernelSpec(f, b)
    x = np.linspace(-f, b, 200_001)
    e0, e1, e2 = k.sup_norms()
    assert e0 == pytest.approx(np.abs(eval_kernel(k, x)).max(), rel=1e-9)
    assert e1 == pytest.approx(np.abs(eval_kernel_dx(k, x)).max(), rel=1e-4)
    assert e2 == pytest.approx(np.abs(eval_kernel_dxx(k, x)).max(), rel=1e-4)


def test_discretize_offsets_for_fine_mesh():
    dk = discretize(KernelSpec(1.5, 0.01), Grid1D(0.0, 10.0, 10000))
    assert (dk.p_lo, dk.p_hi) == (-1500, 10)
    assert dk.dx * dk.weights.sum() == pytest.approx(1.0, rel=1e-14)
    assert dk.dweights.sum() == pytest.approx(0.0, abs=1e-9 * np.abs(dk.dweights).max())


def test_horizon_below_one_cell_collapses():
    dk = discretize(KernelSpec(1.0, 0.01), Grid1D(0.0, 10.0, 100))
    assert dk.p_hi == 0
    assert dk.dx * dk.weights.sum() == pytest.approx(1.0, rel=1e-14)


def test_raw_defect_is_second_order():
    k = KernelSpec(1.0, 0.5)
    defects = [abs(discretize(k, Grid1D(0.0, 10.0, n)).raw_defect) for n in (100, 200, 400)]
    assert defects[0] / defects[1] >= 3.5
    assert defects[1] / defects[2] >= 3.5


def test_constant_field_reproduced_away_from_ends():
    g = Grid1D(0.0, 10.0, 1000)
    dk = discretize(KernelSpec(1.5, 0.01), g)
    q = convolve(dk, np.full(1000, 0.7))
    interior = (g.centers > 0.02) & (g.centers < 8.4)
    assert np.allclose(q[interior], 0.7, rtol=1e-14)
    assert not convolve(dk, np.zeros(1000)).any()


def _quadrature(k, rho, x):
    lo, hi = k.support
    return quad(lambda xi: float(eval_kernel(k, xi)) * rho(x - xi), lo, hi, points=[0.0], limit=200)[0]


def test_block_with_symmetric_kernel_against_quadrature():
    k = KernelSpec(0.25, 0.25)
    g = Grid1D(-1.0, 2.0, 3000)
    rho = ((g.centers > 0) & (g.centers < 1)).astype(float)
    q = convolve(discretize(k, g), rho)
    mid = int(np.argmin(np.abs(g.centers - 0.5)))
    assert q[mid] == pytest.approx(1.0, rel=1e-12)
    edge = (g.centers > -0.24) & (g.centers < 0.24)
    assert np.all((q[edge] > 0) & (q[edge] < 1))
    block = lambda y: 1.0 if 0 < y < 1 else 0.0
    for x in (-0.2, -0.0505, 0.1005, 0.2):
        i = int(np.argmin(np.abs(g.centers - x)))
        assert q[i] == pytest.approx(_quadrature(k, block, g.centers[i]), abs=5e-3)


def test_orientation_weights_density_ahead():
    g = Grid1D(0.0, 10.0, 1000)
    rho = ((g.centers > 5) & (g.centers < 6)).astype(float)
    q = convolve(discretize(KernelSpec(1.5, 0.01), g), rho)
    # a car at x=4.5 sees the block ahead; a car at 6.5 is past it
    assert q[np.searchsorted(g.centers, 4.5)] > 0.2
    assert abs(q[np.searchsorted(g.centers, 6.5)]) < 1e-14


def test_smooth_field_convergence_is_second_order():
    k = KernelSpec(0.8, 0.3)
    smooth = lambda y: np.exp(-((y - 3.0) ** 2))
    errs = []
    for n in (100, 200, 400):
        g = Grid1D(0.0, 6.0, n)
        q = convolve(discretize(k, g), smooth(g.centers))
        exact = np.array([_quadrature(k, lambda y: float(smooth(y)), x) for x in g.centers])
        errs.append(np.abs(q - exact)[(g.centers > 1) & (g.centers < 5)].max())
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


@given(arrays(float, 200, elements=st.floats(0, 1)), arrays(float, 200, elements=st.floats(0, 1)),
       st.floats(-3, 3), st.floats(-3, 3))
def test_convolution_is_linear(r1, r2, a, b):
    dk = discretize(KernelSpec(0.3, 0.05), Grid1D(0.0, 2.0, 200))
    lhs = convolve(dk, a * r1 + b * r2)
    rhs = a * convolve(dk, r1) + b * convolve(dk, r2)
    scale = max(1.0, np.abs(lhs).max())
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)


@given(arrays(float, 40, elements=st.floats(0, 1)), st.integers(1, 30), st.sampled_from(["direct", "fft"]))
def test_convolution_commutes_with_cell_shifts(bump, shift, engine):
    g = Grid1D(0.0, 4.0, 400)
    dk = discretize(KernelSpec(0.3, 0.05), g)
    rho = np.zeros(400)
    rho[100:140] = bump
    a = convolve(dk, rho, engine=engine)
    b = convolve(dk, np.roll(rho, shift), engine=engine)
    assert np.allclose(np.roll(a, shift), b, atol=1e-13)


def test_engines_agree_on_random_field():
    g = Grid1D(0.0, 10.0, 10_000)
    dk = discretize(KernelSpec(1.5, 0.01), g)
    rho = np.random.default_rng(3).random((2, 10_000))
    a = convolve(dk, rho, engine="direct")
    b = convolve(dk, rho, engine="fft")
    assert np.abs(a - b).max() / np.abs(a).max() <= 1e-10
    for der in (True,):
        a = convolve(dk, rho, engine="direct", derivative=der)
        b = convolve(dk, rho, engine="fft", derivative=der)
        assert np.abs(a - b).max() <= 1e-10 * np.abs(a).max()


def test_unknown_engine_rejected():
    dk = discretize(KernelSpec(1.0, 1.0), Grid1D(0.0, 10.0, 10))
    with pytest.raises(ValueError):
        convolve(dk, np.zeros(10), engine="gpu")


def test_derivative_taps_give_convolution_gradient():
    g = Grid1D(0.0, 6.0, 1200)
    k = KernelSpec(0.8, 0.3)
    rho = np.exp(-((g.centers - 3) ** 2))
    dk = discretize(k, g)
    q = convolve(dk, rho)
    dq = convolve(dk, rho, derivative=True)
    fd = np.gradient(q, g.dx)
    inner = (g.centers > 1.5) & (g.centers < 4.5)
    assert np.abs(dq - fd)[inner].max() < 1e-3


def test_sampled_kernel():
    sk = SampledKernel.from_function(lambda x: np.exp(-np.abs(x)), -3.0, 1.0, 0.01)
    lo, hi = sk.support
    assert lo == pytest.approx(-3.0) and hi == pytest.approx(1.0)
    g = Grid1D(0.0, 20.0, 2000)
    dk = discretize(sk, g)
    assert dk.dx * dk.weights.sum() == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(DegenerateKernelError):
        SampledKernel((0.0, 0.0), 0.1)
    with pytest.raises(InvalidKernelError):
        SampledKernel((1.0, -1.0), 0.1)


def test_kernel_matrix_and_plan():
    with pytest.raises(ShapeMismatchError):
        KernelMatrix([[KernelSpec(1, 1)], [KernelSpec(1, 1)]])
    a, b = KernelSpec(1.5, 0.01), KernelSpec(0.3, 0.01)
    km = KernelMatrix.from_rows([a, b])
    assert km[0, 1] == a and km[1, 0] == b
    g = Grid1D(0.0, 10.0, 500)
    plan = ConvolutionPlan(km, g)
    assert len(plan.discrete) == 2
    rho = np.random.default_rng(0).random((2, 500))
    q = plan.apply(rho)
    assert q.shape == (2, 2, 500)
    assert np.allclose(q[1, 0], convolve(discretize(b, g), rho[0]))
    assert km.sup_norms()[1] == pytest.approx(max(a.sup_norms()[1], b.sup_norms()[1]))
