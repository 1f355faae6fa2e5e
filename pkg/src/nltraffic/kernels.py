"""Asymmetric quartic-bump interaction kernels, their grid sampling and discrete convolution.

The convolution follows ``(eta * rho)(x) = int eta(xi) rho(x - xi) dxi``: the
negative half of the support, ``xi in [-f, 0]``, weights density *ahead* of x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from . import _core
from .errors import DegenerateKernelError, InvalidKernelError, ShapeMismatchError
from .mesh import Grid1D

# Above this many taps the FFT engine is used when engine="auto".
FFT_TAP_THRESHOLD = 64


def normalization_constant(f: float, b: float) -> float:
    """Amplitude making the bump integrate to one: ``15 / (8 (f + b))``."""
    if not (math.isfinite(f) and f > 0):
        raise InvalidKernelError(f"forward horizon must be > 0, got {f}")
    if not (math.isfinite(b) and b > 0):
        raise InvalidKernelError(f"backward horizon must be > 0, got {b}")
    return 15.0 / (8.0 * (f + b))


@dataclass(frozen=True)
class KernelSpec:
    """Quartic bump with forward horizon ``f`` (looking ahead) and backward horizon ``b``."""

    f: float
    b: float

    def __post_init__(self) -> None:
        normalization_constant(self.f, self.b)

    @property
    def amplitude(self) -> float:
        return normalization_constant(self.f, self.b)

    @property
    def support(self) -> tuple[float, float]:
        return (-self.f, self.b)

    def __call__(self, x):
        return eval_kernel(self, x)

    def dx(self, x):
        return eval_kernel_dx(self, x)

    def dxx(self, x):
        return eval_kernel_dxx(self, x)

    def sup_norms(self) -> tuple[float, float, float]:
        """Exact ``(sup|eta|, sup|eta'|, sup|eta''|)``."""
        A = self.amplitude
        h = min(self.f, self.b)
        return A, 8.0 * A / (3.0 * math.sqrt(3.0) * h), 8.0 * A / h**2

    def scaled(self, forward: float = 1.0, backward: float = 1.0) -> "KernelSpec":
        return KernelSpec(self.f * forward, self.b * backward)


def _pieces(spec: KernelSpec, x):
    x = np.asarray(x, dtype=float)
    h = np.where(x <= 0.0, spec.f, spec.b)
    inside = (x >= -spec.f) & (x <= spec.b)
    return x, h, inside


def eval_kernel(spec: KernelSpec, x):
    x, h, inside = _pieces(spec, x)
    s = 1.0 - (x / h) ** 2
    return np.where(inside, spec.amplitude * s * s, 0.0)


def eval_kernel_dx(spec: KernelSpec, x):
    x, h, inside = _pieces(spec, x)
    s = 1.0 - (x / h) ** 2
    return np.where(inside, -4.0 * spec.amplitude * x * s / h**2, 0.0)


def eval_kernel_dxx(spec: KernelSpec, x):
    x, h, inside = _pieces(spec, x)
    return np.where(inside, -4.0 * spec.amplitude * (1.0 - 3.0 * (x / h) ** 2) / h**2, 0.0)


@dataclass(frozen=True)
class SampledKernel:
    """Kernel given by a non-negative tap table, linearly interpolated between taps.

    ``taps[i]`` is the value at ``(i - origin) * spacing``. Used for long or
    truncated kernels (e.g. vehicles seeing far ahead and behind).
    """

    taps: tuple[float, ...]
    spacing: float
    origin: int = 0

    def __post_init__(self) -> None:
        taps = np.asarray(self.taps, dtype=float)
        if taps.ndim != 1 or taps.size == 0:
            raise InvalidKernelError("tap table must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(taps)) or np.any(taps < 0):
            raise InvalidKernelError("taps must be finite and non-negative")
        if not (self.spacing > 0):
            raise InvalidKernelError("tap spacing must be > 0")
        if not taps.any():
            raise DegenerateKernelError("tap table is identically zero")
        object.__setattr__(self, "taps", tuple(float(t) for t in taps))

    @classmethod
    def from_function(cls, fn, lo: float, hi: float, spacing: float) -> "SampledKernel":
        """Tabulate ``fn`` on ``[lo, hi]`` (truncating an unbounded kernel) and normalize."""
        i_lo = math.floor(lo / spacing + 1e-9)
        i_hi = math.ceil(hi / spacing - 1e-9)
        xs = np.arange(i_lo, i_hi + 1) * spacing
        vals = np.clip(np.asarray(fn(xs), dtype=float), 0.0, None)
        total = np.trapezoid(vals, xs) if hasattr(np, "trapezoid") else np.trapz(vals, xs)
        if total <= 0:
            raise DegenerateKernelError("function is zero on the truncation window")
        return cls(tuple(vals / total), spacing, origin=-i_lo)

    @property
    def support(self) -> tuple[float, float]:
        n = len(self.taps)
        return (-self.origin * self.spacing, (n - 1 - self.origin) * self.spacing)

    def __call__(self, x):
        xs = (np.arange(len(self.taps)) - self.origin) * self.spacing
        return np.interp(np.asarray(x, dtype=float), xs, np.asarray(self.taps), left=0.0, right=0.0)

    def dx(self, x, h: float | None = None):
        h = h or self.spacing * 1e-3
        return (self(np.asarray(x) + h) - self(np.asarray(x) - h)) / (2 * h)

    def dxx(self, x, h: float | None = None):
        h = h or self.spacing * 1e-2
        x = np.asarray(x)
        return (self(x + h) - 2 * self(x) + self(x - h)) / h**2

    def sup_norms(self) -> tuple[float, float, float]:
        t = np.concatenate(([0.0], self.taps, [0.0]))
        d1 = np.abs(np.diff(t)) / self.spacing
        d2 = np.abs(np.diff(t, 2)) / self.spacing**2
        return float(t.max()), float(d1.max()), float(d2.max())


@dataclass(frozen=True)
class DiscreteKernel:
    """Grid taps ``weights[i] ~ eta((p_lo + i) dx)`` rescaled so that ``dx * sum = 1``.

    ``dweights`` are the matching derivative taps,
    ``(eta(x_p + dx/2) - eta(x_p - dx/2)) / dx``: they sum to zero exactly, so a
    constant density has zero convolution gradient.
    """

    weights: np.ndarray
    dweights: np.ndarray
    p_lo: int
    dx: float
    raw_mass: float = 1.0
    dp_lo: int | None = None

    def __post_init__(self) -> None:
        if self.dp_lo is None:
            object.__setattr__(self, "dp_lo", self.p_lo - 1)

    @property
    def p_hi(self) -> int:
        return self.p_lo + len(self.weights) - 1

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.p_lo, self.p_hi + 1)

    @property
    def raw_defect(self) -> float:
        """``dx * sum(raw taps) - 1`` before rescaling."""
        return self.raw_mass - 1.0


def discretize(kernel, grid: Grid1D) -> DiscreteKernel:
    """Sample ``kernel`` at cell-center offsets ``p * dx`` and renormalize to unit discrete mass."""
    dx = grid.dx
    lo, hi = kernel.support
    p_lo = min(0, math.ceil(lo / dx - 1e-9))
    p_hi = max(0, math.floor(hi / dx + 1e-9))
    xs = np.arange(p_lo, p_hi + 1) * dx
    raw = np.asarray(kernel(xs), dtype=float)
    mass = dx * raw.sum()
    if not mass > 0:
        raise DegenerateKernelError(f"kernel has no positive tap on a grid with dx={dx}")
    scale = 1.0 / mass
    # derivative taps need one extra offset on each side
    xs_d = np.arange(p_lo - 1, p_hi + 2) * dx
    dw = (np.asarray(kernel(xs_d + 0.5 * dx)) - np.asarray(kernel(xs_d - 0.5 * dx))) / dx
    return DiscreteKernel(
        weights=raw * scale,
        dweights=dw * scale,
        p_lo=p_lo,
        dx=dx,
        raw_mass=mass,
        dp_lo=p_lo - 1,
    )


def _check_engine(engine: str, n_taps: int) -> str:
    if engine == "auto":
        return "fft" if n_taps > FFT_TAP_THRESHOLD else "direct"
    if engine not in ("direct", "fft"):
        raise ValueError(f"unknown convolution engine {engine!r}")
    return engine


def convolve(kernel: DiscreteKernel, rho, engine: str = "auto", derivative: bool = False) -> np.ndarray:
    """``out_k = dx * sum_p w_p rho_{k-p}`` with ``rho`` extended by zero.

    ``rho`` may be 1-D or stacked along leading axes; the convolution acts on the
    last axis. ``derivative=True`` uses the derivative taps.
    """
    rho = np.asarray(rho, dtype=float)
    w = kernel.dweights if derivative else kernel.weights
    p_lo = kernel.dp_lo if derivative else kernel.p_lo
    engine = _check_engine(engine, len(w))
    n = rho.shape[-1]
    if engine == "direct":
        flat = np.ascontiguousarray(rho.reshape(-1, n))
        w = np.ascontiguousarray(w)
        out = np.empty_like(flat)
        for r in range(flat.shape[0]):
            out[r] = _core.convolve_direct(w, p_lo, flat[r], kernel.dx)
        return out.reshape(rho.shape)
    shape = (1,) * (rho.ndim - 1) + (len(w),)
    full = fftconvolve(rho, w.reshape(shape), mode="full", axes=-1)
    start = -p_lo
    return kernel.dx * full[..., start : start + n]


@dataclass
class KernelMatrix:
    """Square table of kernels: entry ``(i, j)`` is how class ``i`` sees class ``j``."""

    entries: list[list]

    def __post_init__(self) -> None:
        n = len(self.entries)
        if n < 1 or any(len(row) != n for row in self.entries):
            raise ShapeMismatchError("kernel matrix must be square with side >= 1")

    @classmethod
    def uniform(cls, n: int, kernel) -> "KernelMatrix":
        return cls([[kernel] * n for _ in range(n)])

    @classmethod
    def from_rows(cls, rows: Sequence) -> "KernelMatrix":
        """Row ``i`` given as one kernel (shared for all j) or a list of n kernels."""
        n = len(rows)
        return cls([list(r) if isinstance(r, (list, tuple)) else [r] * n for r in rows])

    @property
    def n(self) -> int:
        return len(self.entries)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def map(self, fn) -> "KernelMatrix":
        return KernelMatrix([[fn(k) for k in row] for row in self.entries])

    def sup_norms(self) -> tuple[float, float, float]:
        """Largest ``sup|eta|, sup|eta'|, sup|eta''|`` over all pairs."""
        norms = np.array([k.sup_norms() for row in self.entries for k in row])
        return tuple(float(v) for v in norms.max(axis=0))


@dataclass
class ConvolutionPlan:
    """Discretized kernel matrix on one grid, evaluating every ``eta_ij * rho_j`` at once.

    Pairs sharing a kernel are convolved once. Results are keyed by pair.
    """

    matrix: KernelMatrix
    grid: Grid1D
    engine: str = "auto"
    discrete: dict = field(init=False)
    _pair_key: list = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.discrete = {}
        self._pair_key = []
        for i, row in enumerate(self.matrix.entries):
            keys = []
            for j, k in enumerate(row):
                key = id(k) if not isinstance(k, (KernelSpec, SampledKernel)) else k
                if key not in self.discrete:
                    self.discrete[key] = discretize(k, self.grid)
                keys.append(key)
            self._pair_key.append(keys)

    @property
    def n(self) -> int:
        return self.matrix.n

    def kernel(self, i: int, j: int) -> DiscreteKernel:
        return self.discrete[self._pair_key[i][j]]

    def raw_defects(self) -> list[list[float]]:
        return [[self.kernel(i, j).raw_defect for j in range(self.n)] for i in range(self.n)]

    def apply(self, rho: np.ndarray, derivative: bool = False) -> np.ndarray:
        """``q[..., i, j, :] = (eta_ij * rho_j)``; ``rho`` has shape ``(..., n, N)``."""
        n = self.n
        out = np.empty(rho.shape[:-2] + (n, n, rho.shape[-1]))
        cache = {}
        for i in range(n):
            for j in range(n):
                key = (self._pair_key[i][j], j)
                if key not in cache:
                    cache[key] = convolve(self.kernel(i, j), rho[..., j, :], self.engine, derivative)
                out[..., i, j, :] = cache[key]
        return out
