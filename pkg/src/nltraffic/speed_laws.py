"""Speed laws ``v_i(t, x, q_1..q_n)`` with analytic partial derivatives.

``q`` is passed with the class axis first: ``q[j]`` is the convolution
``eta_ij * rho_j`` seen by the class that owns the law, broadcast against ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import NumericError


@dataclass(frozen=True)
class BottleneckProfile:
    """Maximal-speed profile dipping smoothly to 1/2 at the middle of ``[lo, hi]``."""

    lo: float = 5.0
    hi: float = 10.0

    @property
    def coefficient(self) -> float:
        # 32/5^6 for the default [5, 10]; makes the minimum exactly 1/2
        return 0.5 / ((self.hi - self.lo) / 2.0) ** 6

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        ab = (x - self.lo) * (self.hi - x)
        return np.where(inside, 1.0 - self.coefficient * ab * ab * ab, 1.0)

    def dx(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        a, b = x - self.lo, self.hi - x
        ab = a * b
        return np.where(inside, -3.0 * self.coefficient * ab * ab * (b - a), 0.0)


class SpeedLaw:
    """Base class. Subclasses implement ``speed``, ``dq`` and ``dx``; ``vmax`` bounds the speed."""

    vmax: float = 0.0

    def speed(self, t, x, q):
        raise NotImplementedError

    def dq(self, t, x, q):
        raise NotImplementedError

    def dx(self, t, x, q):
        raise NotImplementedError

    def scaled(self, factor: float) -> "SpeedLaw":
        raise NotImplementedError(f"{type(self).__name__} does not support speed scaling")


def _as_q(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        q = q[None]
    if not np.all(np.isfinite(q)):
        raise NumericError("speed law received non-finite q")
    return q


@dataclass(frozen=True)
class CubicLaw(SpeedLaw):
    """``V(x) (1 - q)^3`` clamped to ``[0, V(x)]``, with ``q`` the sum of the class convolutions.

    ``V(x) = vmax * profile(x)``; no profile means a constant maximal speed.
    At the ``q = 0`` kink the derivative takes the interior value ``-3 V``.
    """

    vmax: float = 1.0
    profile: BottleneckProfile | None = None

    def _V(self, x):
        x = np.asarray(x, dtype=float)
        if self.profile is None:
            return np.full(x.shape, self.vmax)
        return self.vmax * self.profile(x)

    def speed(self, t, x, q):
        r = 1.0 - np.clip(_as_q(q).sum(axis=0), 0.0, 1.0)
        return self._V(x) * (r * r * r)

    def dq(self, t, x, q):
        q = _as_q(q)
        s = q.sum(axis=0)
        g = np.where((s >= 0.0) & (s <= 1.0), -3.0 * self._V(x) * ((1.0 - s) * (1.0 - s)), 0.0)
        return np.broadcast_to(g, q.shape[:1] + np.broadcast(g, q[0]).shape).copy()

    def dx(self, t, x, q):
        r = 1.0 - np.clip(_as_q(q).sum(axis=0), 0.0, 1.0)
        if self.profile is None:
            return np.zeros(np.broadcast(np.asarray(x, dtype=float), r).shape)
        return self.vmax * self.profile.dx(x) * (r * r * r)

    def scaled(self, factor: float) -> "CubicLaw":
        return replace(self, vmax=self.vmax * factor)


@dataclass(frozen=True)
class ConstantLaw(SpeedLaw):
    """``v = c`` regardless of density: the coupling is inert."""

    vmax: float = 1.0

    def speed(self, t, x, q):
        q = _as_q(q)
        return np.full(np.broadcast(np.asarray(x, dtype=float), q[0]).shape, self.vmax)

    def dq(self, t, x, q):
        q = _as_q(q)
        return np.zeros(q.shape[:1] + np.broadcast(np.asarray(x, dtype=float), q[0]).shape)

    def dx(self, t, x, q):
        q = _as_q(q)
        return np.zeros(np.broadcast(np.asarray(x, dtype=float), q[0]).shape)

    def scaled(self, factor: float) -> "ConstantLaw":
        return ConstantLaw(self.vmax * factor)


@dataclass(frozen=True)
class FunctionLaw(SpeedLaw):
    """Custom law from callables ``speed(t, x, q)``, ``dq(t, x, q)``, ``dx(t, x, q)``."""

    speed_fn: Callable
    dq_fn: Callable
    dx_fn: Callable
    vmax: float = 1.0

    def speed(self, t, x, q):
        return np.asarray(self.speed_fn(t, x, _as_q(q)), dtype=float)

    def dq(self, t, x, q):
        return np.asarray(self.dq_fn(t, x, _as_q(q)), dtype=float)

    def dx(self, t, x, q):
        return np.asarray(self.dx_fn(t, x, _as_q(q)), dtype=float)


def eval_speed(law: SpeedLaw, t, x, q):
    return law.speed(t, x, q)


def eval_speed_dq(law: SpeedLaw, t, x, q):
    return law.dq(t, x, q)


def eval_speed_dx(law: SpeedLaw, t, x, q):
    return law.dx(t, x, q)


@dataclass
class AssumptionReport:
    """Sampled bounds standing in for the law's norm, plus detected gradient kinks."""

    sup_v: float
    sup_v0: float
    sup_dx: float
    sup_dq: float
    sup_dxx: float
    sup_dxq: float
    sup_dqq: float
    kinks: list = field(default_factory=list)

    @property
    def norm(self) -> float:
        """``sup|v(.,0)|`` plus the first- and second-order derivative bounds."""
        return (
            self.sup_v0
            + self.sup_dx
            + self.sup_dq
            + self.sup_dxx
            + self.sup_dxq
            + self.sup_dqq
        )


def validate_assumption_v(
    law: SpeedLaw,
    n_classes: int = 1,
    q_range: tuple[float, float] = (0.0, 1.0),
    x_range: tuple[float, float] = (0.0, 1.0),
    t_range: tuple[float, float] = (0.0, 0.0),
    n_q: int = 201,
    n_x: int = 201,
    n_t: int = 1,
    h: float = 1e-5,
) -> AssumptionReport:
    """Sample ``v`` and its finite-difference derivatives on a (t, x, q) lattice.

    Derivatives are taken at lattice midpoints so a kink at the edge of the
    q-range is never straddled; kinks are probed separately at every lattice
    node with one-sided slopes.
    """
    q_lo, q_hi = q_range
    qs = q_lo + (np.arange(n_q) + 0.5) * (q_hi - q_lo) / n_q
    xs = x_range[0] + (np.arange(n_x) + 0.5) * (x_range[1] - x_range[0]) / n_x
    ts = np.linspace(t_range[0], t_range[1], n_t)
    X, S = np.meshgrid(xs, qs, indexing="ij")

    def sample(t, x, s, j):
        q = np.zeros((n_classes,) + np.shape(s))
        q[j] = s
        v = np.asarray(law.speed(t, x, q), dtype=float)
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(np.broadcast_to(v, np.broadcast(x, s).shape)))[0]
            raise NumericError(f"non-finite speed at t={t}, class axis {j}, lattice index {tuple(bad)}")
        return np.broadcast_to(v, np.broadcast(x, s).shape)

    sup = dict(v=0.0, v0=0.0, dx=0.0, dq=0.0, dxx=0.0, dxq=0.0, dqq=0.0)
    kinks = []
    nodes = np.linspace(q_lo, q_hi, n_q + 1)
    hk = max(h * 0.1, 1e-7)
    for t in ts:
        zero = np.zeros((n_classes, xs.size))
        sup["v0"] = max(sup["v0"], float(np.abs(law.speed(t, xs, zero)).max()))
        for j in range(n_classes):
            v = sample(t, X, S, j)
            vxp, vxm = sample(t, X + h, S, j), sample(t, X - h, S, j)
            vqp, vqm = sample(t, X, S + h, j), sample(t, X, S - h, j)
            vpp, vpm = sample(t, X + h, S + h, j), sample(t, X + h, S - h, j)
            vmp, vmm = sample(t, X - h, S + h, j), sample(t, X - h, S - h, j)
            sup["v"] = max(sup["v"], float(np.abs(v).max()))
            sup["dx"] = max(sup["dx"], float(np.abs(vxp - vxm).max() / (2 * h)))
            sup["dq"] = max(sup["dq"], float(np.abs(vqp - vqm).max() / (2 * h)))
            sup["dxx"] = max(sup["dxx"], float(np.abs(vxp - 2 * v + vxm).max() / h**2))
            sup["dqq"] = max(sup["dqq"], float(np.abs(vqp - 2 * v + vqm).max() / h**2))
            sup["dxq"] = max(sup["dxq"], float(np.abs(vpp - vpm - vmp + vmm).max() / (4 * h * h)))

            XN, SN = np.meshgrid(xs, nodes, indexing="ij")
            c = sample(t, XN, SN, j)
            right = (sample(t, XN, SN + hk, j) - c) / hk
            left = (c - sample(t, XN, SN - hk, j)) / hk
            jump = np.abs(right - left).max(axis=0)
            tol = 1e-3 * max(1.0, sup["dq"])
            for node, jmp in zip(nodes, jump):
                if jmp > tol:
                    kinks.append({"t": float(t), "class_axis": j, "q": float(node), "slope_jump": float(jmp)})
    return AssumptionReport(
        sup_v=sup["v"],
        sup_v0=sup["v0"],
        sup_dx=sup["dx"],
        sup_dq=sup["dq"],
        sup_dxx=sup["dxx"],
        sup_dxq=sup["dxq"],
        sup_dqq=sup["dqq"],
        kinks=kinks,
    )


def law_norm(reports: list[AssumptionReport]) -> float:
    """Euclidean combination of per-class norm proxies."""
    return math.sqrt(sum(r.norm**2 for r in reports))
