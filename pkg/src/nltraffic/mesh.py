"""Uniform 1-D cell meshes, density fields and the discrete norms shared by both solvers.

A density field is a float array of shape ``(n_classes, n_cells)`` holding cell
averages. A single-class field may be passed as a 1-D array; the norm helpers
promote it and return a length-1 result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigurationError, NumericError, ShapeMismatchError


@dataclass(frozen=True)
class Grid1D:
    """Cell-centered uniform mesh on ``[x_lo, x_hi]``."""

    x_lo: float
    x_hi: float
    n_cells: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_lo) and math.isfinite(self.x_hi)):
            raise InvalidConfigurationError("grid bounds must be finite")
        if self.x_hi <= self.x_lo:
            raise InvalidConfigurationError(f"x_hi ({self.x_hi}) must exceed x_lo ({self.x_lo})")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise InvalidConfigurationError(f"n_cells must be an integer >= 2, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.x_lo + np.arange(self.n_cells + 1) * self.dx

    def cell_of(self, x) -> np.ndarray:
        """Index of the cell containing ``x``; -1 / n_cells flag points outside."""
        idx = np.floor((np.asarray(x, dtype=float) - self.x_lo) / self.dx).astype(np.int64)
        return np.clip(idx, -1, self.n_cells)

    def aligned(self, x: float, tol: float = 1e-9) -> bool:
        """True if ``x`` sits on a cell edge (up to ``tol`` in units of dx)."""
        r = (x - self.x_lo) / self.dx
        return abs(r - round(r)) <= tol


def as_field(values, grid: Grid1D | None = None) -> np.ndarray:
    """Validate and promote ``values`` to a ``(n_classes, n_cells)`` float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeMismatchError(f"density field must be 1-D or 2-D, got shape {arr.shape}")
    if grid is not None and arr.shape[1] != grid.n_cells:
        raise ShapeMismatchError(f"field has {arr.shape[1]} cells, grid has {grid.n_cells}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("density field contains non-finite entries")
    return arr


@dataclass
class DensityTrajectory:
    """Snapshots ``(t_m, field_m)`` on one grid, strictly increasing in time."""

    grid: Grid1D
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.times) != len(self.states):
            raise ShapeMismatchError("times and states differ in length")
        states, self.states = self.states, []
        times, self.times = self.times, []
        for t, s in zip(times, states):
            self.append(t, s)

    def append(self, t: float, state) -> None:
        if self.times and not t > self.times[-1]:
            raise InvalidConfigurationError(
                f"trajectory times must increase strictly: {t} after {self.times[-1]}"
            )
        arr = as_field(state, self.grid)
        if self.states and arr.shape != self.states[0].shape:
            raise ShapeMismatchError("all snapshots must have the same class count")
        self.times.append(float(t))
        self.states.append(arr.copy())

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n_classes(self) -> int:
        return self.states[0].shape[0] if self.states else 0

    def at(self, t: float, atol: float = 1e-12) -> np.ndarray:
        """Stored snapshot at time ``t`` (exact match up to ``atol``)."""
        for tm, s in zip(self.times, self.states):
            if abs(tm - t) <= atol * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot at t={t}; available: {self.times}")

    def as_array(self) -> np.ndarray:
        return np.stack(self.states)


def cfl_timestep(max_speed: float, dx: float, safety: float = 0.9) -> float:
    """Largest stable step ``safety * dx / max_speed``.

    A zero maximal speed means nothing moves; that is reported as an error
    rather than answered with an infinite step.
    """
    if not (math.isfinite(max_speed) and max_speed > 0):
        raise InvalidConfigurationError(f"max_speed must be finite and > 0, got {max_speed}")
    if not (math.isfinite(dx) and dx > 0):
        raise InvalidConfigurationError(f"dx must be finite and > 0, got {dx}")
    if not (0 < safety <= 1):
        raise InvalidConfigurationError(f"CFL safety factor must lie in (0, 1], got {safety}")
    return safety * dx / max_speed


def l1_norm(field_, grid: Grid1D) -> np.ndarray:
    arr = as_field(field_, grid)
    return grid.dx * np.abs(arr).sum(axis=1)


def tv_discrete(field_) -> np.ndarray:
    """Per-class total variation, counting the jumps to the zero extension at both ends."""
    arr = as_field(field_)
    if arr.shape[1] < 2:
        raise ShapeMismatchError("total variation needs at least two cells")
    padded = np.pad(arr, ((0, 0), (1, 1)))
    return np.abs(np.diff(padded, axis=1)).sum(axis=1)


def l1_distance(a, b, grid: Grid1D) -> np.ndarray:
    fa = as_field(a, grid)
    fb = as_field(b, grid)
    if fa.shape != fb.shape:
        raise ShapeMismatchError(f"fields differ in shape: {fa.shape} vs {fb.shape}")
    return grid.dx * np.abs(fa - fb).sum(axis=1)
