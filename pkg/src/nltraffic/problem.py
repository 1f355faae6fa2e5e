"""The data both solvers consume: grid, initial densities, speed laws, kernel matrix."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeMismatchError
from .kernels import KernelMatrix
from .mesh import Grid1D, as_field


@dataclass
class Problem:
    grid: Grid1D
    rho0: np.ndarray
    laws: list
    kernels: KernelMatrix
    t0: float = 0.0
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.rho0 = as_field(self.rho0, self.grid)
        n = self.rho0.shape[0]
        if len(self.laws) != n:
            raise ShapeMismatchError(f"{len(self.laws)} speed laws for {n} classes")
        if self.kernels.n != n:
            raise ShapeMismatchError(f"kernel matrix of side {self.kernels.n} for {n} classes")

    @property
    def n_classes(self) -> int:
        return self.rho0.shape[0]

    @property
    def vmax(self) -> float:
        return max(law.vmax for law in self.laws)

    def with_(self, **changes) -> "Problem":
        return replace(self, **changes)
