"""Multiclass nonlocal traffic flow: finite-volume and Lagrangian solvers plus diagnostics."""

from ._core import BACKEND
from .kernels import KernelMatrix, KernelSpec, SampledKernel
from .mesh import DensityTrajectory, Grid1D
from .problem import Problem
from .speed_laws import BottleneckProfile, ConstantLaw, CubicLaw

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BottleneckProfile",
    "ConstantLaw",
    "CubicLaw",
    "DensityTrajectory",
    "Grid1D",
    "KernelMatrix",
    "KernelSpec",
    "Problem",
    "SampledKernel",
]
