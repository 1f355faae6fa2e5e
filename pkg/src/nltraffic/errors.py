"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class NltrafficError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfigurationError(NltrafficError, ValueError):
    """A numerical parameter is out of range (CFL inputs, grids, comb sizes)."""


class InvalidKernelError(NltrafficError, ValueError):
    pass


class DegenerateKernelError(NltrafficError, ValueError):
    """Every sampled tap of a kernel vanished on the requested grid."""


class ShapeMismatchError(NltrafficError, ValueError):
    pass


class NumericError(NltrafficError, FloatingPointError):
    """Non-finite input or intermediate value."""


class DomainError(NltrafficError, ValueError):
    """Evaluation requested outside the range a field is defined on."""


class CflViolationError(NltrafficError):
    def __init__(self, courant: float, dt: float, dx: float, vmax: float):
        self.courant = courant
        super().__init__(
            f"CFL violated: dt*vmax/dx = {courant:.6g} > 1 "
            f"(dt={dt:.6g}, dx={dx:.6g}, vmax={vmax:.6g})"
        )


class SolverDivergenceError(NltrafficError):
    """Non-finite state. ``partial`` holds the trajectory up to the last good snapshot."""

    def __init__(self, message: str, step: int | None = None, partial=None):
        self.step = step
        self.partial = partial
        super().__init__(message)


class FrozenStateError(NltrafficError):
    """All velocities vanished before the final time; the run cannot advance."""

    def __init__(self, message: str, t: float, partial=None):
        self.t = t
        self.partial = partial
        super().__init__(message)


class ContractionError(NltrafficError):
    """The fixed-point iteration failed to converge; ``report`` has the residuals."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class ConfigError(NltrafficError, ValueError):
    """Scenario document failed validation. ``violations`` lists every problem found."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        joined = "\n  ".join(self.violations)
        super().__init__(f"{len(self.violations)} configuration error(s):\n  {joined}")
