"""Exception types shared across the toolkit.

Every error raised by the library derives from StressControlError so callers
(and the CLI exit-code mapping) can distinguish toolkit failures from bugs.
"""


class StressControlError(Exception):
    """Base class for all toolkit errors."""


class InvalidGrid(StressControlError):
    """Grid specification violates its invariants (N < 2, extent <= 0, ...)."""


class DimensionMismatch(StressControlError):
    """Operand shapes are incompatible with the discretization."""


class ChannelOutOfDomain(StressControlError):
    """An input/output channel lies outside the domain or has no support."""


class CflViolation(StressControlError):
    """Explicit time step exceeds the stability bound."""


class NonFiniteState(StressControlError):
    """State picked up NaN/Inf during integration."""

    def __init__(self, message, last_finite_time=None):
        super().__init__(message)
        self.last_finite_time = last_finite_time


class MissingRiccati(StressControlError):
    """A Riccati solution is required but was not supplied."""


class NotStabilizable(StressControlError):
    """PBH stabilizability test failed on an unstable mode."""


class NotDetectable(StressControlError):
    """PBH detectability test failed on an unstable mode."""


class GammaInfeasible(StressControlError):
    """No stabilizing Riccati solution exists at the requested gamma."""


class NoFeasibleGammaFound(StressControlError):
    """Gamma bisection exhausted its search interval."""


class ResonantModes(StressControlError):
    """Eigenvalue-sum denominator degenerate in the quadratic correction."""


class UnstableClosedLoop(StressControlError):
    """Closed-loop drift is not exponentially stable."""


class ZeroInputEnergy(StressControlError):
    """Empirical gain requested for a disturbance with no energy."""


class NonlinearTrajectoryRejected(StressControlError):
    """A check that requires linearized dynamics received a nonlinear run."""


class SaddleUnstable(StressControlError):
    """Saddle-point dynamics are not stable; cost integral diverges."""


class ConfigError(StressControlError):
    """Scenario configuration is malformed or violates invariants."""
