"""Exception types shared across the package.

The CLI maps these onto process exit codes; see `spintop.cli`.
"""


class SpintopError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(SpintopError, ValueError):
    """A parameter value is outside its documented domain."""


class EngineMismatchError(SpintopError, ValueError):
    """Requested engine cannot run with the given parameters (e.g. full
    quantum evolution at an atom number that would need an impractically
    large Dicke basis)."""


class ConfigError(SpintopError):
    """Config file is missing, malformed, or fails validation."""


class DegenerateOutcomeError(SpintopError):
    """A measurement outcome annihilated the state (post-measurement norm
    underflow).  Indicates an outcome drawn impossibly far from the
    support of the current state."""


class FrameDegeneracyError(SpintopError):
    """Cannot build a tangent frame because the mean spin has collapsed
    to (numerically) zero length."""


class NumericalDegeneracyError(SpintopError):
    """A divergence estimate lost all resolution (e.g. shadow trajectories
    collapsed onto the fiducial below floating-point separation)."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = dict(diagnostics)


class IntegratorStepError(SpintopError):
    """A stochastic integrator step left the state outside its validity
    tolerance (trace, hermiticity, or positivity); shrink the step."""
