"""Exception types shared across the package."""


class ZrpError(Exception):
    """Base class for all package-specific errors."""


class DomainError(ZrpError):
    """Evaluation outside the domain of a rate or thermodynamic function."""


class DivergenceError(ZrpError):
    """A partition-function series was detected to diverge."""

    def __init__(self, phi, message=None):
        self.phi = tuple(float(p) for p in phi)
        super().__init__(message or f"partition series diverges at fugacity {self.phi}")


class CriticalDensityError(ZrpError):
    """A density is at or beyond the critical region."""


class FeasibilityError(ZrpError):
    """An exact computation was requested on an infeasibly large state space."""


class FrozenStateError(ZrpError):
    """The lattice carries zero total jump intensity."""


class ConfigError(ZrpError):
    """Invalid experiment configuration."""
