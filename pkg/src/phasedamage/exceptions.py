"""Exception types raised by the solvers and the I/O layer."""


class PhaseDamageError(Exception):
    """Base class for all package errors."""


class NonConvergenceError(PhaseDamageError):
    """An iterative solver exhausted its budget.

    Attributes
    ----------
    residual : float
        Last residual measured before giving up.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularSystemError(PhaseDamageError):
    """A linearized operator lost definiteness or could not be factorized."""


class MassDriftError(PhaseDamageError):
    """Component masses changed across a Cahn-Hilliard step."""


class ConstraintViolationError(PhaseDamageError, ValueError):
    """A state violates a hard constraint (for instance ``z`` outside ``[0, 1]``)."""


class IrreversibilityError(ConstraintViolationError):
    """Damage increased somewhere (``z_new > z_old``)."""


class ConfigError(PhaseDamageError, ValueError):
    """Configuration file could not be parsed or failed validation."""


class SnapshotFormatError(PhaseDamageError, ValueError):
    """A snapshot file has a malformed or incompatible header."""


class SimulationError(PhaseDamageError):
    """A solver failed during a time-stepping run.

    Attributes
    ----------
    step : int
        Index of the step that failed.
    last_good : State or None
        Last successfully computed state.
    """

    def __init__(self, message, step, last_good=None, cause=None):
        super().__init__(message)
        self.step = step
        self.last_good = last_good
        self.cause = cause
