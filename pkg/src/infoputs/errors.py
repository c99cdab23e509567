"""Exception hierarchy shared by all modules."""


class PutsError(Exception):
    """Base class for package errors."""


class DomainError(PutsError, ValueError):
    """Input outside the domain of an operation."""


class ParameterError(PutsError, ValueError):
    """Inconsistent or infeasible parameter choice."""


class PreconditionError(PutsError, ValueError):
    """Operation called on a state that violates its precondition."""


class GeometryError(PutsError):
    """Root not bracketed; usually means a monotonicity assumption failed."""


class InvariantViolation(PutsError):
    """A structural invariant (monotonicity, ordering, positivity) failed."""


class NumericalError(PutsError):
    """Quadrature or root-finding did not reach the requested accuracy."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3g})")
        self.residual = residual


class ConfigurationError(PutsError, ValueError):
    """Bad experiment or scenario configuration."""


class SimulationError(PutsError):
    """Event loop could not make progress."""


class CertificationFailure(PutsError):
    """A certificate or audit found a nonpositive margin or excessive gap."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
