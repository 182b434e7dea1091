"""Exception types raised across the package."""


class MajgnError(Exception):
    """Base class for all package errors."""


class InvalidParameter(MajgnError, ValueError):
    """A parameter violates a documented invariant."""


class RankDeficient(MajgnError):
    """An operator that must be injective is not (numerically)."""


class Singular(MajgnError):
    """A square operator that must be invertible is not."""


class SingularB(Singular):
    """The Gauss-Newton matrix approximation B(x) is not invertible."""


class OutOfDomain(MajgnError):
    """A point lies outside the domain where a function is defined."""


class OutOfRadius(MajgnError):
    """A starting value lies outside the certified convergence ball."""


class NotFound(MajgnError):
    """A root or supremum could not be located."""


class QuadratureFailure(MajgnError):
    """Adaptive quadrature exhausted its refinement budget."""


class PolicyInfeasible(MajgnError):
    """A residual policy cannot honour its forcing-term budget."""


class UnknownProblem(MajgnError, KeyError):
    """A problem name is not in the catalog."""


class AnnotationInvalid(MajgnError):
    """A problem's majorant annotation fails on a sampled witness."""

    def __init__(self, message, x=None, tau=None, violation=None):
        super().__init__(message)
        self.x = x
        self.tau = tau
        self.violation = violation


class BoundViolated(MajgnError):
    """A certified bound failed on a solver trace."""

    def __init__(self, message, k=None, lhs=None, rhs=None, report=None):
        super().__init__(message)
        self.k = k
        self.lhs = lhs
        self.rhs = rhs
        self.report = report


class InsufficientData(MajgnError):
    """Not enough usable iterates for a rate estimate."""


class SolverError(MajgnError):
    """Wraps a failure inside an iteration with its index and partial trace."""

    def __init__(self, message, iteration, cause=None, trace=None):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.cause = cause
        self.trace = trace
