class NisdError(Exception):
    """Base class of every error raised by nisd.

    Library errors do not derive from ``ValueError`` so that they can be told
    apart from errors raised by torch or by the standard library. Each class
    carries the exit code the command line front end reports for it.
    """

    exit_code = 4


class SpecError(NisdError):
    """Raised when a problem file is malformed."""

    exit_code = 1


class InvalidInput(NisdError):
    """Raised when an argument is invalid (non-finite entries, empty bases)."""

    exit_code = 1


class ShapeError(NisdError):
    """Raised when dimensions, budgets or component counts do not match."""

    exit_code = 1


class DomainError(NisdError):
    """Raised when a point or a parameter lies outside its admissible domain."""

    exit_code = 1


class BudgetError(NisdError):
    """Raised when a truncation budget is too small for the requested
    computation."""

    exit_code = 1


class InconclusiveAtBudget(NisdError):
    """Raised when a discrete answer (a dimension) cannot be trusted at the
    current truncation budget because mass reaches the top degrees."""

    exit_code = 2


class ParameterFailure(NisdError):
    """Raised when no admissible parameter could be found."""

    exit_code = 3


class NumericalFailure(NisdError):
    """Raised when an identity that holds exactly in theory fails beyond
    tolerance."""


class NotContained(NisdError):
    """Raised when a subspace is not contained in another one."""


class SingularOperator(NisdError):
    """Raised when an operator that must be injective is numerically rank
    deficient."""


class InvalidShift(NisdError):
    """Raised when an operator does not qualify as a shift operator."""


class NotSimilar(NisdError):
    """Raised when two operators fail the similarity identity T2 V = V T1."""


class NotBoundedBelow(NisdError):
    """Raised when ``||Th|| >= ||h||`` fails under the ambient norm."""


class NotModelSpace(NisdError):
    """Raised when a backward shift invariant subspace is not a model space
    of a finite Blaschke product."""
