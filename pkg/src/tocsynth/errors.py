"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operands disagree on the number of variables or on vector length."""


class ControllabilityError(ValueError):
    """The input vector has a zero last component, so the pair is not controllable."""


class DeflationSingularityError(ArithmeticError):
    """Deflated residual evaluated on top of an already-found root."""


class NotZeroDimensionalError(ValueError):
    """The quotient ring is infinite dimensional (infinitely many complex roots)."""


class ResourceLimitError(RuntimeError):
    """Groebner basis computation exceeded its configured budget."""


class SolverStalledError(RuntimeError):
    """No admissible switching sequence was found for either initial sign."""


class DegenerateDataError(ValueError):
    """Training data with a single class (or no data at all)."""
