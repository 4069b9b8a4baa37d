"""Exception hierarchy shared by every module."""


class GaforestError(Exception):
    """Base class for all library errors."""


class ShapeError(GaforestError, ValueError):
    """Operand extents are incompatible."""


class DomainError(GaforestError, ValueError):
    """An input lies outside the domain of a function (log of <= 0, NaN entries...)."""


class ContractError(GaforestError, ValueError):
    """A precondition of an operation was violated by the caller."""


class NonFiniteError(GaforestError, FloatingPointError):
    """A NaN or Inf was produced while debug checks are enabled."""


class DegenerateMatrixError(GaforestError, ArithmeticError):
    """Every singular value is below the rank tolerance."""


class SpecError(GaforestError, ValueError):
    """A model or dataset specification is inconsistent."""


class DivergenceError(GaforestError, RuntimeError):
    """Training produced a non-finite loss."""
