"""Exception hierarchy shared by all modules."""


class IvWingsError(Exception):
    """Base class for every error raised by the package."""


class PriceOutOfBounds(IvWingsError, ValueError):
    """Quote sits at or beyond a no-arbitrage bound, so no implied vol exists."""


class NoConvergence(IvWingsError, RuntimeError):
    """An iterative solver exhausted its budget."""


class DomainError(IvWingsError, ValueError):
    """Arguments outside the region where an asymptotic formula is defined."""


class GridTooShort(IvWingsError, ValueError):
    """Sample grid too short (points or decades) for a tail estimate."""


class NonPositiveSample(IvWingsError, ValueError):
    """Log-log fits need strictly positive samples."""


class InvalidIndex(IvWingsError, ValueError):
    """A tail index maps to a negative moment order."""


class WrongSide(IvWingsError, ValueError):
    """A call curve was passed where a put curve is required, or vice versa."""


class DivergentMoment(IvWingsError, ArithmeticError):
    """Requested moment is infinite for the model at hand."""


class UnsupportedOrder(IvWingsError, ValueError):
    """Bessel order outside the supported range."""


class QuadratureFailure(IvWingsError, RuntimeError):
    """Adaptive quadrature did not reach its tolerance."""


class OutsideStrip(IvWingsError, ValueError):
    """Complex argument outside the analyticity strip of a characteristic function."""


class ConfigError(IvWingsError, ValueError):
    """Invalid experiment configuration."""
