"""Exception hierarchy for bfclab.

Numerical failures derive from :class:`NumericalError` so the command line
front end can map them to a distinct exit status.
"""


class BfcLabError(Exception):
    """Base class for all bfclab errors."""


class ConfigError(BfcLabError, ValueError):
    """Invalid or unreadable scenario configuration."""


class NumericalError(BfcLabError):
    """A computation could not meet its accuracy contract."""


class ResolutionError(NumericalError, ValueError):
    """Delay grid too coarse for the requested operation."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""


class FitDivergence(NumericalError):
    """Least-squares fit residual exceeded its acceptance threshold."""


class InsufficientSamples(BfcLabError, ValueError):
    pass


class BinOutOfRange(BfcLabError, ValueError):
    pass


class AllZeroWeights(BfcLabError, ValueError):
    pass


class InvalidOrdering(BfcLabError, ValueError):
    pass


class NoIdlerRecords(BfcLabError, ValueError):
    pass


class UnknownChannel(BfcLabError, KeyError):
    pass


class EmptyAccidentalRegion(BfcLabError, ValueError):
    pass


class NoHeralds(BfcLabError, ValueError):
    pass


class IncompleteGrid(BfcLabError, ValueError):
    pass


class NoCoincidences(BfcLabError, ValueError):
    pass


class LengthMismatch(BfcLabError, ValueError):
    pass
