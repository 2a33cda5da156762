"""Exception hierarchy.

Every numerical failure derives from :class:`LaurentLabError` so the CLI can
map it onto a single exit code and report ``type(exc).__name__``.
"""


class LaurentLabError(Exception):
    pass


class NonConvergent(LaurentLabError):
    """Quadrature tolerance not reached at the largest allowed grid."""


class AssumptionViolated(LaurentLabError):
    pass


class ExponentFitFailed(LaurentLabError):
    pass


class FactorMismatch(LaurentLabError):
    pass


class IntervalTooShort(LaurentLabError):
    pass


class NotPSD(LaurentLabError):
    pass


class DimensionCap(LaurentLabError):
    pass


class BracketViolated(LaurentLabError):
    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class NotInSpan(LaurentLabError):
    pass


class KernelDimensionMismatch(LaurentLabError):
    pass


class WindowInvalid(LaurentLabError):
    """Double logarithm undefined: some curve value is 0 or 1 inside the window."""


class GapConstantMissing(LaurentLabError):
    pass


class SupportTooWide(LaurentLabError):
    pass


class ConfigInvalid(LaurentLabError):
    pass
