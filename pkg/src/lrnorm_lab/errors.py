"""Exception hierarchy shared by every module.

CLI exit codes: ParameterError -> 1, NumericalFailure -> 2, invariant-suite
failures -> 3 (reported, not raised).
"""


class LrnormError(Exception):
    """Base class for all library errors."""


class ParameterError(LrnormError, ValueError):
    """A precondition or configuration inequality was violated.

    The message names the offending parameter or inequality.
    """


class ResolutionError(ParameterError):
    """A grid is too coarse for the requested bandwidth."""


class SaturationError(LrnormError, OverflowError):
    """A recurrence exceeded its overflow guard; the message names the degree."""


class NumericalFailure(LrnormError, RuntimeError):
    """An iterative routine failed to converge.

    Carries a ``diagnostics`` dict with the last iterate so callers can
    inspect what happened (e.g. Remez reference and levelled-error spread,
    or the simplex basis at the failing pivot).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class CalibrationError(NumericalFailure):
    """Calibration search exhausted its grid without meeting the target."""
