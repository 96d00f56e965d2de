"""Exception types raised across the package."""


class G2LabError(Exception):
    """Base class for every error raised by g2lab."""


class DegreeOverflow(G2LabError):
    pass


class DegreeUnderflow(G2LabError):
    pass


class DegreeMismatch(G2LabError):
    pass


class NonPositiveMetric(G2LabError):
    pass


class NonPositiveForm(G2LabError):
    """A 3-form failed the positivity test.

    ``index`` holds the offending batch or grid position when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConstraintViolated(G2LabError):
    pass


class NotIn14(G2LabError):
    pass


class GridMismatch(G2LabError):
    pass


class BandLimitTooHigh(G2LabError):
    pass


class FormatError(G2LabError):
    pass


class IoError(G2LabError):
    pass


class NoConvergence(G2LabError):
    def __init__(self, max_iter, last_residual):
        super().__init__(
            f"no convergence after {max_iter} iterations "
            f"(last relative residual {last_residual:.3e})"
        )
        self.max_iter = max_iter
        self.last_residual = last_residual


class PreconditionFailed(G2LabError):
    pass


class NotClosed(G2LabError):
    pass


class PositivityLost(G2LabError):
    pass


class ConfigError(G2LabError):
    pass
