"""Exception hierarchy shared by all modules."""


class WellposedError(Exception):
    """Base class for errors raised by this package."""


class SchemaError(WellposedError, ValueError):
    """A spec document is missing fields, has unknown fields, or is malformed."""


class DimensionError(WellposedError, ValueError):
    """Matrix shapes are inconsistent with the declared sizes ``n`` and ``m``."""


class SpecIOError(WellposedError, OSError):
    """A spec or artifact file could not be read or written."""


class SingularMatrixError(WellposedError, ArithmeticError):
    """A linear system is rank deficient (smallest pivot below threshold)."""


class NotHermitianError(WellposedError, ValueError):
    pass


class NotApplicableError(WellposedError):
    """The hypotheses of a test or construction are not met by the spec."""


class SingularSError(WellposedError, ArithmeticError):
    """``(W_L + W_R)/2`` is singular, so ``W = S[I+V, I-V]`` has no solution with this S."""


class NotWellPosedError(WellposedError):
    pass


class OnSpectrumError(WellposedError, ArithmeticError):
    """The boundary-value system at ``s`` is numerically singular: ``s`` is (close to) an eigenvalue."""

    def __init__(self, s, ratio):
        super().__init__(f"s = {s} lies on the spectrum (sigma_min/sigma_max = {ratio:.3e})")
        self.s = s
        self.ratio = ratio


class RankDeficientConstraintsError(WellposedError, ArithmeticError):
    pass


class StepSolveFailedError(WellposedError, ArithmeticError):
    def __init__(self, t, reason=""):
        super().__init__(f"implicit step failed at t = {t:g}" + (f": {reason}" if reason else ""))
        self.t = t


class DegenerateDataError(WellposedError, ValueError):
    pass


class NotSquareError(WellposedError, ValueError):
    pass
