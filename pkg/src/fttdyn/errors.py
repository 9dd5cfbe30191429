"""Exception hierarchy shared by all modules."""


class FttError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(FttError, ValueError):
    """An argument is outside its admissible range."""


class DimensionError(FttError, ValueError):
    """Array shapes or sizes do not match."""


class DataError(FttError, ValueError):
    """Input data is not finite or otherwise unusable."""


class InvertibilityError(FttError, ValueError):
    """A matrix that must be invertible is (numerically) singular."""


class RankDeficiencyError(FttError):
    """An autocorrelation matrix is numerically singular during orthogonalization."""

    def __init__(self, bond, rcond):
        self.bond = bond
        self.rcond = rcond
        super().__init__(f"rank-deficient core at bond {bond} (rcond={rcond:.3e})")


class IllConditionedGramError(FttError):
    """A right-interface Gram matrix fell below the conditioning cap.

    Signals that the rank should be reduced before continuing.
    """

    def __init__(self, bond, rcond):
        self.bond = bond
        self.rcond = rcond
        super().__init__(f"ill-conditioned Gram matrix at bond {bond} (rcond={rcond:.3e})")


class StateError(FttError):
    """A tensor train violates a required structural precondition."""


class SolverAbort(FttError):
    """Time integration cannot continue."""

    def __init__(self, step, reason):
        self.step = step
        self.reason = reason
        super().__init__(f"solver aborted at step {step}: {reason}")


class FormatError(FttError):
    """A container file is malformed or incompatible."""
