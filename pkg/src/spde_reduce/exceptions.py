"""Exception hierarchy shared across the package."""


class ReductionError(Exception):
    """Base class for all errors raised by spde_reduce."""


class GridMismatchError(ReductionError, ValueError):
    """Two fields live on different grids."""


class DegeneracyError(ReductionError):
    """The tangent basis or the A-matrix is (numerically) singular."""

    def __init__(self, message, h=None, condition_number=None):
        super().__init__(message)
        self.h = h
        self.condition_number = condition_number


class OutOfTubeError(ReductionError):
    """Fermi projection failed to converge: the state left the tubular neighbourhood."""

    def __init__(self, message, h=None, time=None):
        super().__init__(message)
        self.h = h
        self.time = time


class DivergenceError(ReductionError, FloatingPointError):
    """A trajectory produced non-finite or runaway values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class OrthogonalityError(ReductionError, ValueError):
    """Initial data for the coupled system violates <u_j^h, v> = 0."""


class UnsupportedError(ReductionError, NotImplementedError):
    """Requested operation is not available for this object."""
