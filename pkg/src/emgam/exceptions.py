"""Exception types raised by the fitting machinery."""


class EmGamError(Exception):
    """Base class for all package errors."""


class ConstantPredictorError(EmGamError, ValueError):
    """A smooth term was requested on a predictor with zero range."""

    def __init__(self, message="constant predictor"):
        super().__init__(message)


class BasisSizeError(EmGamError, ValueError):
    def __init__(self, n, k):
        super().__init__(f"basis exceeds data: n={n} < K={k}")
        self.n = n
        self.k = k


class SupportError(EmGamError, ValueError):
    """An observation lies outside the support implied by the parameters."""

    def __init__(self, index, message="observation outside support"):
        super().__init__(f"{message} (observation {index})")
        self.index = index


class NonConvergenceError(EmGamError, RuntimeError):
    """An iteration limit was hit before convergence.

    ``best`` carries the best iterate reached, ``trajectory`` any history
    recorded by the caller.
    """

    def __init__(self, message, best=None, trajectory=None):
        super().__init__(message)
        self.best = best
        self.trajectory = trajectory


class StalledError(NonConvergenceError):
    """Step halving was exhausted without increasing the objective."""


class IdentifiabilityError(EmGamError, RuntimeError):
    def __init__(self, message="model fully unidentifiable"):
        super().__init__(message)


class InvalidCurvatureError(EmGamError, RuntimeError):
    """A non-positive c value was produced during the M-step."""

    def __init__(self, j, value):
        super().__init__(f"invalid curvature: c[{j}] = {value!r}")
        self.j = j
        self.value = value
