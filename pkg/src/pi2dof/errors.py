"""Exception types shared across the package."""


class StabilityError(RuntimeError):
    """Closed-loop matrix is not Hurwitz / Schur stable (gain outside the stabilizing set)."""


class RankError(ValueError):
    """A matrix required to have full row rank is (numerically) rank deficient."""


class DivergenceError(RuntimeError):
    """A simulated trajectory produced non-finite state.

    Attributes carry where the blow-up happened: ``time`` (simulated seconds) and,
    when raised from a gradient-estimation rollout, the ``(i, j, k)`` indices of
    the offending direction / inner sample / sign.
    """

    def __init__(self, message, time=None, i=None, j=None, k=None):
        super().__init__(message)
        self.time = time
        self.i = i
        self.j = j
        self.k = k


class IdentificationError(RuntimeError):
    """System identification failed (e.g. Hankel singular values collapsed)."""


class EstimationError(RuntimeError):
    """A data-driven estimate could not be formed (signal below noise floor, bad fit)."""


class SingularityError(ValueError):
    """A matrix that must be invertible for the requested computation is singular."""
