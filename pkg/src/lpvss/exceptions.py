"""Exception types shared across the package."""


class LpvssError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(LpvssError, ValueError):
    """Inconsistent array dimensions."""


class InstabilityError(LpvssError, RuntimeError):
    """A state recursion diverged (non-finite or unbounded state)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class SingularInnovationError(LpvssError, RuntimeError):
    """The innovation covariance became numerically singular."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class DegenerateExcitationError(LpvssError, ValueError):
    """A signal used by the correlation estimator carries (almost) no power."""


class MissingKeysError(LpvssError, KeyError):
    """A table lookup required keys that are not present."""

    def __init__(self, keys):
        self.keys = tuple(keys)
        super().__init__(f"{len(self.keys)} required sub-Markov keys missing: "
                         + ", ".join(str(k) for k in self.keys[:10])
                         + ("..." if len(self.keys) > 10 else ""))


class RankDeficiencyError(LpvssError, RuntimeError):
    """A matrix that must be full rank is rank deficient."""

    def __init__(self, message, deficiency=None):
        super().__init__(message)
        self.deficiency = deficiency


class SelectionError(LpvssError, ValueError):
    """A row/column selection is malformed or cannot reach the target rank."""

    def __init__(self, message, achieved_rank=None):
        super().__init__(message)
        self.achieved_rank = achieved_rank
