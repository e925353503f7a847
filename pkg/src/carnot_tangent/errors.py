"""Exception hierarchy shared by all modules."""


class CarnotError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(CarnotError, ValueError):
    """Operands disagree on number of variables, weights or truncation order."""


class JetDomainError(CarnotError, ValueError):
    """A substituted series has a nonzero constant term."""


class JetDegreeError(CarnotError, ValueError):
    """A weighted-degree precondition of a substitution is violated."""


class JetOrderError(CarnotError, ValueError):
    """The truncation order is too small to represent an exact result.

    ``required`` holds the smallest order that would have worked, when known.
    """

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class UnsupportedError(CarnotError, NotImplementedError):
    """The operation is outside the supported case (e.g. non-identity linear part)."""


class HormanderError(CarnotError):
    """Brackets up to the allowed length do not span the tangent space at 0."""

    def __init__(self, message, achieved_dim):
        super().__init__(message)
        self.achieved_dim = achieved_dim


class DecompositionError(CarnotError):
    """A clause of the principal-part decomposition fails.

    ``clause`` is one of ``"i"``, ``"ii"``, ``"iii"``, ``"iv"`` or ``"pre"``.
    """

    def __init__(self, message, clause):
        super().__init__(f"clause ({clause}): {message}")
        self.clause = clause


class ConsistencyError(CarnotError):
    """An internal invariant that must hold by construction was violated."""


class RankError(CarnotError, ValueError):
    """Free Lie algebra rank or step out of range."""


class StructureError(CarnotError):
    """A flow that should be polynomial failed to stabilise."""


class EscapeError(CarnotError):
    """A numerically integrated state left the configured bounding box."""


class WindowError(CarnotError, ValueError):
    """A blow-up window is not contained in the domain of the control."""
