"""
Exception hierarchy for saddle_scout.

Outcomes that are part of normal search control flow (a branch that did not
converge, a run that diverged) are reported through status enums on result
objects. The classes below are raised for violated preconditions and bugs.
"""


class SaddleScoutError(Exception):
    """Base class for every error raised by the library"""


class DimensionError(SaddleScoutError, ValueError):
    """Vector length does not match the space dimension"""

    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"dimension mismatch: expected {expected}, got {got}")


class RankDeficiencyError(SaddleScoutError, ArithmeticError):
    """Gram-Schmidt pivot fell below the drop tolerance"""

    def __init__(self, index: int, pivot: float):
        self.index = index
        self.pivot = pivot
        super().__init__(f"rank deficiency at frame vector {index} (pivot norm {pivot:.3e})")


class LICQViolationError(SaddleScoutError, ArithmeticError):
    """Constraint gradients are (numerically) linearly dependent"""

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"constraint Gram matrix is singular (condition estimate {condition:.3e})")


class TangencyError(SaddleScoutError, ValueError):
    """A vector that must be tangent has a normal component"""


class FeasibilityError(SaddleScoutError, RuntimeError):
    """A point drifted off the constraint manifold"""

    def __init__(self, violation: float, tol: float):
        self.violation = violation
        self.tol = tol
        super().__init__(f"constraint violation {violation:.3e} exceeds tolerance {tol:.1e}")


class SingularityError(SaddleScoutError, ArithmeticError):
    """Energy evaluated at a singular configuration (e.g. coincident particles)"""


class PreconditionError(SaddleScoutError, ValueError):
    """An operation was called outside its domain"""


class EigensolverError(SaddleScoutError, RuntimeError):
    """Iterative eigensolver ran out of matrix-vector products"""

    def __init__(self, message: str, eigenvalues=None, residuals=None):
        self.eigenvalues = eigenvalues
        self.residuals = residuals
        super().__init__(message)


class ConfigError(SaddleScoutError, ValueError):
    """Invalid or missing configuration key"""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
