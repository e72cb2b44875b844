"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter or argument is outside the admissible range."""


class SingularityError(ArithmeticError):
    """A matrix operation hit a zero pivot.

    The offending diagonal index is stored in ``index``.
    """

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"zero diagonal entry at index {index}")


class DegeneracyError(RuntimeError):
    """The coupled linearization degenerates (equal eigenvalue ladders).

    For Jacobi parameters this happens exactly on the line
    ``alpha + beta = -1`` at association order 1; callers should switch to
    the forced first-association path or the dedicated degenerate solver.
    """


class RefinementError(RuntimeError):
    """Eigenvector refinement failed to converge for a collided eigenvalue."""

    def __init__(self, eigenvalue, message=None):
        self.eigenvalue = eigenvalue
        super().__init__(
            message or f"inverse iteration stagnated for eigenvalue {eigenvalue!r}"
        )


class ConfigurationError(ValueError):
    """Requested options are mutually inconsistent or unattainable."""


class BasisMismatchError(ValueError):
    """Coefficient vector basis does not match the operator's basis."""


class NumericalError(RuntimeError):
    """An iterative numerical procedure failed to converge."""
