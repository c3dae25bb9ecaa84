"""Exception hierarchy shared by all modules."""


class ShrinkerLabError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(ShrinkerLabError, ValueError):
    """An argument is outside its admissible range."""


class DomainError(ShrinkerLabError, ValueError):
    """A parameter point lies outside a parametrization domain."""


class ResourceError(ShrinkerLabError):
    """A requested construction would exceed a configured budget."""


class MeshValidationError(ShrinkerLabError):
    """The mesh violates a manifold/orientation/area invariant.

    ``kind`` is a short machine-readable tag and ``simplex`` names the
    offending vertex indices (an edge, a triangle or a single vertex).
    """

    def __init__(self, kind, simplex, message):
        super().__init__(message)
        self.kind = kind
        self.simplex = tuple(int(i) for i in simplex)


class ConvergenceError(ShrinkerLabError):
    """An iterative solver ran out of budget; ``history`` holds its residuals."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class PreconditionError(ShrinkerLabError, ValueError):
    """A hypothesis required by a checked statement does not hold."""


class MeshFormatError(ShrinkerLabError, ValueError):
    """A mesh file could not be parsed."""
