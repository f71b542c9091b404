"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when arguments violate an operation's preconditions."""


class EmptyCellError(InvalidInputError):
    """A net vertex received no quadrature samples."""

    def __init__(self, vertex, message=None):
        self.vertex = int(vertex)
        super().__init__(message or f"vertex {self.vertex} has an empty Voronoi cell "
                         "(net too sparse or too few samples)")


class KernelSupportError(InvalidInputError):
    """No quadrature sample lies inside the kernel support at an evaluation point."""


class AmbiguousClusterError(InvalidInputError):
    """A graph eigenvalue is equidistant from two exact eigenvalue clusters."""

    def __init__(self, value, candidates):
        self.value = float(value)
        self.candidates = tuple(float(c) for c in candidates)
        super().__init__(f"eigenvalue {self.value:.6g} is equidistant from exact clusters "
                         f"{', '.join(f'{c:.6g}' for c in self.candidates)}")


class ConvergenceError(RuntimeError):
    """The iterative eigensolver did not reach the requested tolerance."""

    def __init__(self, message, residuals=None, eigenvalues=None, iterations=None):
        super().__init__(message)
        self.residuals = residuals
        self.eigenvalues = eigenvalues
        self.iterations = iterations


class StageError(RuntimeError):
    """Wraps a failure inside a pipeline stage, keeping the stage name."""

    def __init__(self, stage, cause, partial=None):
        self.stage = stage
        self.cause = cause
        self.partial = partial
        super().__init__(f"[{stage}] {cause}")
