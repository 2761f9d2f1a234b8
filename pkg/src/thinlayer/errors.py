"""Exception hierarchy shared by all thinlayer modules."""


class ThinLayerError(ValueError):
    """Base class for every error raised by this package."""


class DegenerateChart(ThinLayerError):
    """The tangent vectors are (numerically) parallel at the requested point."""


class OutOfDomain(ThinLayerError):
    """A chart point lies outside the declared coordinate domain."""


class NonPositiveF(ThinLayerError):
    """The offset q3 reaches the focal set, so f = 1 + 2 M q3 + K q3^2 <= 0."""


class InvalidShape(ThinLayerError):
    """Shape parameters describe an invalid or self-intersecting surface."""


class GaugeViolation(ThinLayerError):
    """The vector potential is not divergence free on the surface."""


class ShapeMismatch(ThinLayerError):
    """Array shapes do not match the grid."""


class ConvergenceFailure(ThinLayerError):
    """The iterative eigensolver hit its iteration cap."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
