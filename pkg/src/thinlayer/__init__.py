"""Thin-layer quantization of a charged particle on curved surfaces."""

__version__ = "0.1.0"

from thinlayer.errors import (  # noqa: E402
    ConvergenceFailure,
    DegenerateChart,
    GaugeViolation,
    InvalidShape,
    NonPositiveF,
    OutOfDomain,
    ShapeMismatch,
    ThinLayerError,
)
from thinlayer.geometry import ChartPoint, SurfaceChart, builtin_chart  # noqa: E402
from thinlayer.potentials import PhysicalScale, ThicknessParams  # noqa: E402
from thinlayer.grid import GridSpec  # noqa: E402

__all__ = [
    "ChartPoint",
    "ConvergenceFailure",
    "DegenerateChart",
    "GaugeViolation",
    "GridSpec",
    "InvalidShape",
    "NonPositiveF",
    "OutOfDomain",
    "PhysicalScale",
    "ShapeMismatch",
    "SurfaceChart",
    "ThicknessParams",
    "ThinLayerError",
    "builtin_chart",
]
