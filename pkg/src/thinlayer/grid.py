"""Uniform periodic grids over a chart."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from thinlayer.geometry import SurfaceChart

MIN_POINTS = 8


@dataclass(frozen=True)
class GridSpec:
    n1: int
    n2: int

    def __post_init__(self):
        if int(self.n1) != self.n1 or int(self.n2) != self.n2:
            raise ValueError("grid sizes must be integers")
        if self.n1 < MIN_POINTS or self.n2 < MIN_POINTS:
            raise ValueError(f"grid needs at least {MIN_POINTS} points per coordinate")

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    def spacing(self, chart: SurfaceChart) -> tuple[float, float]:
        _require_periodic(chart)
        c1, c2 = chart.coords
        return c1.length / self.n1, c2.length / self.n2

    def axes(self, chart: SurfaceChart) -> tuple[np.ndarray, np.ndarray]:
        h1, h2 = self.spacing(chart)
        c1, c2 = chart.coords
        return c1.lower + h1 * np.arange(self.n1), c2.lower + h2 * np.arange(self.n2)

    def mesh(self, chart: SurfaceChart) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates, flattened with ``q1`` as the slow index."""
        x1, x2 = self.axes(chart)
        Q1, Q2 = np.meshgrid(x1, x2, indexing="ij")
        return Q1.ravel(), Q2.ravel()


def _require_periodic(chart):
    if not all(c.periodic for c in chart.coords):
        raise ValueError(f"{chart.kind} chart is not periodic in both coordinates")
