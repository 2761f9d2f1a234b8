"""Vector potentials on surface charts and the surface Coulomb-gauge check.

Only fields with vanishing normal component are representable; a
:class:`FieldConfig` carries the two covariant surface components, an
optional scalar potential and the uniform-field amplitudes B0, B1 it was
built from.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from thinlayer.errors import InvalidShape
from thinlayer.geometry import ChartPoint, SurfaceChart, chart_partial, fundamental_forms

__all__ = [
    "FieldConfig",
    "GaugeReport",
    "zero_field",
    "torus_vector_potential",
    "nongauge_test_field",
    "surface_gauge_divergence",
    "gauge_check",
]


def _zeros(q1, q2):
    q1, _ = np.broadcast_arrays(np.asarray(q1, float), np.asarray(q2, float))
    return np.zeros_like(q1)


@dataclass(frozen=True)
class FieldConfig:
    """Covariant components ``A_1``, ``A_2`` (``A_3`` is identically zero).

    ``jacobian``, when given, returns ``d_a A_b`` with shape ``(..., 2, 2)``
    (derivative index first) and enables the analytic gauge check.
    """

    A1: Callable = _zeros
    A2: Callable = _zeros
    A0: Callable = _zeros
    B0: float = 0.0
    B1: float = 0.0
    jacobian: Callable | None = None

    A3 = 0.0

    def covariant(self, q1, q2) -> np.ndarray:
        a1, a2 = np.broadcast_arrays(
            np.asarray(self.A1(q1, q2), float), np.asarray(self.A2(q1, q2), float)
        )
        return np.stack([a1, a2], -1)

    def scalar(self, q1, q2) -> np.ndarray:
        return np.asarray(self.A0(q1, q2), float)

    def combine(self, alpha: float, other: "FieldConfig", beta: float) -> "FieldConfig":
        """The field ``alpha * self + beta * other``."""
        jac = None
        if self.jacobian is not None and other.jacobian is not None:
            jac = lambda a, b: alpha * np.asarray(self.jacobian(a, b)) + beta * np.asarray(
                other.jacobian(a, b)
            )
        return FieldConfig(
            A1=lambda a, b: alpha * np.asarray(self.A1(a, b)) + beta * np.asarray(other.A1(a, b)),
            A2=lambda a, b: alpha * np.asarray(self.A2(a, b)) + beta * np.asarray(other.A2(a, b)),
            A0=lambda a, b: alpha * np.asarray(self.A0(a, b)) + beta * np.asarray(other.A0(a, b)),
            B0=alpha * self.B0 + beta * other.B0,
            B1=alpha * self.B1 + beta * other.B1,
            jacobian=jac,
        )

    def scaled(self, factor: float) -> "FieldConfig":
        return self.combine(factor, zero_field(), 0.0)


def zero_field() -> FieldConfig:
    return FieldConfig(jacobian=lambda a, b: np.zeros(np.shape(_zeros(a, b)) + (2, 2)))


def torus_vector_potential(a: float, R0: float, B0: float, B1: float) -> FieldConfig:
    """Divergence-free torus gauge for a uniform field split into B0 and B1."""
    if not (0 < a < R0):
        raise InvalidShape(f"need 0 < a < R0, got a={a}, R0={R0}")

    def A_theta(th, ph):
        th, ph = np.broadcast_arrays(np.asarray(th, float), np.asarray(ph, float))
        return B1 * a * a * np.sin(ph)

    def A_phi(th, ph):
        th, ph = np.broadcast_arrays(np.asarray(th, float), np.asarray(ph, float))
        W = R0 + a * np.cos(th)
        return B0 * W * W - B1 * a * W * np.sin(th) * np.cos(ph)

    def jac(th, ph):
        th, ph = np.broadcast_arrays(np.asarray(th, float), np.asarray(ph, float))
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        W = R0 + a * ct
        dW = -a * st
        d_t = np.stack([np.zeros_like(W), 2 * B0 * W * dW - B1 * a * (dW * st + W * ct) * cp], -1)
        d_p = np.stack([B1 * a * a * cp, B1 * a * W * st * sp], -1)
        return np.stack([d_t, d_p], -2)

    return FieldConfig(A1=A_theta, A2=A_phi, B0=B0, B1=B1, jacobian=jac)


def nongauge_test_field(a: float) -> FieldConfig:
    """``A_theta = a^2 cos(theta)``, ``A_phi = 0``: not divergence free on a torus."""

    def A_theta(th, ph):
        th, _ = np.broadcast_arrays(np.asarray(th, float), np.asarray(ph, float))
        return a * a * np.cos(th)

    def jac(th, ph):
        th, _ = np.broadcast_arrays(np.asarray(th, float), np.asarray(ph, float))
        z = np.zeros_like(th)
        return np.stack([np.stack([-a * a * np.sin(th), z], -1), np.stack([z, z], -1)], -2)

    return FieldConfig(A1=A_theta, jacobian=jac)


def _analytic_divergence(chart, field, q1, q2):
    _, J, H = chart.derivatives(q1, q2)
    g = np.einsum("...ax,...bx->...ab", J, J)
    ginv = np.linalg.inv(g)
    # d_a g_bc = r_ab . r_c + r_b . r_ac
    dg = np.einsum("...abx,...cx->...abc", H, J)
    dg = dg + np.swapaxes(dg, -1, -2)
    A = field.covariant(q1, q2)
    dA = np.asarray(field.jacobian(q1, q2))
    # d_a g^{bc} = -g^{bd} (d_a g_de) g^{ec}
    dginv = -np.einsum("...bd,...ade,...ec->...abc", ginv, dg, ginv)
    dlog_sqrtg = 0.5 * np.einsum("...bc,...acb->...a", ginv, dg)
    u = np.einsum("...ab,...b->...a", ginv, A)
    div_u = np.einsum("...aac,...c->...", dginv, A) + np.einsum("...ab,...ab->...", ginv, dA)
    return div_u + np.einsum("...a,...a->...", u, dlog_sqrtg)


def _numeric_divergence(chart, field, q1, q2):
    h1, h2 = chart.steps

    def flux(axis):
        def F(a, b):
            fm = fundamental_forms(chart, ChartPoint(a, b))
            u = np.einsum("...ab,...b->...a", fm.ginv, field.covariant(a, b))
            return fm.sqrt_g * u[..., axis]

        return F

    sg = fundamental_forms(chart, ChartPoint(q1, q2)).sqrt_g
    return (chart_partial(flux(0), q1, q2, 0, h1) + chart_partial(flux(1), q1, q2, 1, h2)) / sg


def surface_gauge_divergence(
    chart: SurfaceChart, field: FieldConfig, p: ChartPoint, method: str = "auto"
):
    """``(1/sqrt g) d_a(sqrt g g^{ab} A_b)``; zero in the surface Coulomb gauge.

    ``method`` is ``"analytic"``, ``"numeric"`` or ``"auto"`` (analytic
    when both the chart and the field supply derivatives).
    """
    q1, q2 = chart.reduce(p)
    can_analytic = chart.derivative_source == "analytic" and field.jacobian is not None
    if method == "auto":
        method = "analytic" if can_analytic else "numeric"
    if method == "analytic":
        if not can_analytic:
            raise ValueError("analytic divergence needs analytic chart and field derivatives")
        return _analytic_divergence(chart, field, q1, q2)
    if method == "numeric":
        return _numeric_divergence(chart, field, q1, q2)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class GaugeReport:
    max_div: float
    rms_div: float
    method: str

    def as_dict(self) -> dict:
        return {"max_div": self.max_div, "rms_div": self.rms_div, "method": self.method}


def gauge_check(chart: SurfaceChart, field: FieldConfig, grid, method: str = "auto") -> GaugeReport:
    """Max-abs and RMS surface divergence over every grid node."""
    q1, q2 = grid.mesh(chart)
    can_analytic = chart.derivative_source == "analytic" and field.jacobian is not None
    used = ("analytic" if can_analytic else "numeric") if method == "auto" else method
    div = np.abs(surface_gauge_divergence(chart, field, ChartPoint(q1, q2), used))
    return GaugeReport(float(div.max()), float(np.sqrt(np.mean(div * div))), used)
