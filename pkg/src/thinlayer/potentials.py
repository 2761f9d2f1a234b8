"""Geometric potential, its thickness correction and the kinetic correction H'.

Units are whatever :class:`PhysicalScale` says; the defaults are the
internal units hbar = 1, 2m = 1, e = 1, in which ``kinetic_coeff`` is 1
and the torus energy unit is ``V0 = 1 / (4 a^2)``.

The kinetic correction is returned as an :class:`OperatorCoefficients`
triple so that ``H' psi = c2[a, b] d_a d_b psi + c1[a] d_a psi + c0 psi``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from thinlayer.em import FieldConfig
from thinlayer.errors import InvalidShape
from thinlayer.geometry import (
    ChartPoint,
    CurvatureData,
    FundamentalForms,
    OffsetMetric,
    SurfaceChart,
    chart_partial,
    curvature,
    f_factor,
    fundamental_forms,
    gprime_inverse,
)

__all__ = [
    "PhysicalScale",
    "ThicknessParams",
    "OperatorCoefficients",
    "geometric_potential",
    "modified_geometric_potential",
    "torus_modified_potential",
    "w_tensor",
    "hprime_coefficients",
    "torus_hprime_coefficients",
    "hprime_consistency",
    "energy_unit",
]


@dataclass(frozen=True)
class PhysicalScale:
    """``kinetic_coeff`` is hbar^2 / 2m and ``charge_coeff`` is e / hbar."""

    kinetic_coeff: float = 1.0
    charge_coeff: float = 1.0

    def __post_init__(self):
        if not (self.kinetic_coeff > 0 and self.charge_coeff > 0):
            raise ValueError("kinetic_coeff and charge_coeff must be positive")


@dataclass(frozen=True)
class ThicknessParams:
    """Fixed normal offset; a configuration constant, never a grid variable."""

    q3: float = 0.0


@dataclass(frozen=True)
class OperatorCoefficients:
    c2: np.ndarray  # (..., 2, 2) real, symmetric
    c1: np.ndarray  # (..., 2) complex
    c0: np.ndarray  # (...) complex

    @classmethod
    def zeros(cls, shape=()):
        return cls(
            c2=np.zeros(shape + (2, 2)),
            c1=np.zeros(shape + (2,), dtype=complex),
            c0=np.zeros(shape, dtype=complex),
        )


def energy_unit(length: float, scale: PhysicalScale = PhysicalScale()) -> float:
    """``V0 = hbar^2 / (8 m length^2)``."""
    return scale.kinetic_coeff / (4.0 * length * length)


def geometric_potential(curv: CurvatureData, scale: PhysicalScale = PhysicalScale()):
    return -scale.kinetic_coeff * (curv.M * curv.M - curv.K)


def modified_geometric_potential(
    curv: CurvatureData, scale: PhysicalScale, t: ThicknessParams
):
    """``V_g (1 - 4 M q3)``; exactly ``V_g`` when ``q3 == 0``."""
    f_factor(curv, t.q3)
    return geometric_potential(curv, scale) * (1.0 - 4.0 * curv.M * t.q3)


def _check_torus(a, R0):
    if not (0 < a < R0):
        raise InvalidShape(f"need 0 < a < R0, got a={a}, R0={R0}")


def torus_modified_potential(a, R0, theta, q3, scale: PhysicalScale = PhysicalScale()):
    """Closed-form thickness-corrected potential on the torus."""
    _check_torus(a, R0)
    k = scale.kinetic_coeff
    W = R0 + a * np.cos(theta)
    # hbar^2/8m = k/4, hbar^2/4m = k/2
    return -k * R0**2 / (4.0 * a**2 * W**2) + k * R0**2 * (W + a * np.cos(theta)) / (
        2.0 * a**3 * W**3
    ) * q3


def w_tensor(forms: FundamentalForms, curv: CurvatureData, offset: OffsetMetric | None = None):
    """``g'^{ab} - M g^{ab}``."""
    gp = offset.gprime_inv if offset is not None else gprime_inverse(forms, curv)
    return gp - curv.M[..., None, None] * forms.ginv


# Outer derivatives of curvature-derived quantities on numerically
# differentiated charts use a wider step: the inner differences already carry
# roundoff, and differencing them again at the inner step amplifies it.
NUMERIC_OUTER_STEP_FACTOR = 20.0


def _outer_steps(chart: SurfaceChart) -> tuple[float, float]:
    h1, h2 = chart.steps
    if chart.derivative_source == "numeric":
        return h1 * NUMERIC_OUTER_STEP_FACTOR, h2 * NUMERIC_OUTER_STEP_FACTOR
    return h1, h2


def _surface_terms(chart: SurfaceChart, q1, q2):
    forms = fundamental_forms(chart, ChartPoint(q1, q2))
    curv = curvature(forms)
    return forms, curv


def _mean_gradient(chart, q1, q2):
    if chart.mean_gradient is not None:
        return np.asarray(chart.mean_gradient(q1, q2))
    h1, h2 = _outer_steps(chart)

    def M(a, b):
        return _surface_terms(chart, a, b)[1].M

    return np.stack([chart_partial(M, q1, q2, 0, h1), chart_partial(M, q1, q2, 1, h2)], -1)


def _divergence(chart, fun, q1, q2, rank):
    """``d_a F^{a...}``: ``F`` has ``rank`` trailing index axes, ``a`` first."""
    h1, h2 = _outer_steps(chart)

    def take(index):
        if rank == 1:
            return lambda a, b: np.asarray(fun(a, b))[..., index]
        return lambda a, b: np.asarray(fun(a, b))[..., index, :]

    return chart_partial(take(0), q1, q2, 0, h1) + chart_partial(take(1), q1, q2, 1, h2)


def hprime_coefficients(
    chart: SurfaceChart,
    p: ChartPoint,
    field: FieldConfig | None,
    t: ThicknessParams,
    scale: PhysicalScale = PhysicalScale(),
) -> OperatorCoefficients:
    """Expand the first-order thickness correction of the kinetic term.

    The divergence terms are expanded with the product rule::

        c2^{ab} = -w^{ab}
        c1^{b}  = -g^{ab} d_a M - (1/sqrt g) d_a(sqrt g w^{ab}) - 2i(e/hbar) A_a w^{ab}
        c0      = (1/sqrt g) d_a(sqrt g g^{ab} d_b M)
                  + 2i(e/hbar) A_a g^{ab} d_b M + (e/hbar)^2 w^{ab} A_a A_b

    all multiplied by ``kinetic_coeff * q3``.  Derivatives of ``M``,
    ``sqrt g w`` and ``sqrt g g^{-1} grad M`` over the chart use the chart's
    analytic mean-curvature gradient when present and 4th-order central
    differences otherwise.
    """
    q1, q2 = chart.reduce(p)
    shape = np.broadcast(q1, q2).shape
    if t.q3 == 0:
        return OperatorCoefficients.zeros(shape)
    forms, curv = _surface_terms(chart, q1, q2)
    f_factor(curv, t.q3)
    ginv = forms.ginv
    w = w_tensor(forms, curv)
    gradM = _mean_gradient(chart, q1, q2)

    def sg_w(a, b):
        fm, cv = _surface_terms(chart, a, b)
        return fm.sqrt_g[..., None, None] * w_tensor(fm, cv)

    def sg_ginv_gradM(a, b):
        fm = fundamental_forms(chart, ChartPoint(a, b))
        return fm.sqrt_g[..., None] * np.einsum("...ab,...b->...a", fm.ginv, _mean_gradient(chart, a, b))

    inv_sg = 1.0 / forms.sqrt_g
    div_w = inv_sg[..., None] * _divergence(chart, sg_w, q1, q2, 2)
    lap_M = inv_sg * _divergence(chart, sg_ginv_gradM, q1, q2, 1)
    ginv_gradM = np.einsum("...ab,...b->...a", ginv, gradM)

    c2 = -w
    c1 = (-ginv_gradM - div_w).astype(complex)
    c0 = np.asarray(lap_M, dtype=complex)
    if field is not None:
        eps = scale.charge_coeff
        A = field.covariant(q1, q2)
        wA = np.einsum("...ab,...a->...b", w, A)
        c1 = c1 - 2j * eps * wA
        c0 = c0 + 2j * eps * np.einsum("...a,...a->...", A, ginv_gradM) + eps * eps * np.einsum(
            "...b,...b->...", wA, A
        )
    kq = scale.kinetic_coeff * t.q3
    return OperatorCoefficients(c2=kq * c2, c1=kq * c1, c0=kq * c0)


def torus_hprime_coefficients(
    a, R0, theta, phi, B0, B1, q3, scale: PhysicalScale = PhysicalScale()
) -> OperatorCoefficients:
    """Closed-form torus kinetic correction, term by term."""
    _check_torus(a, R0)
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    eps = scale.charge_coeff
    kq = scale.kinetic_coeff * q3
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    W = R0 + a * ct
    P = 5 * W + a * ct
    Q = W + 5 * a * ct
    Aphi_red = B0 * W - B1 * a * st * cp

    c_tt = P / (2 * a**3 * W)
    c_pp = Q / (2 * a * W**3)
    c_t = (R0 * st / (2 * a**2 * W**2) - 3 * st / (a**2 * W)) + 1j * eps * P / (a * W) * B1 * sp
    c_p = 1j * eps * Q / (a * W**2) * Aphi_red
    c_0 = (
        -R0 * (a + R0 * ct) / (2 * a**2 * W**3)
        - 1j * eps * R0 * st / W**2 * B1 * sp
        - eps**2 * P / (2 * W) * B1**2 * a * sp**2
        - eps**2 * Q / (2 * a * W) * Aphi_red**2
    )
    zero = np.zeros_like(W)
    c2 = np.stack([np.stack([c_tt, zero], -1), np.stack([zero, c_pp], -1)], -2)
    c1 = np.stack([c_t, c_p], -1)
    return OperatorCoefficients(c2=kq * c2, c1=kq * c1, c0=kq * np.asarray(c_0, dtype=complex))


def hprime_consistency(
    a, R0, points, B0=0.0, B1=0.0, q3=0.5, scale: PhysicalScale = PhysicalScale(), chart=None
) -> dict:
    """Compare the general kinetic correction with the torus closed form.

    ``points`` is an ``(n, 2)`` array of ``(theta, phi)``.  Returns, per
    block, the max absolute and max relative discrepancy together with the
    signed values at the worst point.  Discrepancies are reported, never
    raised.  Pass ``chart`` to compare a numerically differentiated torus.
    """
    from thinlayer.em import torus_vector_potential
    from thinlayer.geometry import builtin_chart

    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    chart = chart if chart is not None else builtin_chart("torus", a=a, R0=R0)
    field = torus_vector_potential(a, R0, B0, B1)
    t = ThicknessParams(q3)
    general = hprime_coefficients(chart, ChartPoint(pts[:, 0], pts[:, 1]), field, t, scale)
    closed = torus_hprime_coefficients(a, R0, pts[:, 0], pts[:, 1], B0, B1, q3, scale)

    report = {}
    for name in ("c2", "c1", "c0"):
        g = np.asarray(getattr(general, name)).reshape(len(pts), -1)
        c = np.asarray(getattr(closed, name)).reshape(len(pts), -1)
        diff = np.abs(g - c)
        # relative to the largest entry of the block at the same point
        size = np.abs(c).max(axis=1, keepdims=True)
        rel = np.where(size > 0, diff / np.where(size > 0, size, 1.0), np.where(diff > 0, np.inf, 0.0))
        i, j = np.unravel_index(np.argmax(diff), diff.shape) if diff.size else (0, 0)
        report[name] = {
            "max_abs": float(diff.max(initial=0.0)),
            "max_rel": float(rel.max(initial=0.0)),
            "worst_point": [float(pts[i, 0]), float(pts[i, 1])],
            "general": [float(np.real(g[i, j])), float(np.imag(g[i, j]))],
            "closed_form": [float(np.real(c[i, j])), float(np.imag(c[i, j]))],
        }
    return report
