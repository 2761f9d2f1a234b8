"""Differential geometry of parametrized surfaces and their thin-layer offsets.

A surface is described by a :class:`SurfaceChart`, an embedding
``r(q1, q2)`` together with (optionally) analytic first and second
derivatives.  Charts without analytic derivatives fall back to 4th-order
central differences.  Every function here broadcasts over array-valued
chart coordinates, so a whole grid can be evaluated in one call.

Conventions
-----------
* ``J[..., a, :]`` is the tangent vector ``d r / d q_a``.
* ``H[..., a, b, :]`` is ``d^2 r / d q_a d q_b``.
* The Weingarten matrix ``alpha`` is built element by element from the
  first and second fundamental forms and satisfies
  ``d n / d q_a = alpha[a, c] * d r / d q_c``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from thinlayer.errors import DegenerateChart, InvalidShape, NonPositiveF, OutOfDomain

__all__ = [
    "Coordinate",
    "ChartPoint",
    "SurfaceChart",
    "FundamentalForms",
    "CurvatureData",
    "OffsetMetric",
    "builtin_chart",
    "check_chart",
    "chart_partial",
    "curvature",
    "f_factor",
    "fundamental_forms",
    "offset_metric",
    "offset_inverse_derivative",
    "unit_normal",
]

RELATIVE_STEP = 1e-4
DEGENERACY_TOL = 1e-12

# 4th-order central difference weights on offsets -2..2
_FIRST = (1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0)
_SECOND = (-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0)
_OFFSETS = (-2, -1, 0, 1, 2)


@dataclass(frozen=True)
class Coordinate:
    """One chart coordinate: its range and whether it wraps around.

    ``embedded_period`` is False for coordinates that are periodic only by
    identification (a flat box, the axial direction of a cylinder); for
    those the embedding itself is not periodic.
    """

    lower: float
    upper: float
    periodic: bool = False
    embedded_period: bool = True

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def reduce(self, q):
        q = np.asarray(q, dtype=float)
        if self.periodic:
            return self.lower + np.mod(q - self.lower, self.length)
        slack = 1e-12 * max(1.0, abs(self.lower), abs(self.upper))
        if np.any(q < self.lower - slack) or np.any(q > self.upper + slack):
            raise OutOfDomain(
                f"coordinate outside [{self.lower}, {self.upper}]: "
                f"min={np.min(q)!r}, max={np.max(q)!r}"
            )
        return q


@dataclass(frozen=True)
class ChartPoint:
    """Chart coordinates ``(q1, q2)``; either scalars or equal-shape arrays."""

    q1: float | np.ndarray
    q2: float | np.ndarray


@dataclass(frozen=True)
class SurfaceChart:
    """A parametrized surface ``r(q1, q2)``.

    ``jacobian`` and ``hessian`` are optional analytic derivatives with the
    shapes ``(..., 2, 3)`` and ``(..., 2, 2, 3)``.  When either is missing
    the chart differentiates ``embedding`` numerically.  ``orientation``
    multiplies the normal ``r_1 x r_2 / |r_1 x r_2|``.
    """

    embedding: Callable[[np.ndarray, np.ndarray], np.ndarray]
    coords: tuple[Coordinate, Coordinate]
    jacobian: Callable | None = None
    hessian: Callable | None = None
    orientation: int = 1
    scale: float = 1.0
    kind: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    mean_gradient: Callable | None = None
    relative_step: float = RELATIVE_STEP

    def __post_init__(self):
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def derivative_source(self) -> str:
        if self.jacobian is not None and self.hessian is not None:
            return "analytic"
        return "numeric"

    @property
    def steps(self) -> tuple[float, float]:
        """Finite-difference step per coordinate."""
        return tuple(
            self.relative_step * (c.length if c.periodic else self.scale)
            for c in self.coords
        )

    def numeric(self, relative_step: float | None = None) -> "SurfaceChart":
        """Copy of this chart that differentiates the embedding numerically."""
        return dataclasses.replace(
            self,
            jacobian=None,
            hessian=None,
            mean_gradient=None,
            relative_step=relative_step or self.relative_step,
        )

    def reduce(self, p: ChartPoint) -> tuple[np.ndarray, np.ndarray]:
        return self.coords[0].reduce(p.q1), self.coords[1].reduce(p.q2)

    def derivatives(self, q1, q2):
        """Return ``(r, J, H)`` at already-reduced coordinates."""
        r = np.asarray(self.embedding(q1, q2), dtype=float)
        if self.derivative_source == "analytic":
            return r, np.asarray(self.jacobian(q1, q2)), np.asarray(self.hessian(q1, q2))
        h1, h2 = self.steps
        e = self.embedding
        J = np.stack(
            [chart_partial(e, q1, q2, 0, h1), chart_partial(e, q1, q2, 1, h2)], axis=-2
        )
        r11 = _second_partial(e, q1, q2, 0, h1)
        r22 = _second_partial(e, q1, q2, 1, h2)
        r12 = chart_partial(lambda a, b: chart_partial(e, a, b, 0, h1), q1, q2, 1, h2)
        H = np.stack(
            [np.stack([r11, r12], axis=-2), np.stack([r12, r22], axis=-2)], axis=-3
        )
        return r, J, H


def _shift(q1, q2, axis, d):
    return (q1 + d, q2) if axis == 0 else (q1, q2 + d)


def chart_partial(fun, q1, q2, axis: int, h: float):
    """4th-order central difference of ``fun(q1, q2)`` along one coordinate."""
    acc = 0.0
    for k, c in zip(_OFFSETS, _FIRST):
        if c:
            acc = acc + c * np.asarray(fun(*_shift(q1, q2, axis, k * h)))
    return acc / h


def _second_partial(fun, q1, q2, axis, h):
    acc = 0.0
    for k, c in zip(_OFFSETS, _SECOND):
        acc = acc + c * np.asarray(fun(*_shift(q1, q2, axis, k * h)))
    return acc / (h * h)


@dataclass(frozen=True)
class FundamentalForms:
    """First and second fundamental forms at one or many chart points.

    Besides ``g``, ``h`` and ``sqrt_g`` the tangents ``J``, the unit
    ``normal`` and the embedded ``position`` are kept because the offset
    metric needs them.
    """

    g: np.ndarray
    h: np.ndarray
    sqrt_g: np.ndarray
    normal: np.ndarray
    J: np.ndarray
    position: np.ndarray
    q1: np.ndarray
    q2: np.ndarray

    @property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)


@dataclass(frozen=True)
class CurvatureData:
    alpha: np.ndarray
    M: np.ndarray
    K: np.ndarray

    def f(self, q3):
        return 1.0 + 2.0 * self.M * q3 + self.K * q3 * q3


@dataclass(frozen=True)
class OffsetMetric:
    """Metric of the surface displaced by ``q3`` along the normal.

    ``gprime_inv`` is the coefficient of ``q3`` in the expansion of the
    inverse offset metric around the surface.
    """

    G: np.ndarray
    Ginv: np.ndarray
    gprime_inv: np.ndarray
    f: np.ndarray
    q3: float

    def block(self) -> np.ndarray:
        """The full 3x3 metric ``diag(G_ab, 1)`` of the layer coordinates."""
        shape = self.G.shape[:-2]
        out = np.zeros(shape + (3, 3))
        out[..., :2, :2] = self.G
        out[..., 2, 2] = 1.0
        return out


def _cross_norm(J, scale):
    cross = np.cross(J[..., 0, :], J[..., 1, :])
    norm = np.linalg.norm(cross, axis=-1)
    if np.any(norm < DEGENERACY_TOL * scale * scale):
        raise DegenerateChart(f"|r_1 x r_2| = {np.min(norm):.3e} below tolerance")
    return cross, norm


def _normal_at(chart, q1, q2):
    _, J, _ = chart.derivatives(q1, q2)
    cross, norm = _cross_norm(J, chart.scale)
    return chart.orientation * cross / norm[..., None]


def unit_normal(chart: SurfaceChart, p: ChartPoint) -> np.ndarray:
    """Oriented unit normal ``orientation * r_1 x r_2 / |r_1 x r_2|``."""
    return _normal_at(chart, *chart.reduce(p))


def fundamental_forms(chart: SurfaceChart, p: ChartPoint) -> FundamentalForms:
    q1, q2 = chart.reduce(p)
    r, J, H = chart.derivatives(q1, q2)
    cross, norm = _cross_norm(J, chart.scale)
    n = chart.orientation * cross / norm[..., None]
    g = np.einsum("...ax,...bx->...ab", J, J)
    h = np.einsum("...abx,...x->...ab", H, n)
    sqrt_g = np.sqrt(np.linalg.det(g))
    return FundamentalForms(g=g, h=h, sqrt_g=sqrt_g, normal=n, J=J, position=r, q1=q1, q2=q2)


def curvature(forms: FundamentalForms) -> CurvatureData:
    """Weingarten matrix, mean curvature and Gaussian curvature."""
    g, h = forms.g, forms.h
    g11, g12, g21, g22 = g[..., 0, 0], g[..., 0, 1], g[..., 1, 0], g[..., 1, 1]
    h11, h12, h21, h22 = h[..., 0, 0], h[..., 0, 1], h[..., 1, 0], h[..., 1, 1]
    det = g11 * g22 - g12 * g21
    a11 = (g12 * h21 - g22 * h11) / det
    a12 = (g21 * h11 - g11 * h21) / det
    a21 = (g12 * h22 - g22 * h12) / det
    a22 = (g12 * h21 - g11 * h22) / det
    alpha = np.stack([np.stack([a11, a12], axis=-1), np.stack([a21, a22], axis=-1)], axis=-2)
    M = 0.5 * (a11 + a22)
    K = a11 * a22 - a12 * a21
    return CurvatureData(alpha=alpha, M=M, K=K)


def f_factor(curv: CurvatureData, q3: float):
    """Volume ratio ``1 + 2 M q3 + K q3^2``; raises past the focal set."""
    f = curv.f(q3)
    if np.any(f <= 0):
        raise NonPositiveF(f"f = {np.min(f):.6g} <= 0 at q3 = {q3!r}")
    return f


def _normal_derivatives(chart, forms, curv):
    if chart.derivative_source == "analytic":
        # Weingarten equations
        return np.einsum("...ac,...cx->...ax", curv.alpha, forms.J)
    h1, h2 = chart.steps

    def normal(a, b):
        return _normal_at(chart, a, b)

    return np.stack(
        [
            chart_partial(normal, forms.q1, forms.q2, 0, h1),
            chart_partial(normal, forms.q1, forms.q2, 1, h2),
        ],
        axis=-2,
    )


def gprime_inverse(forms: FundamentalForms, curv: CurvatureData) -> np.ndarray:
    """First-order coefficient of the inverse offset metric in q3.

    Equals ``-2 alpha^T g^{-1}``; written in symmetrized form so the result
    is symmetric to rounding.
    """
    ginv = forms.ginv
    at_ginv = np.einsum("...ca,...cb->...ab", curv.alpha, ginv)
    return -(at_ginv + np.swapaxes(at_ginv, -1, -2))


def offset_metric(chart: SurfaceChart, p: ChartPoint, q3: float) -> OffsetMetric:
    forms = fundamental_forms(chart, p)
    curv = curvature(forms)
    f = f_factor(curv, q3)
    dn = _normal_derivatives(chart, forms, curv)
    T = forms.J + q3 * dn
    G = np.einsum("...ax,...bx->...ab", T, T)
    return OffsetMetric(
        G=G, Ginv=np.linalg.inv(G), gprime_inv=gprime_inverse(forms, curv), f=f, q3=q3
    )


def offset_inverse_derivative(chart: SurfaceChart, p: ChartPoint, dq: float | None = None):
    """Centered difference ``d G^{ab} / d q3`` at ``q3 = 0``.

    The offset surface is rebuilt directly from ``R = r + q3 n`` with
    numerically differentiated tangents, so this is independent of the
    Weingarten-based path in :func:`offset_metric`.
    """
    dq = dq if dq is not None else 1e-4 * chart.scale
    q1, q2 = chart.reduce(p)
    h1, h2 = chart.steps

    def inverse_at(t):
        def R(a, b):
            return np.asarray(chart.embedding(a, b)) + t * _normal_at(chart, a, b)

        T = np.stack([chart_partial(R, q1, q2, 0, h1), chart_partial(R, q1, q2, 1, h2)], axis=-2)
        return np.linalg.inv(np.einsum("...ax,...bx->...ab", T, T))

    return (inverse_at(dq) - inverse_at(-dq)) / (2.0 * dq)


def check_chart(chart: SurfaceChart, samples: int = 64, seed: int = 0) -> None:
    """Verify regularity and embedding periodicity at random points."""
    rng = np.random.default_rng(seed)
    qs = []
    for c in chart.coords:
        lo, hi = c.lower, c.upper
        if not math.isfinite(lo) or not math.isfinite(hi):
            lo, hi = -chart.scale, chart.scale
        qs.append(rng.uniform(lo, hi, samples))
    unit_normal(chart, ChartPoint(*qs))
    r0 = np.asarray(chart.embedding(*qs))
    size = np.max(np.abs(r0)) or 1.0
    for axis, c in enumerate(chart.coords):
        if not (c.periodic and c.embedded_period):
            continue
        shifted = list(qs)
        shifted[axis] = shifted[axis] + c.length
        r1 = np.asarray(chart.embedding(*shifted))
        if np.max(np.abs(r1 - r0)) > 1e-12 * size:
            raise InvalidShape(f"embedding not periodic along coordinate {axis + 1}")


# ---------------------------------------------------------------------------
# built-in surfaces


def _torus(a: float, R0: float) -> SurfaceChart:
    if not (a > 0 and R0 > 0):
        raise InvalidShape("torus radii must be positive")
    if a >= R0:
        raise InvalidShape(f"self-intersecting torus: a={a} >= R0={R0}")

    def embed(th, ph):
        W = R0 + a * np.cos(th)
        return np.stack(np.broadcast_arrays(W * np.cos(ph), W * np.sin(ph), a * np.sin(th)), -1)

    def jac(th, ph):
        th, ph = np.broadcast_arrays(th, ph)
        W = R0 + a * np.cos(th)
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        r_t = np.stack([-a * st * cp, -a * st * sp, a * ct], -1)
        r_p = np.stack([-W * sp, W * cp, np.zeros_like(W)], -1)
        return np.stack([r_t, r_p], -2)

    def hess(th, ph):
        th, ph = np.broadcast_arrays(th, ph)
        W = R0 + a * np.cos(th)
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        zero = np.zeros_like(W)
        r_tt = np.stack([-a * ct * cp, -a * ct * sp, -a * st], -1)
        r_tp = np.stack([a * st * sp, -a * st * cp, zero], -1)
        r_pp = np.stack([-W * cp, -W * sp, zero], -1)
        return np.stack([np.stack([r_tt, r_tp], -2), np.stack([r_tp, r_pp], -2)], -3)

    def mean_gradient(th, ph):
        th, ph = np.broadcast_arrays(th, ph)
        W = R0 + a * np.cos(th)
        return np.stack([-R0 * np.sin(th) / (2.0 * W * W), np.zeros_like(W)], -1)

    return SurfaceChart(
        embedding=embed,
        coords=(Coordinate(-math.pi, math.pi, True), Coordinate(0.0, 2 * math.pi, True)),
        jacobian=jac,
        hessian=hess,
        # r_theta x r_phi points inward; the offset metric (a+q3)^2 needs outward
        orientation=-1,
        scale=a,
        kind="torus",
        params={"a": a, "R0": R0},
        mean_gradient=mean_gradient,
    )


def _sphere(R: float) -> SurfaceChart:
    if not R > 0:
        raise InvalidShape("sphere radius must be positive")

    def embed(th, ph):
        return R * np.stack(
            np.broadcast_arrays(np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)), -1
        )

    def jac(th, ph):
        th, ph = np.broadcast_arrays(th, ph)
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        r_t = R * np.stack([ct * cp, ct * sp, -st], -1)
        r_p = R * np.stack([-st * sp, st * cp, np.zeros_like(st)], -1)
        return np.stack([r_t, r_p], -2)

    def hess(th, ph):
        th, ph = np.broadcast_arrays(th, ph)
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        r_tt = -R * np.stack([st * cp, st * sp, ct], -1)
        r_tp = R * np.stack([-ct * sp, ct * cp, np.zeros_like(st)], -1)
        r_pp = -R * np.stack([st * cp, st * sp, np.zeros_like(st)], -1)
        return np.stack([np.stack([r_tt, r_tp], -2), np.stack([r_tp, r_pp], -2)], -3)

    def mean_gradient(th, ph):
        th, _ = np.broadcast_arrays(th, ph)
        return np.zeros(th.shape + (2,))

    return SurfaceChart(
        embedding=embed,
        coords=(Coordinate(0.0, math.pi, False), Coordinate(0.0, 2 * math.pi, True)),
        jacobian=jac,
        hessian=hess,
        orientation=1,
        scale=R,
        kind="sphere",
        params={"R": R},
        mean_gradient=mean_gradient,
    )


def _cylinder(a: float, L: float | None = None) -> SurfaceChart:
    if not a > 0:
        raise InvalidShape("cylinder radius must be positive")
    L = 2 * math.pi * a if L is None else L
    if not L > 0:
        raise InvalidShape("cylinder length must be positive")

    def embed(th, z):
        return np.stack(np.broadcast_arrays(a * np.cos(th), a * np.sin(th), z), -1)

    def jac(th, z):
        th, z = np.broadcast_arrays(th, z)
        zero, one = np.zeros_like(th), np.ones_like(th)
        return np.stack(
            [np.stack([-a * np.sin(th), a * np.cos(th), zero], -1), np.stack([zero, zero, one], -1)],
            -2,
        )

    def hess(th, z):
        th, z = np.broadcast_arrays(th, z)
        zero = np.zeros(th.shape + (3,))
        r_tt = np.stack([-a * np.cos(th), -a * np.sin(th), np.zeros_like(th)], -1)
        return np.stack([np.stack([r_tt, zero], -2), np.stack([zero, zero], -2)], -3)

    def mean_gradient(th, z):
        th, _ = np.broadcast_arrays(th, z)
        return np.zeros(th.shape + (2,))

    return SurfaceChart(
        embedding=embed,
        coords=(
            Coordinate(-math.pi, math.pi, True),
            Coordinate(0.0, L, True, embedded_period=False),
        ),
        jacobian=jac,
        hessian=hess,
        orientation=1,
        scale=a,
        kind="cylinder",
        params={"a": a, "L": L},
        mean_gradient=mean_gradient,
    )


def _plane(L: float | None = None) -> SurfaceChart:
    if L is not None and not L > 0:
        raise InvalidShape("box length must be positive")

    def embed(x, y):
        x, y = np.broadcast_arrays(x, y)
        return np.stack([x, y, np.zeros_like(x)], -1)

    def jac(x, y):
        x, y = np.broadcast_arrays(x, y)
        one, zero = np.ones_like(x), np.zeros_like(x)
        return np.stack([np.stack([one, zero, zero], -1), np.stack([zero, one, zero], -1)], -2)

    def hess(x, y):
        x, y = np.broadcast_arrays(x, y)
        return np.zeros(x.shape + (2, 2, 3))

    def mean_gradient(x, y):
        x, _ = np.broadcast_arrays(x, y)
        return np.zeros(x.shape + (2,))

    if L is None:
        coords = (Coordinate(-math.inf, math.inf), Coordinate(-math.inf, math.inf))
    else:
        coords = (
            Coordinate(0.0, L, True, embedded_period=False),
            Coordinate(0.0, L, True, embedded_period=False),
        )
    return SurfaceChart(
        embedding=embed,
        coords=coords,
        jacobian=jac,
        hessian=hess,
        orientation=1,
        scale=1.0 if L is None else L,
        kind="plane",
        params={} if L is None else {"L": L},
        mean_gradient=mean_gradient,
    )


_BUILDERS = {"plane": _plane, "cylinder": _cylinder, "sphere": _sphere, "torus": _torus}


def builtin_chart(kind: str, **params) -> SurfaceChart:
    """Analytic chart for ``plane(L=None)``, ``cylinder(a, L=None)``,
    ``sphere(R)`` or ``torus(a, R0)``.

    Orientation is outward for the curved surfaces.  ``L`` turns the plane
    into a periodic L x L box and sets the identified length of a cylinder.
    """
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise InvalidShape(f"unknown surface kind {kind!r}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise InvalidShape(f"bad parameters for {kind}: {exc}") from None
