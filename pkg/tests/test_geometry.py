import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinlayer.errors import DegenerateChart, InvalidShape, NonPositiveF, OutOfDomain
from thinlayer.geometry import (
    ChartPoint,
    builtin_chart,
    chart_partial,
    check_chart,
    curvature,
    f_factor,
    fundamental_forms,
    offset_inverse_derivative,
    offset_metric,
    unit_normal,
)

A, R0 = 10.0, 15.0


@pytest.fixture
def torus():
    return builtin_chart("torus", a=A, R0=R0)


def builtins():
    return [
        builtin_chart("plane", L=3.0),
        builtin_chart("cylinder", a=1.5),
        builtin_chart("sphere", R=2.0),
        builtin_chart("torus", a=A, R0=R0),
    ]


def random_points(chart, n, seed=0):
    rng = np.random.default_rng(seed)
    qs = []
    for c in chart.coords:
        if c.periodic:
            qs.append(rng.uniform(c.lower, c.upper, n))
        else:
            # stay clear of the sphere poles
            qs.append(rng.uniform(c.lower + 0.1, c.upper - 0.1, n))
    return ChartPoint(*qs)


# fundamental forms


def test_plane_forms():
    forms = fundamental_forms(builtin_chart("plane"), ChartPoint(0.3, -2.0))
    np.testing.assert_array_equal(forms.g, np.eye(2))
    np.testing.assert_array_equal(forms.h, np.zeros((2, 2)))


def test_torus_metric(torus):
    th, ph = 0.7, 2.1
    forms = fundamental_forms(torus, ChartPoint(th, ph))
    W = R0 + A * math.cos(th)
    np.testing.assert_allclose(forms.g, np.diag([A * A, W * W]), rtol=1e-14, atol=1e-12)
    assert forms.sqrt_g == pytest.approx(A * W, rel=1e-14)


def test_sphere_metric_against_numeric_oracle():
    sphere = builtin_chart("sphere", R=2.0)
    p = ChartPoint(math.pi / 3, 0.4)
    analytic = fundamental_forms(sphere, p)
    numeric = fundamental_forms(sphere.numeric(), p)
    np.testing.assert_allclose(numeric.g, np.diag([4.0, 3.0]), atol=1e-8)
    np.testing.assert_allclose(analytic.g, numeric.g, atol=1e-8)


@pytest.mark.parametrize("chart", builtins(), ids=lambda c: c.kind)
def test_analytic_forms_match_numeric(chart):
    p = random_points(chart, 100, seed=3)
    a = fundamental_forms(chart, p)
    n = fundamental_forms(chart.numeric(), p)
    assert np.max(np.abs(a.g - n.g)) < 1e-6
    assert np.max(np.abs(a.h - n.h)) < 1e-6


@pytest.mark.parametrize("chart", builtins(), ids=lambda c: c.kind)
def test_forms_invariants(chart):
    forms = fundamental_forms(chart, random_points(chart, 50))
    np.testing.assert_allclose(forms.sqrt_g**2, np.linalg.det(forms.g), rtol=1e-10)
    np.testing.assert_allclose(forms.h, np.swapaxes(forms.h, -1, -2), atol=1e-10)
    assert np.all(np.linalg.eigvalsh(forms.g) > 0)


def test_out_of_domain():
    with pytest.raises(OutOfDomain):
        fundamental_forms(builtin_chart("sphere", R=1.0), ChartPoint(3.5, 0.0))


def test_periodic_reduction(torus):
    a = fundamental_forms(torus, ChartPoint(0.4, 1.0))
    b = fundamental_forms(torus, ChartPoint(0.4 + 4 * math.pi, 1.0 - 2 * math.pi))
    np.testing.assert_allclose(a.g, b.g, rtol=1e-12, atol=1e-12)


# normals


def test_plane_normal():
    np.testing.assert_array_equal(unit_normal(builtin_chart("plane"), ChartPoint(1.0, 2.0)), [0, 0, 1])


def test_torus_normal_is_outward(torus):
    th, ph = 0.9, -1.3
    n = unit_normal(torus, ChartPoint(th, ph))
    expected = [math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), math.sin(th)]
    np.testing.assert_allclose(n, expected, atol=1e-15)


def test_torus_orientation_reproduces_offset_metric(torus):
    # oracle: differentiate R = r + q3 n directly
    th, ph, q3 = 0.9, -1.3, 0.5
    n_fun = lambda a, b: unit_normal(torus, ChartPoint(a, b))
    R = lambda a, b: torus.embedding(a, b) + q3 * n_fun(a, b)
    h1, h2 = torus.steps
    T = np.stack([chart_partial(R, th, ph, 0, h1), chart_partial(R, th, ph, 1, h2)])
    W = R0 + A * math.cos(th)
    np.testing.assert_allclose(
        T @ T.T, np.diag([(A + q3) ** 2, (W + q3 * math.cos(th)) ** 2]), rtol=1e-9, atol=1e-8
    )


def test_sphere_normal_near_pole():
    sphere = builtin_chart("sphere", R=1.0)
    np.testing.assert_allclose(unit_normal(sphere, ChartPoint(1e-6, 0.3)), [0, 0, 1], atol=1e-5)


def test_sphere_pole_is_degenerate():
    with pytest.raises(DegenerateChart):
        unit_normal(builtin_chart("sphere", R=1.0), ChartPoint(0.0, 0.0))


@pytest.mark.parametrize("chart", builtins(), ids=lambda c: c.kind)
def test_normal_unit_and_orthogonal(chart):
    forms = fundamental_forms(chart, random_points(chart, 100, seed=5))
    np.testing.assert_allclose(np.linalg.norm(forms.normal, axis=-1), 1.0, atol=1e-12)
    dots = np.einsum("nax,nx->na", forms.J, forms.normal)
    assert np.max(np.abs(dots)) < 1e-10 * max(1.0, np.max(np.abs(forms.J)))


# curvature


def test_torus_curvature(torus):
    th = np.linspace(-3, 3, 7)
    curv = curvature(fundamental_forms(torus, ChartPoint(th, 0.2)))
    W = R0 + A * np.cos(th)
    np.testing.assert_allclose(curv.M, (W + A * np.cos(th)) / (2 * A * W), rtol=1e-13)
    np.testing.assert_allclose(curv.K, np.cos(th) / (A * W), rtol=1e-12, atol=1e-17)


def test_torus_curvature_at_outer_equator(torus):
    curv = curvature(fundamental_forms(torus, ChartPoint(0.0, 0.0)))
    assert curv.M == pytest.approx(0.07, rel=1e-14)


def test_plane_curvature():
    curv = curvature(fundamental_forms(builtin_chart("plane"), ChartPoint(0.0, 0.0)))
    assert curv.M == 0 and curv.K == 0


def test_cylinder_curvature_numeric_oracle():
    a = 1.5
    cyl = builtin_chart("cylinder", a=a)
    p = ChartPoint(0.4, 0.7)
    numeric = curvature(fundamental_forms(cyl.numeric(), p))
    assert numeric.M == pytest.approx(1 / (2 * a), abs=1e-8)
    assert numeric.K == pytest.approx(0.0, abs=1e-8)
    analytic = curvature(fundamental_forms(cyl, p))
    assert analytic.M == pytest.approx(1 / (2 * a), rel=1e-15)


def test_sphere_is_umbilical():
    curv = curvature(fundamental_forms(builtin_chart("sphere", R=3.0), random_points(builtin_chart("sphere", R=3.0), 50)))
    np.testing.assert_allclose(curv.M**2 - curv.K, 0.0, atol=1e-15)


def test_weingarten_equation(torus):
    # d n / d q_a = alpha[a, c] r_c, checked by differentiating the normal numerically
    p = ChartPoint(1.1, 0.3)
    forms = fundamental_forms(torus, p)
    curv = curvature(forms)
    h1, h2 = torus.steps
    n_fun = lambda a, b: unit_normal(torus, ChartPoint(a, b))
    dn = np.stack([chart_partial(n_fun, 1.1, 0.3, 0, h1), chart_partial(n_fun, 1.1, 0.3, 1, h2)])
    np.testing.assert_allclose(curv.alpha @ forms.J, dn, atol=1e-9)


# f factor


def test_f_factor_values(torus):
    curv = curvature(fundamental_forms(torus, ChartPoint(math.pi / 2, 0.0)))
    assert f_factor(curv, 0.0) == 1.0
    assert f_factor(curv, 0.5) == pytest.approx(1.05, rel=1e-14)


def test_f_factor_torus_closed_form(torus):
    th, q3 = 2.3, -0.8
    curv = curvature(fundamental_forms(torus, ChartPoint(th, 0.0)))
    W = R0 + A * math.cos(th)
    expected = 1 + (W + A * math.cos(th)) / (A * W) * q3 + math.cos(th) / (A * W) * q3**2
    assert f_factor(curv, q3) == pytest.approx(expected, rel=1e-14)


def test_f_factor_rejects_focal_offset():
    curv = curvature(fundamental_forms(builtin_chart("sphere", R=1.0), ChartPoint(1.0, 0.0)))
    with pytest.raises(NonPositiveF):
        f_factor(curv, -1.0)


@settings(max_examples=200, deadline=None)
@given(
    th=st.floats(-math.pi, math.pi),
    ph=st.floats(0, 2 * math.pi),
    frac=st.floats(-0.9, 0.9),
)
def test_f_equals_det_identity_plus_alpha(th, ph, frac):
    torus = builtin_chart("torus", a=A, R0=R0)
    curv = curvature(fundamental_forms(torus, ChartPoint(th, ph)))
    kmax = np.max(np.abs(np.linalg.eigvals(curv.alpha)))
    q3 = frac / kmax
    det = np.linalg.det(np.eye(2) + q3 * curv.alpha)
    assert curv.f(q3) == pytest.approx(det, rel=1e-12)


# offset metric


def test_torus_offset_metric(torus):
    th, q3 = 1.2, 0.37
    om = offset_metric(torus, ChartPoint(th, 0.5), q3)
    W = R0 + A * math.cos(th)
    np.testing.assert_allclose(
        om.G, np.diag([(A + q3) ** 2, (W + q3 * math.cos(th)) ** 2]), rtol=1e-13, atol=1e-12
    )
    np.testing.assert_allclose(
        om.gprime_inv, np.diag([-2 / A**3, -2 * math.cos(th) / W**3]), rtol=1e-13, atol=1e-18
    )


def test_plane_offset_metric():
    om = offset_metric(builtin_chart("plane"), ChartPoint(0.0, 0.0), 0.3)
    np.testing.assert_array_equal(om.G, np.eye(2))
    np.testing.assert_array_equal(om.gprime_inv, np.zeros((2, 2)))


@pytest.mark.parametrize("chart", builtins(), ids=lambda c: c.kind)
def test_gprime_matches_finite_difference(chart):
    p = random_points(chart, 20, seed=11)
    om = offset_metric(chart, p, 0.0)
    fd = offset_inverse_derivative(chart, p)
    assert np.max(np.abs(om.gprime_inv - fd)) < 1e-6


@pytest.mark.parametrize("kind,params", [("torus", {"a": A, "R0": R0}), ("sphere", {"R": 2.0})])
@pytest.mark.parametrize("frac", [0.05, -0.05, 0.005, -0.005])
def test_block_determinant_identity(kind, params, frac):
    chart = builtin_chart(kind, **params)
    p = random_points(chart, 40, seed=2)
    q3 = frac * chart.scale
    om = offset_metric(chart, p, q3)
    forms = fundamental_forms(chart, p)
    np.testing.assert_allclose(
        np.linalg.det(om.block()), om.f**2 * np.linalg.det(forms.g), rtol=1e-10
    )


def test_numeric_offset_metric_agrees(torus):
    p = ChartPoint(0.8, 1.9)
    a = offset_metric(torus, p, 0.4)
    n = offset_metric(torus.numeric(), p, 0.4)
    np.testing.assert_allclose(n.G, a.G, rtol=1e-7, atol=1e-6)


def test_offset_metric_rejects_focal_offset():
    with pytest.raises(NonPositiveF):
        offset_metric(builtin_chart("cylinder", a=1.0), ChartPoint(0.0, 0.0), -1.0)


# built-ins


def test_invalid_torus():
    with pytest.raises(InvalidShape):
        builtin_chart("torus", a=10, R0=5)
    with pytest.raises(InvalidShape):
        builtin_chart("torus", a=10, R0=10)
    with pytest.raises(InvalidShape):
        builtin_chart("sphere", R=-1)
    with pytest.raises(InvalidShape):
        builtin_chart("cone", h=1)


@pytest.mark.parametrize("chart", builtins(), ids=lambda c: c.kind)
def test_builtin_charts_pass_checks(chart):
    check_chart(chart)
    assert chart.derivative_source == "analytic"
    assert chart.numeric().derivative_source == "numeric"


def test_periodicity_check_catches_bad_chart(torus):
    import dataclasses

    from thinlayer.geometry import Coordinate

    bad = dataclasses.replace(
        torus, coords=(Coordinate(-math.pi, 2.0, True), torus.coords[1])
    )
    with pytest.raises(InvalidShape):
        check_chart(bad)
