import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinlayer.em import (
    FieldConfig,
    gauge_check,
    nongauge_test_field,
    surface_gauge_divergence,
    torus_vector_potential,
    zero_field,
)
from thinlayer.errors import InvalidShape
from thinlayer.geometry import ChartPoint, builtin_chart, fundamental_forms
from thinlayer.grid import GridSpec

A, R0 = 10.0, 15.0
TORUS = builtin_chart("torus", a=A, R0=R0)


def sample(n, seed=0):
    rng = np.random.default_rng(seed)
    return ChartPoint(rng.uniform(-math.pi, math.pi, n), rng.uniform(0, 2 * math.pi, n))


def test_torus_potential_components():
    f = torus_vector_potential(A, R0, 0.0, 1.0)
    comp = f.covariant(math.pi / 2, math.pi / 2)
    np.testing.assert_allclose(comp, [100.0, 0.0], atol=1e-12)
    f = torus_vector_potential(A, R0, 2.0, 0.0)
    th = 0.7
    W = R0 + A * math.cos(th)
    np.testing.assert_allclose(f.covariant(th, 1.3), [0.0, 2 * W * W], rtol=1e-15)
    assert f.A3 == 0.0
    np.testing.assert_array_equal(f.scalar(np.zeros(3), np.zeros(3)), 0.0)


def test_zero_components():
    p = sample(20)
    comp = torus_vector_potential(A, R0, 0.0, 0.0).covariant(p.q1, p.q2)
    assert not np.any(comp)


def test_invalid_torus_field():
    with pytest.raises(InvalidShape):
        torus_vector_potential(10.0, 9.0, 1.0, 1.0)


def test_field_jacobian_matches_finite_difference():
    f = torus_vector_potential(A, R0, 0.7, -1.3)
    p = sample(30, 4)
    h = 1e-6
    for axis in range(2):
        dq = [0.0, 0.0]
        dq[axis] = h
        fd = (f.covariant(p.q1 + dq[0], p.q2 + dq[1]) - f.covariant(p.q1 - dq[0], p.q2 - dq[1])) / (2 * h)
        np.testing.assert_allclose(np.asarray(f.jacobian(p.q1, p.q2))[:, axis, :], fd, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("B0,B1", [(1.0, 0.0), (0.0, 1.0), (0.3, -2.0)])
def test_torus_gauge_is_divergence_free(B0, B1):
    f = torus_vector_potential(A, R0, B0, B1)
    div = surface_gauge_divergence(TORUS, f, sample(200), "analytic")
    assert np.max(np.abs(div)) <= 1e-10
    num = surface_gauge_divergence(TORUS, f, sample(50), "numeric")
    assert np.max(np.abs(num)) <= 1e-6


def test_zero_field_divergence():
    for method in ("analytic", "numeric"):
        assert not np.any(surface_gauge_divergence(TORUS, zero_field(), sample(10), method))


def test_nongauge_field_matches_oracle():
    # oracle: div = (1/W) d_theta(W cos(theta)) for A_theta = a^2 cos(theta)
    f = nongauge_test_field(A)
    th = np.linspace(-3, 3, 25)
    W = R0 + A * np.cos(th)
    oracle = (-A * np.sin(th) * np.cos(th) - W * np.sin(th)) / W
    an = surface_gauge_divergence(TORUS, f, ChartPoint(th, 0.4), "analytic")
    nu = surface_gauge_divergence(TORUS, f, ChartPoint(th, 0.4), "numeric")
    np.testing.assert_allclose(an, oracle, atol=1e-12)
    np.testing.assert_allclose(nu, oracle, atol=1e-8)


def test_auto_method_and_errors():
    f = FieldConfig(A1=lambda a, b: np.sin(b) + 0 * a)
    # no jacobian, so auto falls back to numeric
    report = gauge_check(TORUS, f, GridSpec(8, 8))
    assert report.method == "numeric"
    with pytest.raises(ValueError):
        surface_gauge_divergence(TORUS, f, ChartPoint(0.0, 0.0), "analytic")
    with pytest.raises(ValueError):
        surface_gauge_divergence(TORUS, f, ChartPoint(0.0, 0.0), "spectral")


def test_gauge_check_reports():
    grid = GridSpec(128, 128)
    good = gauge_check(TORUS, torus_vector_potential(A, R0, 1.0, 1.0), grid)
    assert good.max_div <= 1e-10 and good.method == "analytic"
    assert gauge_check(TORUS, zero_field(), grid).max_div == 0.0
    bad = gauge_check(TORUS, nongauge_test_field(A), GridSpec(32, 32))
    assert bad.max_div > 0.01
    assert bad.rms_div <= bad.max_div
    assert set(bad.as_dict()) == {"max_div", "rms_div", "method"}


def test_numeric_divergence_converges_with_grid_spacing():
    # the plane chart with a wavy field: the numeric stencil error shrinks as h^4
    plane = builtin_chart("plane", L=2 * math.pi)
    f = FieldConfig(A1=lambda x, y: np.sin(x) * np.cos(y), A2=lambda x, y: np.cos(x) * np.sin(y))
    p = ChartPoint(np.array([0.3, 1.2]), np.array([2.0, 0.1]))
    exact = 2 * np.cos(p.q1) * np.cos(p.q2)
    errs = []
    for step in (1e-2, 5e-3):
        num = surface_gauge_divergence(plane.numeric(step), f, p, "numeric")
        errs.append(np.max(np.abs(num - exact)))
    assert errs[1] < errs[0]


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(-3, 3),
    beta=st.floats(-3, 3),
    B0=st.floats(-2, 2),
    B1=st.floats(-2, 2),
)
def test_divergence_is_linear(alpha, beta, B0, B1):
    f = torus_vector_potential(A, R0, B0, B1)
    g = nongauge_test_field(A)
    p = sample(10, 9)
    combo = surface_gauge_divergence(TORUS, f.combine(alpha, g, beta), p, "analytic")
    parts = alpha * surface_gauge_divergence(TORUS, f, p, "analytic") + beta * surface_gauge_divergence(
        TORUS, g, p, "analytic"
    )
    np.testing.assert_allclose(combo, parts, atol=1e-12)


def test_scaled_field():
    f = torus_vector_potential(A, R0, 1.0, 2.0)
    g = f.scaled(-1.0)
    p = sample(5)
    np.testing.assert_allclose(g.covariant(p.q1, p.q2), -f.covariant(p.q1, p.q2))
    assert (g.B0, g.B1) == (-1.0, -2.0)


def test_divergence_on_sphere_numeric():
    # A = sin^2(theta) d(phi): div of a rotation field about the axis vanishes
    sphere = builtin_chart("sphere", R=1.0)
    f = FieldConfig(A2=lambda t, p: np.sin(t) ** 2 + 0 * p)
    p = ChartPoint(np.linspace(0.3, 2.8, 6), np.linspace(0.1, 6.0, 6))
    assert np.max(np.abs(surface_gauge_divergence(sphere, f, p))) < 1e-9
    assert fundamental_forms(sphere, p).sqrt_g.shape == (6,)
