import numpy as np
import pytest
from hypothesis import given, strategies as st

from toricsoliton import BUILTIN_SURFACES, ConfigurationError, build_grid, builtin_surface, moment_alpha
from toricsoliton.polytope import DelzantPolytope, SolitonVector, gauss_rule
from toricsoliton.soliton_analysis import (
    StaleAnalysisWarning,
    driver_alpha,
    euler_characteristic_check,
    fit_quartic,
    quartic_basis,
    richardson,
    verify_soliton_tensor,
)

ALPHA = -0.43475


@given(st.lists(st.floats(-0.2, 0.2), min_size=9, max_size=9))
def test_quartic_fit_recovers_synthetic(c):
    g = build_grid(builtin_surface("dP2"), 40)
    h = g.sample(lambda a, b: quartic_basis(a, b) @ np.array(c[:7]) + c[7] + c[8] * (a + b))
    fit = fit_quartic(g.polytope, g, h)
    np.testing.assert_allclose(fit.coefficients, c[:7], atol=1e-10)
    np.testing.assert_allclose(fit.gauge, c[7:], atol=1e-10)
    assert fit.rms_error < 1e-12
    # one-sided second differences are exact only up to quadratics
    assert fit.max_metric_error <= 30 * g.dx**2 * max(abs(v) for v in c[:7]) + 1e-10


def test_quartic_fit_idempotent():
    g = build_grid(builtin_surface("dP2"), 40)
    fit = fit_quartic(g.polytope, g, g.sample(lambda a, b: np.exp(0.3 * a) * np.cos(b)))
    again = fit_quartic(g.polytope, g, g.sample(fit.potential))
    np.testing.assert_allclose(again.coefficients, fit.coefficients, atol=1e-12)


def test_stale_warning():
    g = build_grid(builtin_surface("dP2"), 24)
    with pytest.warns(StaleAnalysisWarning):
        fit = fit_quartic(g.polytope, g, g.zeros(), converged=False)
    assert fit.stale


def test_converged_fit_near_reference(flows):
    p, s, _ = flows("dP2", 128)
    fit = fit_quartic(p, s.grid, s.h)
    ref = (-0.087, -0.121, -0.041, -0.031, -0.015, -0.013, -0.009)
    np.testing.assert_allclose(fit.coefficients, ref, atol=0.01)


@pytest.mark.parametrize(
    "name, expected, tol",
    [("dP2", ALPHA, 1e-4), ("dP3", 0.0, 0.0), ("CP2", 0.0, 1e-15), ("dP1", 0.52762, 1e-5)],
)
def test_moment_alpha(name, expected, tol):
    xi = moment_alpha(builtin_surface(name))
    assert xi.components[0] == xi.components[1]
    assert xi.alpha == pytest.approx(expected, abs=tol)


def test_moment_condition_holds():
    p = builtin_surface("dP2")
    xi = moment_alpha(p)
    x, w = gauss_rule(p, 64)
    m = (w[:, None] * x * np.exp(-(x @ np.array(xi.components)))[:, None]).sum(0)
    assert np.abs(m).max() < 1e-13


def test_moment_alpha_sign_follows_barycenter():
    for name in BUILTIN_SURFACES:
        p = builtin_surface(name)
        b = p.barycenter().sum()
        a = moment_alpha(p).alpha
        assert a == 0 or np.sign(a) == np.sign(b)


def swapped(p):
    return DelzantPolytope.from_records(
        [{"normal": [e.normal[1], e.normal[0]], "offset": e.offset} for e in p.edges], name=p.name + "'"
    )


@pytest.mark.parametrize(
    "records",
    [
        [[1, 0], [0, 1], [-1, -1], [0, -1]],
        [[1, 0], [0, 1], [-1, 0], [0, -1], [-1, -1]][::-1],
        [[1, 0], [0, 1], [-1, -1], [1, 1], [-1, 0]],
    ],
)
def test_moment_alpha_general_polygons(records):
    p = DelzantPolytope.from_records([{"normal": r} for r in records])
    xi = np.array(moment_alpha(p).components)
    x, w = gauss_rule(p, 48)
    m = (w[:, None] * x * np.exp(-(x @ xi))[:, None]).sum(0)
    assert np.abs(m).max() < 1e-12
    # the swap maps the soliton vector components onto each other
    np.testing.assert_allclose(moment_alpha(swapped(p)).components, xi[::-1], atol=1e-12)


def test_moment_alpha_refuses_nonanticanonical():
    p = DelzantPolytope.from_records([{"normal": [1, 0], "offset": 2.0}, {"normal": [0, 1]}, {"normal": [-1, -1]}])
    with pytest.raises(ConfigurationError):
        moment_alpha(p)
    assert np.all(np.isfinite(moment_alpha(p, force=True).components))


def test_three_alpha_determinations_agree(flows):
    p, s, report = flows("dP2", 128)
    a_fit = driver_alpha(p, s.grid, s.h).alpha
    a_oracle = moment_alpha(p).alpha
    assert abs(a_fit - report.alpha) < 1e-8
    assert abs(report.alpha - a_oracle) < 1e-4
    assert abs(a_fit - a_oracle) < 1e-4


def test_soliton_tensor(flows):
    p, s, report = flows("dP2", 64)
    good = verify_soliton_tensor(p, s.grid, s.h, SolitonVector.symmetric(report.alpha))
    bad = verify_soliton_tensor(p, s.grid, s.h, SolitonVector.symmetric(0.0))
    assert good < 0.01
    assert bad > 0.05
    c = build_grid(builtin_surface("CP2"), 48)
    assert verify_soliton_tensor(c.polytope, c, c.zeros(), SolitonVector((0.0, 0.0))) < 1e-8


@pytest.mark.parametrize("name", ["CP2", "dP2"])
def test_euler_check_canonical(name):
    p = builtin_surface(name)
    g = build_grid(p, 96)
    assert euler_characteristic_check(p, g, g.zeros()) == pytest.approx(p.euler_characteristic, abs=0.1)


def test_richardson_exact_on_model():
    N = np.array([64, 128, 256])
    vals = 1.5 + 3.0 / (N - 1.0) ** 2
    assert richardson(N, vals) == pytest.approx(1.5, abs=1e-13)
    with pytest.raises(ValueError):
        richardson([64], [1.0])
