import numpy as np
import pytest
from hypothesis import given, strategies as st

from toricsoliton import (
    BUILTIN_SURFACES,
    DegeneracyError,
    DomainError,
    build_grid,
    builtin_surface,
    curvature_invariants,
    flow_driver,
    legendre_map,
    metric_from_potential,
    ricci_potential,
)
from toricsoliton.geometry import LegendreMap, kahler_hessian
from toricsoliton.polytope import DelzantPolytope, canonical_gradient, canonical_hessian, canonical_potential


def node(g, a, b):
    i = int(np.argmin(np.abs(g.x - a)))
    j = int(np.argmin(np.abs(g.x - b)))
    assert g.x[i] == pytest.approx(a, abs=1e-12) and g.x[j] == pytest.approx(b, abs=1e-12)
    return i, j


@pytest.fixture(scope="module")
def dp2():
    return build_grid(builtin_surface("dP2"), 33)


@pytest.fixture(scope="module")
def cp2():
    return build_grid(builtin_surface("CP2"), 37)


def test_canonical_metric_at_origin(dp2):
    md = metric_from_potential(dp2.polytope, dp2, dp2.zeros())
    ij = node(dp2, 0, 0)
    np.testing.assert_allclose(md.Gup[ij], [[1.5, 0.5], [0.5, 1.5]], atol=1e-15)
    # exact inverse of [[3/2, 1/2], [1/2, 3/2]] (determinant 2)
    np.testing.assert_allclose(md.Gdown[ij], [[0.75, -0.25], [-0.25, 0.75]], atol=1e-15)
    assert md.detGup[ij] == pytest.approx(2.0, abs=1e-15)
    assert ricci_potential(md).r.values[ij] == pytest.approx(0.5 * np.log(2), abs=1e-15)
    assert 0.5 * np.log(2) == pytest.approx(0.346574, abs=1e-6)


def test_cp2_determinant(cp2):
    md = metric_from_potential(cp2.polytope, cp2, cp2.zeros())
    ij = node(cp2, 0, 0)
    assert md.detGup[ij] == pytest.approx(0.75, abs=1e-15)
    assert ricci_potential(md).r.values[ij] == pytest.approx(0.5 * np.log(0.75), abs=1e-15)


def test_quadratic_shift_adds_identity(dp2):
    eps = 0.05
    base = metric_from_potential(dp2.polytope, dp2, dp2.zeros())
    md = metric_from_potential(dp2.polytope, dp2, dp2.sample(lambda a, b: 0.5 * eps * (a * a + b * b)))
    m = dp2.interior
    np.testing.assert_allclose(md.Gup[m] - base.Gup[m], np.broadcast_to(eps * np.eye(2), base.Gup[m].shape), atol=1e-10)


def test_ricci_potential_scaling(dp2):
    md = metric_from_potential(dp2.polytope, dp2, dp2.zeros())
    r0 = ricci_potential(md).r.values
    md.detGup = md.detGup * 3.0**2
    r1 = ricci_potential(md).r.values
    m = dp2.interior
    np.testing.assert_allclose(r1[m] - r0[m], np.log(3.0), atol=1e-13)


def test_degenerate_metric_names_node(dp2):
    with pytest.raises(DegeneracyError) as err:
        metric_from_potential(dp2.polytope, dp2, dp2.sample(lambda a, b: -2.0 * (a * a + b * b)))
    assert err.value.node is not None


@given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(0, 6.3))
def test_gup_gdown_identity(a, b, c):
    g = build_grid(builtin_surface("dP2"), 24)
    h = g.sample(lambda x, y: a * x * x * y + b * np.sin(2 * x + c) * np.cos(y))
    md = metric_from_potential(g.polytope, g, h)
    m = g.interior
    prod = np.einsum("nij,njk->nik", md.Gup[m], md.Gdown[m])
    assert np.abs(prod - np.eye(2)).max() < 1e-10
    assert np.all(md.Gup[m] == np.swapaxes(md.Gup[m], 1, 2))


def test_flow_driver_examples(dp2, cp2):
    q = flow_driver(dp2.polytope, dp2, dp2.zeros())
    assert q.values[node(dp2, 0, 0)] == pytest.approx(0.346574, abs=1e-6)
    assert np.array_equal(q.values, q.values.T, equal_nan=True)
    qc = flow_driver(cp2.polytope, cp2, cp2.zeros())
    vals = qc.values[cp2.interior]
    assert np.abs(vals - 0.5 * np.log(0.75)).max() < 1e-13
    assert qc.values[node(cp2, -0.5, -0.5)] == pytest.approx(-0.143841, abs=1e-6)


def direct_driver(p, x, h, grad_h, hess_h):
    """Q from the analytic canonical potential plus exact derivatives of h."""
    G = canonical_hessian(p, x) + hess_h
    g = canonical_potential(p, x) + h
    dg = canonical_gradient(p, x) + grad_h
    return 0.5 * np.log(np.linalg.det(G)) + g - x @ dg


@pytest.mark.parametrize("name", BUILTIN_SURFACES)
def test_flow_driver_matches_direct_evaluation(name):
    p = builtin_surface(name)
    rng = np.random.default_rng(7)
    f = lambda a, b: 0.05 * np.sin(a + 2 * b) + 0.02 * a * a * b  # noqa: E731
    df = lambda a, b: np.array([0.05 * np.cos(a + 2 * b) + 0.04 * a * b, 0.1 * np.cos(a + 2 * b) + 0.02 * a * a])  # noqa: E731

    def d2f(a, b):
        s = -0.05 * np.sin(a + 2 * b)
        return np.array([[s + 0.04 * b, 2 * s + 0.04 * a], [2 * s + 0.04 * a, 4 * s]])

    errs = []
    for N in (64, 128):
        g = build_grid(p, N)
        q = flow_driver(p, g, g.sample(f))
        deep = np.argwhere(g.interior & (g.boundary_distance > 0.15))
        pick = deep[rng.choice(len(deep), 10, replace=False)]
        e = 0.0
        for i, j in pick:
            x = np.array([g.x[i], g.x[j]])
            e = max(e, abs(q.values[i, j] - direct_driver(p, x, f(*x), df(*x), d2f(*x))))
        errs.append(e)
    assert errs[1] < 5e-4
    assert errs[1] < errs[0]


def test_flow_driver_bounded_only_for_anticanonical():
    sup = {}
    for c in (1.0, 2.0):
        p = DelzantPolytope.from_records(
            [{"normal": [1, 0], "offset": c}, {"normal": [0, 1], "offset": 1.0}, {"normal": [-1, -1], "offset": 1.0}]
        )
        sup[c] = [np.nanmax(np.abs(flow_driver(p, g, g.zeros()).values)) for g in (build_grid(p, 64), build_grid(p, 256))]
    assert sup[1.0][1] == pytest.approx(sup[1.0][0], rel=1e-6)
    assert sup[2.0][1] > sup[2.0][0] + 0.3


def test_cp2_is_einstein():
    g = build_grid(builtin_surface("CP2"), 64)
    cd = curvature_invariants(metric_from_potential(g.polytope, g, g.zeros()))
    R = cd.ricci_scalar.values[g.interior]
    assert np.abs(R - 4).max() < 1e-8
    # Einstein: the Ricci block equals the metric block
    md = metric_from_potential(g.polytope, g, g.zeros())
    np.testing.assert_allclose(cd.ricci_block[g.interior], md.Gdown[g.interior], atol=1e-8)


@pytest.mark.parametrize("name", BUILTIN_SURFACES)
def test_euler_integral_canonical(name):
    p = builtin_surface(name)
    g = build_grid(p, 128)
    cd = curvature_invariants(metric_from_potential(p, g, g.zeros()))
    assert cd.euler_integrand.integrate() == pytest.approx(len(p.vertices()), abs=0.1)


def test_curvature_symmetric():
    g = build_grid(builtin_surface("dP2"), 48)
    h = g.sample(lambda a, b: 0.03 * (a * a + b * b) * (a + b) - 0.02 * a * b)
    cd = curvature_invariants(metric_from_potential(g.polytope, g, h))
    for f in (cd.ricci_scalar, cd.sectional_x, cd.euler_integrand):
        np.testing.assert_allclose(f.values, f.values.T, rtol=1e-10, atol=1e-10)


def test_legendre_map_values(dp2):
    p = dp2.polytope
    u = legendre_map(p, dp2, dp2.zeros(), (0.5, 0.0))
    assert u[0] == pytest.approx(0.5 * np.log(1.5) - 0.5 * np.log(0.25), abs=1e-12)
    assert u[0] == pytest.approx(0.895880, abs=1e-6)
    even = dp2.sample(lambda a, b: 0.1 * (a * a + b * b) + 0.05 * a * b)
    np.testing.assert_allclose(legendre_map(p, dp2, even, (0.0, 0.0)), 0.0, atol=1e-12)
    with pytest.raises(DomainError):
        legendre_map(p, dp2, dp2.zeros(), (1.0, 1.0))


def test_legendre_map_monotone(dp2):
    h = dp2.sample(lambda a, b: 0.05 * np.sin(a) * b)
    lm = LegendreMap(dp2.polytope, dp2, h)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.6, 0.4, size=(40, 2))
    for x, y in zip(pts[::2], pts[1::2]):
        assert (lm(x) - lm(y)) @ (x - y) > 0


def test_kahler_hessian_equals_inverse_metric(flows):
    errs = []
    for N in (32, 64):
        p, s, _ = flows("dP2", N)
        g = s.grid
        md = metric_from_potential(p, g, s.h)
        lm = LegendreMap(p, g, s.h)
        e = 0.0
        for a, b in ((0.25, -0.25), (0.0, 0.5), (-0.5, -0.5)):
            i, j = int(np.argmin(np.abs(g.x - a))), int(np.argmin(np.abs(g.x - b)))
            x = np.array([g.x[i], g.x[j]])
            e = max(e, np.abs(kahler_hessian(lm, x, 1e-4) - md.Gdown[i, j]).max())
        errs.append(e)
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] > 3
