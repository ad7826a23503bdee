import numpy as np
import pytest
from hypothesis import given, strategies as st

from toricsoliton import (
    BlowUpError,
    ConfigurationError,
    Schedule,
    build_grid,
    builtin_surface,
    gauge_project,
    run,
    soliton_residual,
    step,
)
from toricsoliton.flow import FlowState, initial_state, stable_dt
from toricsoliton.grid import symmetric_sum
from toricsoliton.polytope import DelzantPolytope

ALPHA = -0.43475


@pytest.mark.parametrize(
    "kwargs", [dict(tol=0), dict(kappa=0), dict(kappa=1.5), dict(max_steps=-1), dict(scheme="rk4")]
)
def test_schedule_validation(kwargs):
    with pytest.raises(ConfigurationError):
        Schedule(**kwargs)


# -- gauge projection --------------------------------------------------------


@pytest.fixture(scope="module")
def g32():
    return build_grid(builtin_surface("dP2"), 32)


def test_gauge_constant(g32):
    c, a, res = gauge_project(g32.field(0.7))
    assert c == pytest.approx(-1.4, abs=1e-13)
    assert a == pytest.approx((0, 0), abs=1e-13)
    assert np.nanmax(np.abs(res.values)) < 1e-13


def test_gauge_linear(g32):
    c, a, res = gauge_project(g32.sample(lambda x, y: -0.5 * ALPHA * (x + y)))
    assert a[0] == a[1] == pytest.approx(ALPHA, abs=1e-13)
    assert c == pytest.approx(0, abs=1e-13)
    assert np.nanmax(np.abs(res.values)) < 1e-13


def test_gauge_residual_orthogonal(g32):
    _, _, res = gauge_project(g32.sample(lambda x, y: x * x))
    r = np.where(g32.interior, res.values, 0.0)
    for b in (np.ones_like(r), g32.X1, g32.X2):
        assert abs(symmetric_sum(np.where(g32.interior, b, 0.0) * r)) < 1e-10


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1))
def test_gauge_recovers_affine_part(c, a1, a2, k):
    g = build_grid(builtin_surface("dP1"), 20)
    bump = g.sample(lambda x, y: np.cos(3 * x) * np.sin(2 * y))
    _, _, bump_res = gauge_project(bump)
    q = g.sample(lambda x, y: -(c + a1 * x + a2 * y) / 2) + bump_res * k
    cc, aa, res = gauge_project(q)
    assert cc == pytest.approx(c, abs=1e-9)
    assert aa == pytest.approx((a1, a2), abs=1e-9)
    np.testing.assert_allclose(res.values, bump_res.values * k, atol=1e-9)


# -- explicit step -----------------------------------------------------------


def test_cp2_step_is_stationary():
    p = builtin_surface("CP2")
    s = initial_state(p, 48)
    s1 = step(p, s, stable_dt(p, s))
    assert np.nanmax(np.abs(s1.h.values)) < 1e-15
    assert s1.step_count == 1 and s1.t > 0


def test_dp2_step_symmetric_and_linear_in_dt():
    p = builtin_surface("dP2")
    s = initial_state(p, 40)
    dt = stable_dt(p, s)
    a = step(p, s, dt)
    b = step(p, s, 2 * dt)
    assert np.array_equal(a.h.values, a.h.values.T, equal_nan=True)
    assert np.array_equal(b.h.values, 2 * a.h.values, equal_nan=True)
    # the update has no component along 1, x1, x2
    _, _, res = gauge_project(a.h)
    np.testing.assert_allclose(res.values, a.h.values, atol=1e-15)


def test_step_rejects_bad_dt():
    p = builtin_surface("dP2")
    with pytest.raises(ConfigurationError):
        step(p, initial_state(p, 24), 0.0)


def test_huge_step_blows_up_with_node():
    p = builtin_surface("dP2")
    s = initial_state(p, 32)
    with pytest.raises(BlowUpError) as err:
        step(p, s, 10.0)
    assert err.value.node is not None
    assert err.value.last_state is s


# -- run ---------------------------------------------------------------------


def test_cp2_converges_immediately():
    state, report = run(builtin_surface("CP2"), 64)
    assert report.converged and report.steps == 0
    assert report.alpha == pytest.approx(0, abs=1e-6)


def test_dp2_alpha_n128(flows):
    _, _, report = flows("dP2", 128)
    assert report.converged and report.residual_sup <= 1e-9
    assert report.alpha == pytest.approx(-0.4348, abs=0.005)
    assert report.xi[0] == report.xi[1]


def test_dp3_kahler_einstein(flows):
    _, _, report = flows("dP3", 128)
    assert report.alpha == pytest.approx(0, abs=1e-3)


def test_dp1_flow(flows):
    _, _, report = flows("dP1", 64)
    assert report.alpha == pytest.approx(0.5276, abs=5e-3)


@pytest.fixture(scope="module")
def explicit_dp2():
    snaps = []
    p = builtin_surface("dP2")
    state, report = run(p, 32, Schedule(tol=1e-8, kappa=0.4, snapshot_every=250),
                        on_snapshot=lambda s, r: snaps.append(s.h.values.copy()))
    return state, report, snaps


def test_explicit_and_implicit_share_the_fixed_point(explicit_dp2, flows):
    _, report, _ = explicit_dp2
    _, _, implicit = flows("dP2", 32)
    assert report.converged
    assert report.alpha == pytest.approx(implicit.alpha, abs=1e-7)


def test_symmetry_preserved_bitwise_along_flow(explicit_dp2):
    state, _, snaps = explicit_dp2
    assert len(snaps) > 5
    for v in snaps + [state.h.values]:
        assert np.array_equal(v, v.T, equal_nan=True)


def test_residual_monotone_after_transient(explicit_dp2):
    _, report, _ = explicit_dp2
    r = np.array([v for _, _, v in report.residual_history])
    windows = r[100 : len(r) - len(r) % 100].reshape(-1, 100).max(axis=1)
    assert np.all(np.diff(windows) <= 0)


def test_alpha_gauge_invariant():
    p = builtin_surface("dP2")
    base = run(p, 32, Schedule(tol=1e-10, scheme="implicit"))[1]
    g = build_grid(p, 32)
    seeded = run(p, 32, Schedule(tol=1e-10, scheme="implicit"),
                 state=FlowState(g.sample(lambda a, b: 0.01 * (a + b))))[1]
    assert seeded.alpha == pytest.approx(base.alpha, abs=1e-6)


def test_run_is_deterministic():
    p = builtin_surface("dP2")
    a = run(p, 24, Schedule(max_steps=40))[0]
    b = run(p, 24, Schedule(max_steps=40))[0]
    assert a.h.values.tobytes() == b.h.values.tobytes()


def test_max_steps_reports_not_converged():
    state, report = run(builtin_surface("dP2"), 24, Schedule(max_steps=3))
    assert not report.converged and report.steps == 3 and state.step_count == 3


def test_explicit_scheme_diverges_on_acute_corners():
    with pytest.raises(BlowUpError) as err:
        run(builtin_surface("dP1"), 24, Schedule(tol=1e-8, max_steps=20000))
    assert err.value.last_state is not None


def test_nonanticanonical_refused():
    p = DelzantPolytope.from_records(
        [{"normal": [1, 0], "offset": 2.0}, {"normal": [0, 1]}, {"normal": [-1, -1]}], name="big"
    )
    with pytest.raises(ConfigurationError):
        run(p, 24)
    _, report = run(p, 24, Schedule(max_steps=2), allow_nonanticanonical=True)
    assert report.steps == 2


def test_soliton_residual(flows):
    p, s, report = flows("dP2", 64)
    assert soliton_residual(p, s.grid, s.h, report.alpha) <= 10 * 1e-9
    g = build_grid(p, 64)
    assert soliton_residual(p, g, g.zeros(), ALPHA) > 0.01
    c = build_grid(builtin_surface("CP2"), 64)
    assert soliton_residual(c.polytope, c, c.zeros(), 0.0) < 1e-12
