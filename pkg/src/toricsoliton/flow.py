"""Normalized Kahler-Ricci flow at the level of the symplectic potential.

With ``g = g_can + h`` the flow reads

    dh/dt = 2 (r + g - x . grad g) + c + a . x

where the constant ``c`` and linear coefficients ``a`` are chosen every step
to remove the projection of ``2 Q`` onto ``{1, x1, x2}`` (these directions
only shift the potential and translate the Legendre dual). A fixed point
satisfies ``Q = -(c + a . x) / 2`` and its linear coefficients are the
soliton vector ``xi = a``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid as _grid
from .errors import BlowUpError, ConfigurationError, DegeneracyError
from .geometry import flow_driver_from_metric, metric_from_potential
from .grid import PolytopeGrid, ScalarField, build_grid, symmetric_sum
from .polytope import DelzantPolytope

log = logging.getLogger(__name__)


@dataclass(eq=False)
class FlowState:
    h: ScalarField
    t: float = 0.0
    gauge: tuple = (0.0, (0.0, 0.0))
    step_count: int = 0
    dt_scale: float = 1.0

    @property
    def grid(self) -> PolytopeGrid:
        return self.h.grid


@dataclass
class FlowReport:
    converged: bool
    alpha: float
    residual_sup: float
    time_elapsed_flow: float
    steps: int
    alpha_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    xi: tuple = (0.0, 0.0)
    c: float = 0.0


@dataclass
class Schedule:
    """Time-stepping policy for :func:`run`.

    ``kappa`` scales the explicit stability bound ``dx^2 / max eig(G_ij)``.
    ``scheme='implicit'`` switches to linearly implicit Euler whose step grows
    geometrically from ``dt_implicit`` up to ``dt_max``; for large steps this
    is a Newton iteration on the fixed-point equation.
    """

    tol: float = 1e-6
    max_steps: int = 200_000
    kappa: float = 0.2
    scheme: str = "explicit"
    dt_implicit: float = 0.05
    dt_growth: float = 2.0
    dt_max: float = 1e6
    snapshot_every: int = 0
    divergence_window: int = 100
    record_every: int = 1

    def __post_init__(self):
        if self.scheme not in ("explicit", "implicit"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if not self.tol > 0 or not 0 < self.kappa <= 1 or self.max_steps < 0:
            raise ConfigurationError("schedule requires tol > 0, 0 < kappa <= 1, max_steps >= 0")


# -- gauge ------------------------------------------------------------------


def _basis(grid):
    p = grid.X1 + grid.X2
    m = grid.X1 - grid.X2
    return p, m


def gauge_project(q: ScalarField, grid: Optional[PolytopeGrid] = None):
    """Uniform-weight least-squares fit ``q ~ -(c + a . x) / 2`` over interior nodes.

    Returns ``(c, (a1, a2), residual)`` with ``residual = q + (c + a . x)/2``
    orthogonal to ``1, x1, x2``. The fit is done in the basis
    ``1, x1 + x2, x1 - x2``; for a reflection-symmetric ``q`` on a symmetric
    lattice the antisymmetric coefficient is exactly zero and ``a1 == a2``
    bitwise.
    """
    grid = grid or q.grid
    mask = grid.interior
    qv = np.where(mask, q.values, 0.0)
    p, m = _basis(grid)
    one = mask.astype(float)
    pm, mm = p * one, m * one
    S = symmetric_sum
    gram = np.array(
        [
            [S(one), S(pm), S(mm)],
            [S(pm), S(pm * p), S(pm * m)],
            [S(mm), S(mm * p), S(mm * m)],
        ]
    )
    rhs = np.array([S(qv), S(pm * qv), S(mm * qv)])
    if gram[0, 2] == 0.0 and gram[1, 2] == 0.0:
        b01 = np.linalg.solve(gram[:2, :2], rhs[:2])
        beta = np.array([b01[0], b01[1], rhs[2] / gram[2, 2]])
    else:
        beta = np.linalg.solve(gram, rhs)
    c = -2.0 * beta[0]
    a1 = -2.0 * (beta[1] + beta[2])
    a2 = -2.0 * (beta[1] - beta[2])
    lin = c + (a1 * grid.X1 + a2 * grid.X2)
    residual = ScalarField(grid, np.where(mask, q.values + 0.5 * lin, np.nan))
    return float(c), (float(a1), float(a2)), residual


# -- explicit stepping ------------------------------------------------------


def _max_diffusivity(Gdown, mask):
    a, b, c = Gdown[..., 0, 0][mask], Gdown[..., 0, 1][mask], Gdown[..., 1, 1][mask]
    lam = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return float(lam.max())


def stable_dt(p: DelzantPolytope, state: FlowState, kappa: float = 0.2) -> float:
    """Explicit step bound ``kappa dx^2 / max eig(G_ij)``.

    ``G_ij`` (the inverse Hessian) is the diffusion tensor of the linearised
    driver ``1/2 tr(G_ij d^2 h)``.
    """
    md = metric_from_potential(p, state.grid, state.h)
    return kappa * state.grid.dx**2 / _max_diffusivity(md.Gdown, state.grid.interior)


def update_rate(p: DelzantPolytope, h: ScalarField):
    """Gauge-projected ``dh/dt`` together with ``(c, a)`` and the metric."""
    md = metric_from_potential(p, h.grid, h)
    q = flow_driver_from_metric(p, md)
    c, a, res = gauge_project(q, h.grid)
    return ScalarField(h.grid, 2.0 * res.values), c, a, md


def step(p: DelzantPolytope, s: FlowState, dt: float) -> FlowState:
    """One explicit Euler step of size ``dt``."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    rate, c, a, _ = update_rate(p, s.h)
    h_new = ScalarField(s.grid, s.h.values + dt * rate.values)
    new = FlowState(h_new, s.t + dt, (c, a), s.step_count + 1, s.dt_scale)
    try:
        metric_from_potential(p, s.grid, h_new)
    except DegeneracyError as exc:
        raise BlowUpError(f"{exc}; retry with a smaller dt", node=exc.node, last_state=s) from exc
    return new


# -- linearly implicit stepping ---------------------------------------------


class _Linearization:
    """Sparse Jacobian of ``2 Q`` with respect to ``h`` on the interior nodes.

    ``dQ[dh] = 1/2 tr(G_ij d^2 dh) + dh - x . grad dh``.
    """

    def __init__(self, grid: PolytopeGrid):
        self.grid = grid
        mask = grid.interior
        self.index = -np.ones(mask.shape, dtype=np.int64)
        self.nodes = np.argwhere(mask)
        self.index[mask] = np.arange(len(self.nodes))
        plan = grid.plan
        self.ops = {
            "d1_0": self._matrix(plan.d1[0], axis=0),
            "d1_1": self._matrix(plan.d1[1], axis=1),
            "d2_0": self._matrix(plan.d2[0], axis=0),
            "d2_1": self._matrix(plan.d2[1], axis=1),
            "d12": self._matrix2(plan.d12),
        }

    def _coo(self, entries):
        rows, cols, vals = [], [], []
        ii, jj = self.nodes[:, 0], self.nodes[:, 1]
        n = len(self.nodes)
        for (a, b), w in entries:
            wv = w[ii, jj] if np.ndim(w) else np.full(n, w)
            ti, tj = ii + a, jj + b
            nz = wv != 0
            rows.append(np.arange(n)[nz])
            cols.append(self.index[ti[nz], tj[nz]])
            vals.append(wv[nz])
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
        assert np.all(cols >= 0)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def _matrix(self, weights, axis):
        return self._coo((((k, 0) if axis == 0 else (0, k)), w) for k, w in weights.items())

    def _matrix2(self, weights):
        return self._coo(weights.items())

    def jacobian(self, md) -> sp.csr_matrix:
        g = self.grid
        m = g.interior
        dx = g.dx
        Gd = md.Gdown[m]
        x1, x2 = g.X1[m], g.X2[m]
        o = self.ops
        D = sp.diags
        L = (
            D(Gd[:, 0, 0]) @ o["d2_0"] / dx**2
            + D(Gd[:, 1, 1]) @ o["d2_1"] / dx**2
            + D(2 * Gd[:, 0, 1]) @ o["d12"] / dx**2
        )
        L = 0.5 * L + sp.identity(len(x1)) - (D(x1) @ o["d1_0"] + D(x2) @ o["d1_1"]) / dx
        return (2.0 * L).tocsc()


def _implicit_step(p, s: FlowState, dt: float, lin: _Linearization, symmetric: bool) -> FlowState:
    """Solve ``(I/dt - J) dh + B mu = 2 Q``, ``B^T dh = 0`` (gauge-bordered)."""
    grid = s.grid
    m = grid.interior
    md = metric_from_potential(p, grid, s.h)
    q = flow_driver_from_metric(p, md)
    J = lin.jacobian(md)
    n = J.shape[0]
    B = np.stack([np.ones(n), grid.X1[m], grid.X2[m]], axis=1)
    A = sp.bmat([[sp.identity(n) / dt - J, sp.csc_matrix(B)], [sp.csc_matrix(B.T), None]], format="csc")
    rhs = np.concatenate([2.0 * q.values[m], np.zeros(3)])
    sol = spla.splu(A).solve(rhs)
    dh = np.zeros(grid.interior.shape)
    dh[m] = sol[:n]
    if symmetric:
        dh = 0.5 * (dh + dh.T)
    h_new = ScalarField(grid, np.where(m, s.h.values + dh, np.nan))
    try:
        metric_from_potential(p, grid, h_new)
    except DegeneracyError as exc:
        raise BlowUpError(f"{exc}; retry with a smaller dt", node=exc.node, last_state=s) from exc
    return FlowState(h_new, s.t + dt, s.gauge, s.step_count + 1, s.dt_scale)


# -- driver -----------------------------------------------------------------


def initial_state(p: DelzantPolytope, N: int) -> FlowState:
    """The canonical metric, ``h = 0``."""
    return FlowState(build_grid(p, N).zeros())


def _check_polytope(p: DelzantPolytope, allow_nonanticanonical: bool):
    if not p.anticanonical and not allow_nonanticanonical:
        raise ConfigurationError(
            f"polygon {p.name!r} has offsets != 1; the flow driver is unbounded at its edges "
            "(pass allow_nonanticanonical=True to override)"
        )


def run(
    p: DelzantPolytope,
    N: int,
    schedule: Optional[Schedule] = None,
    state: Optional[FlowState] = None,
    on_snapshot: Optional[Callable[[FlowState, FlowReport], None]] = None,
    allow_nonanticanonical: bool = False,
):
    """Flow from the canonical metric (or ``state``) until the update rate is below ``tol``.

    Returns ``(state, report)``. The reported ``alpha`` is ``a1`` of the last
    gauge projection; for reflection-symmetric polygons ``a1 == a2``.
    """
    schedule = schedule or Schedule()
    _check_polytope(p, allow_nonanticanonical)
    s = state if state is not None else initial_state(p, N)
    grid = s.grid
    symmetric = p.is_swap_symmetric()
    lin = _Linearization(grid) if schedule.scheme == "implicit" else None
    if schedule.scheme == "explicit" and np.any(p.vertex_angles() < np.pi / 2 - 1e-9):
        log.warning(
            "polygon %s has acute corners where the explicit scheme is unstable; consider scheme='implicit'", p.name
        )
    report = FlowReport(False, 0.0, np.inf, s.t, s.step_count)
    best = np.inf
    last_good = s
    rising = 0
    while True:
        rate, c, a, md = update_rate(p, s.h)
        sup = float(np.nanmax(np.abs(rate.values)))
        s.gauge = (c, a)
        report.alpha, report.xi, report.c = a[0], a, c
        report.residual_sup, report.time_elapsed_flow, report.steps = sup, s.t, s.step_count
        if s.step_count % schedule.record_every == 0:
            report.alpha_history.append((s.step_count, s.t, a[0]))
            report.residual_history.append((s.step_count, s.t, sup))
        if not np.isfinite(sup):
            raise BlowUpError("non-finite update rate", last_state=last_good)
        if sup <= schedule.tol:
            report.converged = True
            if symmetric and abs(a[0] - a[1]) >= schedule.tol:
                raise AssertionError(f"asymmetric soliton vector {a} on a symmetric polygon")
            break
        if s.step_count >= schedule.max_steps:
            break
        if sup < best:
            best, rising = sup, 0
            last_good = s
        else:
            rising += 1
            if rising > schedule.divergence_window and sup > 10 * best:
                raise BlowUpError(
                    f"update rate grew from {best:.3e} to {sup:.3e} over {rising} steps",
                    last_state=last_good,
                )
        if schedule.scheme == "explicit":
            dt = s.dt_scale * schedule.kappa * grid.dx**2 / _max_diffusivity(md.Gdown, grid.interior)
            h_new = ScalarField(grid, s.h.values + dt * rate.values)
            try:
                metric_from_potential(p, grid, h_new)
            except DegeneracyError:
                s.dt_scale *= 0.5
                if s.dt_scale < 1e-6:
                    raise BlowUpError("step size collapsed", last_state=last_good)
                log.warning("metric degenerated; halving dt (scale %g)", s.dt_scale)
                continue
            s = FlowState(h_new, s.t + dt, (c, a), s.step_count + 1, s.dt_scale)
        else:
            dt = min(schedule.dt_implicit * schedule.dt_growth ** (s.step_count * 1.0), schedule.dt_max)
            dt *= s.dt_scale
            try:
                s = _implicit_step(p, s, dt, lin, symmetric)
            except BlowUpError:
                s.dt_scale *= 0.25
                if s.dt_scale < 1e-8:
                    raise
                continue
        if on_snapshot and schedule.snapshot_every and s.step_count % schedule.snapshot_every == 0:
            on_snapshot(s, report)
    return s, report


def soliton_residual(p: DelzantPolytope, grid: PolytopeGrid, h: ScalarField, alpha) -> float:
    """``sup |Q + phi/2 + c*|`` with the best constant ``c*`` for the given soliton vector.

    ``alpha`` may be a scalar (``xi = (alpha, alpha)``) or a 2-vector.
    """
    xi = np.broadcast_to(np.asarray(alpha, dtype=float), (2,))
    q = flow_driver(p, grid, h)
    v = q.values + 0.5 * (xi[0] * grid.X1 + xi[1] * grid.X2)
    vals = v[grid.interior]
    # the sup-norm optimal constant centres the range
    cstar = -0.5 * (vals.max() + vals.min())
    return float(np.max(np.abs(vals + cstar)))


from .geometry import flow_driver  # noqa: E402  (re-export for convenience)
