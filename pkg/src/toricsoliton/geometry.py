"""Toric metric, Ricci potential, curvature invariants and the Legendre map.

The symplectic potential is always split as ``g = g_can + h``: the canonical
part and its derivatives are evaluated analytically, the smooth correction
``h`` by finite differences on the lattice.

In action-angle coordinates ``(x1, x2, theta1, theta2)`` the metric is
block diagonal, ``G^{ij} dx_i dx_j + G_{ij} dtheta^i dtheta^j``, with every
component independent of the angles.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy import ndimage

from . import grid as _grid
from .errors import DegeneracyError, DomainError
from .grid import PolytopeGrid, ScalarField
from .polytope import (
    DelzantPolytope,
    SolitonVector,
    canonical_fourth,
    canonical_gradient,
    canonical_hessian,
    canonical_legendre_part,
    canonical_third,
    contains,
)


@dataclass(eq=False)
class MetricData:
    """Per-node metric blocks; ``nan`` outside the lattice interior."""

    grid: PolytopeGrid
    h: ScalarField
    Gup: np.ndarray
    Gdown: np.ndarray
    detGup: np.ndarray


@dataclass(eq=False)
class CurvatureData:
    grid: PolytopeGrid
    ricci_scalar: ScalarField
    sectional_x: ScalarField
    euler_integrand: ScalarField
    ricci_block: np.ndarray


@dataclass(eq=False)
class RicciPotentialField:
    r: ScalarField


def _interior_points(grid: PolytopeGrid):
    m = grid.interior
    return m, grid.points[m]


def _spd_check(grid, G, det):
    m = grid.interior
    bad = m & ~((det > 0) & (G[..., 0, 0] > 0))
    if bad.any():
        i, j = (int(v) for v in np.argwhere(bad)[0])
        x = (float(grid.x[i]), float(grid.x[j]))
        raise DegeneracyError(f"metric not positive definite at node ({i}, {j}), x = {x}", node=(i, j))


def metric_from_potential(p: DelzantPolytope, grid: PolytopeGrid, h: ScalarField) -> MetricData:
    m, pts = _interior_points(grid)
    Gup = h.hessian()
    Gup[m] += canonical_hessian(p, pts)
    a, b, c = Gup[..., 0, 0], Gup[..., 0, 1], Gup[..., 1, 1]
    det = a * c - b * b
    _spd_check(grid, Gup, det)
    Gdown = np.empty_like(Gup)
    Gdown[..., 0, 0] = c / det
    Gdown[..., 1, 1] = a / det
    Gdown[..., 0, 1] = Gdown[..., 1, 0] = -b / det
    return MetricData(grid, h, Gup, Gdown, det)


def ricci_potential(md: MetricData) -> RicciPotentialField:
    """``r = -1/2 log det F_ij = 1/2 log det G^{ij}``."""
    det = md.detGup
    if np.any(det[md.grid.interior] <= 0):
        raise DegeneracyError("nonpositive metric determinant")
    return RicciPotentialField(ScalarField(md.grid, np.where(md.grid.interior, 0.5 * np.log(det), np.nan)))


def flow_driver_from_metric(p: DelzantPolytope, md: MetricData) -> ScalarField:
    """``Q = r + g - x . grad g`` given an already assembled metric.

    ``r`` diverges like ``-1/2 log l_a`` at each edge and ``g - x . grad g``
    like ``+c_a/2 log l_a``; both logs are added before anything else so the
    cancellation for ``c_a = 1`` happens in a single rounding.
    """
    grid = md.grid
    m, pts = _interior_points(grid)
    h = md.h.values
    plan = grid.plan_for(h)
    g1, g2 = plan.first(h, grid.dx, 0), plan.first(h, grid.dx, 1)
    q = np.full(h.shape, np.nan)
    q[m] = 0.5 * np.log(md.detGup[m]) + canonical_legendre_part(p, pts)
    q += h - (grid.X1 * g1 + grid.X2 * g2)
    return ScalarField(grid, q)


def flow_driver(p: DelzantPolytope, grid: PolytopeGrid, h: ScalarField) -> ScalarField:
    return flow_driver_from_metric(p, metric_from_potential(p, grid, h))


# -- curvature --------------------------------------------------------------


def _potential_derivatives(md: MetricData):
    """Third and fourth derivatives of ``g = g_can + h`` at interior nodes."""
    grid = md.grid
    m, pts = _interior_points(grid)
    dx = grid.dx
    plan = grid.plan
    H = md.h.hessian()
    n = int(m.sum())
    d3 = np.empty((n, 2, 2, 2))
    d4 = np.empty((n, 2, 2, 2, 2))
    for i in range(2):
        for j in range(2):
            comp = H[..., i, j]
            for k in range(2):
                d3[:, i, j, k] = plan.first(comp, dx, k)[m]
            s0, s1, mx = plan.second(comp, dx, 0)[m], plan.second(comp, dx, 1)[m], plan.mixed(comp, dx)[m]
            d4[:, i, j, 0, 0] = s0
            d4[:, i, j, 1, 1] = s1
            d4[:, i, j, 0, 1] = d4[:, i, j, 1, 0] = mx
    d3 += canonical_third(md.grid.polytope, pts)
    d4 += canonical_fourth(md.grid.polytope, pts)
    return d3, d4


def _four_metric(Gu, Gd, d3, d4):
    """Metric, first and second coordinate derivatives of the 4-metric.

    Index layout: ``g[a, b]``, ``dg[c, a, b] = d_c g_ab``,
    ``ddg[c, d, a, b] = d_c d_d g_ab``; only ``c, d in {0, 1}`` are nonzero.
    """
    n = Gu.shape[0]
    g = np.zeros((n, 4, 4))
    g[:, :2, :2] = Gu
    g[:, 2:, 2:] = Gd
    dGu = np.moveaxis(d3, -1, 1)  # [k, i, j]
    dGd = -np.einsum("nij,nkjl,nlm->nkim", Gd, dGu, Gd)
    ddGu = np.moveaxis(d4, (-2, -1), (1, 2))  # [k, m, i, j]
    A = np.einsum("nij,nkjl->nkil", Gd, dGu)  # Gd dGu_k
    ddGd = (
        np.einsum("nmij,nkjl,nlp->nkmip", A, A, Gd)
        + np.einsum("nkij,nmjl,nlp->nkmip", A, A, Gd)
        - np.einsum("nij,nkmjl,nlp->nkmip", Gd, ddGu, Gd)
    )
    dg = np.zeros((n, 4, 4, 4))
    dg[:, :2, :2, :2] = dGu
    dg[:, :2, 2:, 2:] = dGd
    ddg = np.zeros((n, 4, 4, 4, 4))
    ddg[:, :2, :2, :2, :2] = ddGu
    ddg[:, :2, :2, 2:, 2:] = ddGd
    return g, dg, ddg


def _riemann(g, dg, ddg):
    """All-lower Riemann tensor, Christoffels and inverse metric."""
    ginv = np.linalg.inv(g)
    # Gamma_{a,bc} = 1/2 (d_b g_ac + d_c g_ab - d_a g_bc)
    gam1 = 0.5 * (np.einsum("nbac->nabc", dg) + np.einsum("ncab->nabc", dg) - dg)
    gam = np.einsum("nad,ndbc->nabc", ginv, gam1)
    # R_iklm = 1/2 (d_k d_l g_im + d_i d_m g_kl - d_k d_m g_il - d_i d_l g_km)
    #          + g_np (G^n_kl G^p_im - G^n_km G^p_il)
    R = 0.5 * (
        np.einsum("nklim->niklm", ddg)
        + np.einsum("nimkl->niklm", ddg)
        - np.einsum("nkmil->niklm", ddg)
        - np.einsum("nilkm->niklm", ddg)
    )
    R += np.einsum("nakl,naim->niklm", gam1, gam) - np.einsum("nakm,nail->niklm", gam1, gam)
    return R, gam, ginv


def _curvature_chunk(Gu, Gd, d3, d4):
    g, dg, ddg = _four_metric(Gu, Gd, d3, d4)
    R, gam, ginv = _riemann(g, dg, ddg)
    ric = np.einsum("nil,niklm->nkm", ginv, R)
    scal = np.einsum("nkm,nkm->n", ginv, ric)
    Rup = np.einsum("nai,nbk,ncl,ndm,niklm->nabcd", ginv, ginv, ginv, ginv, R, optimize=True)
    riem2 = np.einsum("nabcd,nabcd->n", R, Rup)
    ricup = np.einsum("nai,nbk,nik->nab", ginv, ginv, ric)
    ric2 = np.einsum("nab,nab->n", ric, ricup)
    detxx = Gu[:, 0, 0] * Gu[:, 1, 1] - Gu[:, 0, 1] ** 2
    sect = R[:, 0, 1, 0, 1] / detxx
    return ric, scal, sect, (riem2 - 4 * ric2 + scal**2) / 8, g, gam


def _chunks(n, size=4096):
    for s in range(0, n, size):
        yield slice(s, min(s + size, n))


def curvature_invariants(md: MetricData, grid: Optional[PolytopeGrid] = None) -> CurvatureData:
    """Ricci scalar, constant-angle sectional curvature and Euler integrand.

    Built from the explicit 4-metric; the canonical part of every metric
    derivative is analytic, the ``h`` part comes from differencing the
    lattice Hessian of ``h``.
    """
    grid = grid or md.grid
    m = grid.interior
    Gu, Gd = md.Gup[m], md.Gdown[m]
    d3, d4 = _potential_derivatives(md)
    n = Gu.shape[0]
    scal = np.empty(n)
    sect = np.empty(n)
    euler = np.empty(n)
    ric_block = np.empty((n, 2, 2))
    for sl in _chunks(n):
        ric, s, k, e, _, _ = _curvature_chunk(Gu[sl], Gd[sl], d3[sl], d4[sl])
        scal[sl], sect[sl], euler[sl] = s, k, e
        ric_block[sl] = ric[:, 2:, 2:]

    def field(vals):
        out = np.full((grid.N, grid.N), np.nan)
        out[m] = vals
        return ScalarField(grid, out)

    block = np.full((grid.N, grid.N, 2, 2), np.nan)
    block[m] = ric_block
    return CurvatureData(grid, field(scal), field(sect), field(euler), block)


def soliton_tensor_residual(md: MetricData, xi: SolitonVector, min_distance: float) -> ScalarField:
    """Per-node max of ``|R_ab - g_ab + nabla_a nabla_b phi| / sqrt(g_aa g_bb)``.

    ``phi = xi . x`` is linear, so its covariant Hessian is
    ``-Gamma^c_ab xi_c``. Nodes closer than ``min_distance`` to an edge are
    left undefined.
    """
    grid = md.grid
    m = grid.interior & (grid.boundary_distance >= min_distance)
    mi = grid.interior
    sel = m[mi]
    Gu, Gd = md.Gup[mi][sel], md.Gdown[mi][sel]
    d3, d4 = _potential_derivatives(md)
    d3, d4 = d3[sel], d4[sel]
    xi_vec = np.array([xi.components[0], xi.components[1], 0.0, 0.0])
    out = np.empty(Gu.shape[0])
    for sl in _chunks(Gu.shape[0]):
        ric, _, _, _, g, gam = _curvature_chunk(Gu[sl], Gd[sl], d3[sl], d4[sl])
        hess_phi = -np.einsum("ncab,c->nab", gam, xi_vec)
        E = ric - g + hess_phi
        d = np.sqrt(np.einsum("naa->na", g))
        E = E / (d[:, :, None] * d[:, None, :])
        out[sl] = np.abs(E).max(axis=(1, 2))
    res = np.full((grid.N, grid.N), np.nan)
    res[m] = out
    return ScalarField(grid, res)


# -- Legendre map -----------------------------------------------------------


def _filled(grid: PolytopeGrid, v: np.ndarray) -> np.ndarray:
    """Copy of ``v`` with undefined nodes set to their nearest defined value."""
    defined = np.isfinite(v)
    _, (ii, jj) = ndimage.distance_transform_edt(~defined, return_indices=True)
    return v[ii, jj]


class LegendreMap:
    """``u(x) = grad g(x)``, normalised so the linear part of ``g_can`` drops out.

    ``grad g_can = 1/2 sum_a n_a (log l_a + 1)``; the constant
    ``1/2 sum_a n_a`` only translates ``u`` and is removed, giving
    ``u = 1/2 sum_a n_a log l_a + grad h``. The numeric gradient of ``h`` is
    interpolated with bicubic splines.
    """

    def __init__(self, p: DelzantPolytope, grid: PolytopeGrid, h: ScalarField):
        self.p, self.grid = p, grid
        g1, g2 = h.gradient()
        self._s1 = RectBivariateSpline(grid.x, grid.x, _filled(grid, g1.values))
        self._s2 = RectBivariateSpline(grid.x, grid.x, _filled(grid, g2.values))
        self._shift = 0.5 * p.normals.sum(axis=0)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not np.all(contains(self.p, x, margin=1e-12)):
            raise DomainError(f"point {x.tolist()} is not inside the polygon")
        u = canonical_gradient(self.p, x) - self._shift
        x1, x2 = x[..., 0], x[..., 1]
        u = u + np.stack([self._s1.ev(x1, x2), self._s2.ev(x1, x2)], axis=-1)
        return u

    def jacobian(self, x) -> np.ndarray:
        """``du/dx``, the symplectic Hessian ``G^{ij}`` seen through the splines."""
        x = np.asarray(x, dtype=float)
        J = canonical_hessian(self.p, x).copy()
        x1, x2 = x[..., 0], x[..., 1]
        J[..., 0, 0] += self._s1.ev(x1, x2, dx=1)
        J[..., 0, 1] += self._s1.ev(x1, x2, dy=1)
        J[..., 1, 0] += self._s2.ev(x1, x2, dx=1)
        J[..., 1, 1] += self._s2.ev(x1, x2, dy=1)
        return J

    def inverse(self, u, x0, tol=1e-13, max_iter=50) -> np.ndarray:
        """Solve ``u(x) = u`` by damped Newton from ``x0``."""
        u = np.asarray(u, dtype=float)
        x = np.asarray(x0, dtype=float).copy()
        for _ in range(max_iter):
            r = self(x) - u
            if np.max(np.abs(r)) < tol:
                return x
            step = np.linalg.solve(self.jacobian(x), r)
            t = 1.0
            while not np.all(contains(self.p, x - t * step, margin=1e-12)):
                t *= 0.5
            x = x - t * step
        return x


def legendre_map(p: DelzantPolytope, grid: PolytopeGrid, h: ScalarField, x) -> np.ndarray:
    return LegendreMap(p, grid, h)(x)


def kahler_hessian(lm: LegendreMap, x, step: float = 1e-3) -> np.ndarray:
    """``F_ij = d^2 f / du^i du^j`` at ``u(x)``, by differencing the inverse map.

    Uses ``x(u) = grad_u f``; the inverse is found independently by Newton,
    so this does not reuse ``G_ij``.
    """
    x = np.asarray(x, dtype=float)
    u0 = lm(x)
    F = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        xp = lm.inverse(u0 + e, x)
        xm = lm.inverse(u0 - e, x)
        F[:, k] = (xp - xm) / (2 * step)
    return F
