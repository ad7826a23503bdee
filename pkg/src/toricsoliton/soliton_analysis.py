"""Post-convergence analysis of a flow state.

Three independent handles on the soliton vector live here: the quartic fit
of the converged potential, the tensor-level check of
``R_ab = g_ab - nabla_a nabla_b phi`` on the 4-metric, and a PDE-free oracle
that solves the first-moment condition ``int_P x exp(-xi . x) dx = 0``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, NumericalError
from .flow import gauge_project
from .geometry import curvature_invariants, flow_driver, metric_from_potential, soliton_tensor_residual
from .grid import PolytopeGrid, ScalarField
from .polytope import DelzantPolytope, SolitonVector, canonical_hessian, gauss_rule

QUARTIC_TERMS = (
    "x1*x2",
    "x1^2+x2^2",
    "x1*x2*(x1+x2)",
    "x1^3+x2^3",
    "x1^2*x2^2",
    "x1*x2*(x1^2+x2^2)",
    "x1^4+x2^4",
)


class StaleAnalysisWarning(UserWarning):
    """Analysis was run on a state that has not converged."""


def quartic_basis(x1, x2) -> np.ndarray:
    """The seven swap-symmetric monomial combinations, stacked on the last axis."""
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    return np.stack(
        [
            x1 * x2,
            x1**2 + x2**2,
            x1 * x2 * (x1 + x2),
            x1**3 + x2**3,
            x1**2 * x2**2,
            x1 * x2 * (x1**2 + x2**2),
            x1**4 + x2**4,
        ],
        axis=-1,
    )


def quartic_basis_hessian(x1, x2) -> np.ndarray:
    """Hessians of the basis terms, shape ``(..., 7, 2, 2)``."""
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    z, one = np.zeros_like(x1), np.ones_like(x1)
    h11 = [z, 2 * one, 2 * x2, 6 * x1, 2 * x2**2, 6 * x1 * x2, 12 * x1**2]
    h22 = [z, 2 * one, 2 * x1, 6 * x2, 2 * x1**2, 6 * x1 * x2, 12 * x2**2]
    h12 = [one, z, 2 * (x1 + x2), z, 4 * x1 * x2, 3 * (x1**2 + x2**2), z]
    H11, H22, H12 = (np.stack(v, axis=-1) for v in (h11, h22, h12))
    return np.stack([np.stack([H11, H12], -1), np.stack([H12, H22], -1)], -2)


@dataclass
class QuarticFit:
    coefficients: tuple
    gauge: tuple
    rms_error: float
    max_metric_error: float
    max_inverse_metric_error: float = float("nan")
    max_relative_metric_error: float = float("nan")
    stale: bool = False
    notes: list = field(default_factory=list)

    def potential(self, x1, x2) -> np.ndarray:
        c0, c1 = self.gauge
        return quartic_basis(x1, x2) @ np.asarray(self.coefficients) + c0 + c1 * (np.asarray(x1) + np.asarray(x2))

    def hessian(self, x1, x2) -> np.ndarray:
        return np.einsum("...kij,k->...ij", quartic_basis_hessian(x1, x2), np.asarray(self.coefficients))

    def table(self) -> list[tuple[str, float]]:
        return list(zip(QUARTIC_TERMS, self.coefficients))


def fit_quartic(
    p: DelzantPolytope, grid: PolytopeGrid, h: ScalarField, converged: Optional[bool] = True
) -> QuarticFit:
    """Uniform-weight least squares of ``h`` on the symmetric quartic basis.

    The gauge span ``{1, x1 + x2}`` is fitted alongside and reported
    separately. ``max_metric_error`` is the sup over interior nodes of the
    componentwise difference between the fitted and the lattice Hessian of
    ``h`` (the canonical part of ``G^{ij}`` is common to both). The same
    misfit measured on ``G_ij`` and relative to ``max |G^{ij}|`` per node is
    also reported.
    """
    m = grid.interior
    x1, x2 = grid.X1[m], grid.X2[m]
    B = np.concatenate([quartic_basis(x1, x2), np.stack([np.ones_like(x1), x1 + x2], -1)], axis=1)
    y = h.values[m]
    coef, *_ = np.linalg.lstsq(B, y, rcond=None)
    rms = float(np.sqrt(np.mean((B @ coef - y) ** 2)))
    fit = QuarticFit(tuple(float(c) for c in coef[:7]), (float(coef[7]), float(coef[8])), rms, 0.0)
    H = h.hessian()[m]
    Hf = fit.hessian(x1, x2)
    fit.max_metric_error = float(np.max(np.abs(Hf - H)))
    # secondary views of the same misfit: the inverse block G_ij, and G^ij relative to its local size
    Gc = canonical_hessian(p, grid.points[m])
    G_num, G_fit = Gc + H, Gc + Hf
    fit.max_inverse_metric_error = float(np.max(np.abs(np.linalg.inv(G_fit) - np.linalg.inv(G_num))))
    scale = np.abs(G_num).max(axis=(1, 2))
    fit.max_relative_metric_error = float(np.max(np.abs(Hf - H).max(axis=(1, 2)) / scale))
    if not p.is_swap_symmetric():
        fit.notes.append("polygon is not swap symmetric; the symmetric basis cannot be exact")
    if not converged:
        fit.stale = True
        fit.notes.append("input state has not converged")
        warnings.warn("quartic fit of a non-converged state", StaleAnalysisWarning, stacklevel=2)
    return fit


# -- moment-condition oracle ------------------------------------------------


def _moments(x, w, xi):
    e = w * np.exp(-(x @ xi))
    z = e.sum()
    m1 = x.T @ e
    m2 = (x * e[:, None]).T @ x
    return z, m1, m2


def moment_alpha(p: DelzantPolytope, order: int = 48, force: bool = False, max_iter: int = 100) -> SolitonVector:
    """Solve ``int_P x exp(-xi . x) dx = 0`` for ``xi``.

    The left side is minus the gradient of the strictly convex
    ``Z(xi) = int_P exp(-xi . x) dx``, so the root is its unique minimiser.
    Swap-symmetric polygons reduce to a scalar root find for ``xi = (a, a)``;
    otherwise damped Newton with backtracking on ``log Z`` is used.
    """
    if not p.anticanonical and not force:
        raise ConfigurationError(f"polygon {p.name!r} has offsets != 1; the moment normalisation does not apply")
    x, w = gauss_rule(p, order)
    if p.is_swap_symmetric():
        s = x[:, 0] + x[:, 1]

        def M(a):
            return float(np.sum(w * s * np.exp(-a * s)))

        m0 = M(0.0)
        if m0 == 0.0 or abs(m0) < 1e-14 * float(np.sum(w * np.abs(s))):
            return SolitonVector((0.0, 0.0))
        # M is strictly decreasing, so the root has the sign of M(0)
        lo, hi = (0.0, 1.0) if m0 > 0 else (-1.0, 0.0)
        while M(lo) * M(hi) > 0:
            lo, hi = (lo, 2 * hi) if m0 > 0 else (2 * lo, hi)
            if max(abs(lo), abs(hi)) > 1e3:
                raise NumericalError("could not bracket the moment condition")
        a = brentq(M, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=max_iter)
        if np.sign(a) != np.sign(m0):
            raise AssertionError("soliton coefficient has the wrong sign relative to the barycenter")
        return SolitonVector.symmetric(a)

    xi = np.zeros(2)
    z, m1, m2 = _moments(x, w, xi)
    for _ in range(max_iter):
        grad = -m1 / z
        if np.max(np.abs(grad)) < 1e-14:
            return SolitonVector((float(xi[0]), float(xi[1])))
        hess = m2 / z - np.outer(m1, m1) / z**2
        step = np.linalg.solve(hess, -grad)
        t = 1.0
        while True:
            zn, m1n, m2n = _moments(x, w, xi + t * step)
            if np.log(zn) <= np.log(z) + 1e-4 * t * grad @ step or t < 1e-10:
                break
            t *= 0.5
        xi = xi + t * step
        z, m1, m2 = zn, m1n, m2n
    raise NumericalError(f"moment condition did not converge in {max_iter} Newton iterations")


# -- tensor and topological checks ------------------------------------------


def verify_soliton_tensor(
    p: DelzantPolytope, grid: PolytopeGrid, h: ScalarField, xi: SolitonVector, min_distance: Optional[float] = None
) -> float:
    """Sup over nodes at least ``min_distance`` (default ``3 dx``) inside of the normalised soliton residual."""
    if min_distance is None:
        min_distance = 3 * grid.dx
    if not isinstance(xi, SolitonVector):
        xi = SolitonVector(tuple(float(v) for v in xi))
    md = metric_from_potential(p, grid, h)
    res = soliton_tensor_residual(md, xi, min_distance)
    return float(np.nanmax(res.values))


def euler_characteristic_check(p: DelzantPolytope, grid: PolytopeGrid, h: ScalarField) -> float:
    """Integral of the Euler density; compare with the vertex count."""
    md = metric_from_potential(p, grid, h)
    return curvature_invariants(md).euler_integrand.integrate()


def driver_alpha(p: DelzantPolytope, grid: PolytopeGrid, h: ScalarField) -> SolitonVector:
    """Soliton vector from a least-squares fit of the flow driver to ``-(c + xi . x)/2``."""
    _, a, _ = gauge_project(flow_driver(p, grid, h), grid)
    return SolitonVector(a)


def richardson(resolutions, values, order: float = 2.0) -> float:
    """Extrapolate ``values(N)`` to ``N -> oo`` assuming an ``O(N^-order)`` error.

    With more than two resolutions the constant and the error coefficient are
    fitted by least squares.
    """
    N = np.asarray(resolutions, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(N) < 2:
        raise ValueError("need at least two resolutions")
    A = np.stack([np.ones_like(N), (N - 1.0) ** -order], axis=1)
    sol, *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(sol[0])
