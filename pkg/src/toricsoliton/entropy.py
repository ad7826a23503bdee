"""Partition function, Perelman entropy and Gaussian density of a toric soliton.

In action-angle coordinates the Riemannian volume form is ``dx dtheta``, so

    Z(beta) = e^{-2} int_P exp(-beta xi . x) dx,
    S(beta) = log Z + beta <phi>_beta,      nu = S(1),   Theta = exp(nu),

where ``<phi>_beta`` is the ``exp(-beta phi)``-weighted mean of ``phi = xi . x``.
Nothing here depends on the metric; only the polygon and ``xi`` enter.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .polytope import DelzantPolytope, SolitonVector, gauss_rule

DIMENSION = 2
SERIES_SWITCH = 1e-3

# numerator of the dP2 closed form as a power series in s = beta alpha:
# (1 - s) e^{-s} - 2 + e^{2s} = sum_{k >= 2} ((-1)^k (1 + k) + 2^k) / k! s^k
_SERIES = np.array([((-1) ** k * (1 + k) + 2**k) / factorial(k) for k in range(2, 16)])


@dataclass(frozen=True)
class EntropyResult:
    beta: float
    Z: float
    S: float
    nu: float
    theta: float
    xi: SolitonVector
    n: int = DIMENSION

    @property
    def theta_e2(self) -> float:
        return self.theta * np.e**2


def _weights(p: DelzantPolytope, xi, beta, order):
    x, w = gauss_rule(p, order)
    phi = x @ np.asarray(xi.components if isinstance(xi, SolitonVector) else xi, dtype=float)
    return phi, w * np.exp(-beta * phi)


def partition_quadrature(p: DelzantPolytope, xi, beta: float = 1.0, order: int = 48) -> float:
    """``Z(beta)`` by Gauss quadrature on the polygon."""
    _, e = _weights(p, xi, beta, order)
    return float(np.exp(-DIMENSION) * e.sum())


def mean_potential(p: DelzantPolytope, xi, beta: float = 1.0, order: int = 48) -> float:
    """``<phi>_beta = -d log Z / d beta`` by the analytic moment integral."""
    phi, e = _weights(p, xi, beta, order)
    return float((phi * e).sum() / e.sum())


def entropy_at(p: DelzantPolytope, xi, beta: float = 1.0, order: int = 48) -> tuple[float, float]:
    """``(Z(beta), S(beta))``."""
    phi, e = _weights(p, xi, beta, order)
    Z = np.exp(-DIMENSION) * e.sum()
    return float(Z), float(np.log(Z) + beta * (phi * e).sum() / e.sum())


def partition_closed_dp2(alpha: float, beta: float = 1.0) -> float:
    """Closed form of ``Z(beta)`` on dP2 for ``phi = alpha (x1 + x2)``.

    Below ``|beta alpha| = 1e-3`` the cancelling numerator is replaced by its
    Taylor series, which keeps full relative accuracy down to ``s = 0``.
    """
    s = beta * alpha
    if abs(s) < SERIES_SWITCH:
        ratio = np.polynomial.polynomial.polyval(s, _SERIES)
    else:
        ratio = ((1 - s) * np.exp(-s) - 2 + np.exp(2 * s)) / s**2
    return float(ratio * np.exp(-2.0))


def nu_closed_dp2(alpha: float) -> float:
    """Closed form of the entropy on dP2 at ``beta = 1``."""
    if alpha == 0.0:
        return float(np.log(3.5) - 2.0)
    ea, e3a = np.exp(alpha), np.exp(3 * alpha)
    den = 1 - alpha - 2 * ea + e3a
    return float(alpha * (1 + 2 * ea - 3 * e3a) / den + np.log(den / alpha**2))


def entropy_nu(p: DelzantPolytope, xi: SolitonVector, order: int = 48) -> EntropyResult:
    Z, S = entropy_at(p, xi, 1.0, order)
    return EntropyResult(beta=1.0, Z=Z, S=S, nu=S, theta=float(np.exp(S)), xi=xi)


def beta_sweep(p: DelzantPolytope, xi: SolitonVector, betas, order: int = 48) -> np.ndarray:
    """Rows ``(beta, Z, S)``."""
    return np.array([(b, *entropy_at(p, xi, b, order)) for b in betas])
