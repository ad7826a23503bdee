"""Uniform lattice over a polygon, finite differences and cut-cell quadrature.

Fields are plain ``(N, N)`` float arrays indexed ``[i, j]`` with
``x1 = x[i]`` and ``x2 = x[j]``; undefined nodes hold ``nan``. The grid always
covers a square box so that transposing an array is exactly the ``x1 <-> x2``
reflection. Stencils are written so that this reflection commutes with every
operator bitwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .polytope import DelzantPolytope, edge_values

N_MIN, N_MAX = 16, 512
EDGE_TIE = 1e-12


@dataclass(frozen=True, eq=False)
class PolytopeGrid:
    polytope: DelzantPolytope
    N: int
    lo: float = field(init=False)
    dx: float = field(init=False)

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or not N_MIN <= self.N <= N_MAX:
            raise ConfigurationError(f"resolution N={self.N} outside [{N_MIN}, {N_MAX}]")
        bmin, bmax = self.polytope.bounding_box()
        lo, hi = float(min(bmin)), float(max(bmax))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "dx", (hi - lo) / (self.N - 1))

    @cached_property
    def x(self) -> np.ndarray:
        return self.lo + self.dx * np.arange(self.N)

    @cached_property
    def X1(self) -> np.ndarray:
        return np.ascontiguousarray(np.broadcast_to(self.x[:, None], (self.N, self.N)))

    @cached_property
    def X2(self) -> np.ndarray:
        return np.ascontiguousarray(self.X1.T)

    @cached_property
    def points(self) -> np.ndarray:
        return np.stack([self.X1, self.X2], axis=-1)

    @cached_property
    def edge_values(self) -> np.ndarray:
        return edge_values(self.polytope, self.points)

    @cached_property
    def inside(self) -> np.ndarray:
        """Strictly interior nodes; nodes on an edge (within 1e-12) count as exterior."""
        return np.all(self.edge_values > EDGE_TIE, axis=-1)

    @cached_property
    def interior(self) -> np.ndarray:
        """Inside nodes on which first and second derivatives can be formed.

        A handful of nodes wedged into acute corners have too few neighbours
        for any second-order stencil; they are dropped from the lattice.
        """
        mask = self.inside.copy()
        while True:
            ok = stencil_plan(mask, self.cross_sign).complete
            if np.array_equal(ok, mask):
                return mask
            mask = ok

    @cached_property
    def cross_sign(self) -> np.ndarray:
        """Sign of the off-diagonal canonical Hessian ``1/2 sum n1 n2 / l`` per node."""
        l = np.where(self.inside[..., None], self.edge_values, 1.0)
        n = self.polytope.normals
        off = np.sort(n[:, 0] * n[:, 1] / l, axis=-1).sum(axis=-1)
        return np.where(self.inside, np.sign(off), 0).astype(np.int8)

    @cached_property
    def plan(self) -> "StencilPlan":
        """Stencils for fields defined on the whole interior."""
        return stencil_plan(self.interior, self.cross_sign)

    def plan_for(self, values: np.ndarray) -> "StencilPlan":
        defined = np.isfinite(values)
        if np.array_equal(defined, self.interior):
            return self.plan
        return stencil_plan(defined)

    @cached_property
    def near_boundary(self) -> np.ndarray:
        m = self.interior
        return m & ~_available(m, [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)])

    @cached_property
    def exterior(self) -> np.ndarray:
        return ~self.interior

    @cached_property
    def boundary_distance(self) -> np.ndarray:
        """Euclidean distance of each node to the polygon boundary (0 outside)."""
        n = self.polytope.normals
        d = self.edge_values / np.linalg.norm(n, axis=1)
        return np.where(self.inside, d.min(axis=-1), 0.0)

    @cached_property
    def cell_weights(self) -> np.ndarray:
        """Area of each node's dual cell intersected with the polygon."""
        w = _cut_cell_weights(self)
        if self.polytope.is_swap_symmetric():
            # clipping order differs between mirror cells; make the weights bitwise symmetric
            w = 0.5 * (w + w.T)
        return w

    def field(self, values) -> "ScalarField":
        return ScalarField(self, np.where(self.interior, values, np.nan))

    def sample(self, fn) -> "ScalarField":
        """Evaluate ``fn(x1, x2)`` at interior nodes."""
        out = np.full((self.N, self.N), np.nan)
        m = self.interior
        out[m] = fn(self.X1[m], self.X2[m])
        return ScalarField(self, out)

    def zeros(self) -> "ScalarField":
        return self.field(0.0)

    @property
    def interior_fraction(self) -> float:
        return float(self.interior.mean())


@dataclass(eq=False)
class ScalarField:
    grid: PolytopeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.N, self.grid.N):
            raise ValueError(f"field shape {v.shape} does not match grid N={self.grid.N}")
        self.values = v

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)

    def gradient(self) -> tuple["ScalarField", "ScalarField"]:
        plan, dx = self.grid.plan_for(self.values), self.grid.dx
        return ScalarField(self.grid, plan.first(self.values, dx, 0)), ScalarField(self.grid, plan.first(self.values, dx, 1))

    def hessian(self) -> np.ndarray:
        return plan_hessian(self.grid.plan_for(self.values), self.values, self.grid.dx)

    def integrate(self) -> float:
        return integrate(self.grid, self.values)

    def transpose(self) -> "ScalarField":
        return ScalarField(self.grid, np.ascontiguousarray(self.values.T))

    def __add__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - o)

    def __mul__(self, k):
        return ScalarField(self.grid, self.values * k)

    __rmul__ = __mul__


def build_grid(p: DelzantPolytope, N: int) -> PolytopeGrid:
    g = PolytopeGrid(p, N)
    if not g.interior.any():
        raise ConfigurationError(f"no interior nodes for {p.name} at N={N}")
    return g


# -- stencils ---------------------------------------------------------------
#
# A StencilPlan fixes, per node, the weights of every derivative operator for a
# given mask of defined nodes: centered where the neighbours exist, otherwise
# one-sided second order. Mixed derivatives use tensor products of the 1-D
# first-derivative stencils (averaged over the admissible choices of the
# lowest tier), which keeps them second order next to the boundary.

_D1 = {
    "c": {-1: -0.5, 1: 0.5},
    "f": {0: -1.5, 1: 2.0, 2: -0.5},
    "b": {-2: 0.5, -1: -2.0, 0: 1.5},
}
_D2 = {
    "c": {-1: 1.0, 0: -2.0, 1: 1.0},
    "f": {0: 2.0, 1: -5.0, 2: 4.0, 3: -1.0},
    "b": {0: 2.0, -1: -5.0, -2: 4.0, -3: -1.0},
}
_PAD = 3
_MIXED_TIERS = (
    (("c", "c"),),
    (("c", "f"), ("c", "b"), ("f", "c"), ("b", "c")),
    (("f", "f"), ("f", "b"), ("b", "f"), ("b", "b")),
)


def _shift_mask(m, di, dj):
    n = m.shape[0]
    pad = np.pad(m, _PAD, constant_values=False)
    return pad[_PAD + di : _PAD + di + n, _PAD + dj : _PAD + dj + n]


def _available(m, offsets):
    ok = m.copy()
    for a, b in offsets:
        ok &= _shift_mask(m, a, b)
    return ok


def _first_choice(m, stencils, axis):
    """Weights ``{offset: array}`` picking c, then f, then b per node."""
    taken = np.zeros_like(m)
    weights = {}
    for kind in ("c", "f", "b"):
        st = stencils[kind]
        offs = [(k, 0) if axis == 0 else (0, k) for k in st]
        ok = _available(m, offs) & ~taken
        for k, w in st.items():
            weights[k] = weights.get(k, 0.0) + np.where(ok, w, 0.0)
        taken |= ok
    return weights, taken


def _line_choice(m, stencils, e):
    """Like :func:`_first_choice` along the lattice direction ``e``."""
    taken = np.zeros_like(m)
    weights = {}
    for kind in ("c", "f", "b"):
        st = stencils[kind]
        offs = [(k * e[0], k * e[1]) for k in st]
        ok = _available(m, offs) & ~taken
        for k, w in st.items():
            key = (k * e[0], k * e[1])
            weights[key] = weights.get(key, 0.0) + np.where(ok, w, 0.0)
        taken |= ok
    return weights, taken


@dataclass(eq=False)
class StencilPlan:
    mask: np.ndarray
    d1: tuple
    d2: tuple
    d12: dict
    ok1: tuple
    ok2: tuple
    ok12: np.ndarray

    @classmethod
    def build(cls, mask: np.ndarray, cross_sign: Optional[np.ndarray] = None) -> "StencilPlan":
        """Stencil weights for ``mask``.

        ``cross_sign`` (per node, +1/-1/0) selects how the cross derivative is
        formed. With +1 it is ``(D_11 + D_22 - D_(1,-1)) / 2`` and with -1
        ``(D_(1,1) - D_11 - D_22) / 2``, where ``D_e`` is the second difference
        along the lattice direction ``e``. Choosing the sign of the off-diagonal
        symplectic Hessian makes ``tr(G_ij d^2 h)`` a nonnegative combination of
        directional second differences whenever ``G_ij`` is diagonally dominant,
        and uses the edge-tangent diagonal next to slanted edges. Nodes with 0,
        or whose diagonal stencil is missing, use the tensor-product stencil.
        """
        m = np.asarray(mask, dtype=bool)
        d1, ok1, d2, ok2 = [], [], [], []
        for axis in (0, 1):
            w, ok = _first_choice(m, _D1, axis)
            d1.append(w)
            ok1.append(ok & m)
            w, ok = _first_choice(m, _D2, axis)
            d2.append(w)
            ok2.append(ok & m)
        d12: dict = {}
        taken = np.zeros_like(m)
        if cross_sign is not None:
            both = ok2[0] & ok2[1]
            for sgn, e in ((1, (1, -1)), (-1, (1, 1))):
                wd, okd = _line_choice(m, _D2, e)
                use = (cross_sign == sgn) & okd & both
                # +1: (D_x1 + D_x2 - D_e) / 2 ;  -1: (D_e - D_x1 - D_x2) / 2
                for k, w in d2[0].items():
                    d12[(k, 0)] = d12.get((k, 0), 0.0) + np.where(use, 0.5 * sgn * w, 0.0)
                for k, w in d2[1].items():
                    d12[(0, k)] = d12.get((0, k), 0.0) + np.where(use, 0.5 * sgn * w, 0.0)
                for off, w in wd.items():
                    d12[off] = d12.get(off, 0.0) + np.where(use, -0.5 * sgn * w, 0.0)
                taken |= use
        for tier in _MIXED_TIERS:
            oks = []
            for S, T in tier:
                offs = [(a, b) for a in _D1[S] for b in _D1[T]]
                oks.append(_available(m, offs) & ~taken)
            count = np.sum(oks, axis=0)
            for (S, T), ok in zip(tier, oks):
                share = np.where(ok, 1.0 / np.maximum(count, 1), 0.0)
                for a, wa in _D1[S].items():
                    for b, wb in _D1[T].items():
                        d12[(a, b)] = d12.get((a, b), 0.0) + share * (wa * wb)
            taken |= count > 0
        return cls(m, tuple(d1), tuple(d2), d12, tuple(ok1), tuple(ok2), taken & m)

    @property
    def complete(self) -> np.ndarray:
        """Nodes where every operator has a stencil."""
        return self.ok1[0] & self.ok1[1] & self.ok2[0] & self.ok2[1] & self.ok12

    def _padded(self, v):
        return np.pad(np.where(self.mask, v, 0.0), _PAD)

    def _view(self, vp, a, b):
        n = self.mask.shape[0]
        return vp[_PAD + a : _PAD + a + n, _PAD + b : _PAD + b + n]

    def _apply_axis(self, v, weights, axis, ok, scale):
        vp = self._padded(v)
        out = np.zeros(self.mask.shape)
        for k in sorted(weights):
            a, b = (k, 0) if axis == 0 else (0, k)
            out += weights[k] * self._view(vp, a, b)
        return np.where(ok, out / scale, np.nan)

    def first(self, v, dx, axis):
        return self._apply_axis(v, self.d1[axis], axis, self.ok1[axis], dx)

    def second(self, v, dx, axis):
        return self._apply_axis(v, self.d2[axis], axis, self.ok2[axis], dx * dx)

    def mixed(self, v, dx):
        vp = self._padded(v)
        out = np.zeros(self.mask.shape)
        for a, b in sorted(self.d12):
            if a > b:
                continue
            term = self.d12[(a, b)] * self._view(vp, a, b)
            if a != b:
                # pair (a, b) with its mirror so the reflection maps the sum onto itself
                term = term + self.d12[(b, a)] * self._view(vp, b, a)
            out += term
        return np.where(self.ok12, out / (dx * dx), np.nan)


_PLANS: dict = {}


def stencil_plan(mask: np.ndarray, cross_sign: Optional[np.ndarray] = None) -> StencilPlan:
    key = (mask.shape, mask.tobytes(), None if cross_sign is None else cross_sign.tobytes())
    plan = _PLANS.get(key)
    if plan is None:
        if len(_PLANS) > 64:
            _PLANS.clear()
        plan = _PLANS[key] = StencilPlan.build(mask, cross_sign)
    return plan


def gradient(v: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    plan = stencil_plan(np.isfinite(v))
    return plan.first(v, dx, 0), plan.first(v, dx, 1)


def first_derivative(v: np.ndarray, dx: float, axis: int) -> np.ndarray:
    return stencil_plan(np.isfinite(v)).first(v, dx, axis)


def second_derivative(v: np.ndarray, dx: float, axis: int) -> np.ndarray:
    return stencil_plan(np.isfinite(v)).second(v, dx, axis)


def mixed_derivative(v: np.ndarray, dx: float) -> np.ndarray:
    return stencil_plan(np.isfinite(v)).mixed(v, dx)


def hessian(v: np.ndarray, dx: float) -> np.ndarray:
    """``(N, N, 2, 2)`` array of second derivatives (tensor-product cross stencil)."""
    return plan_hessian(stencil_plan(np.isfinite(v)), v, dx)


def plan_hessian(plan: StencilPlan, v: np.ndarray, dx: float) -> np.ndarray:
    h11 = plan.second(v, dx, 0)
    h22 = plan.second(v, dx, 1)
    h12 = plan.mixed(v, dx)
    return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)


# -- quadrature -------------------------------------------------------------


def _clip(poly, n, c):
    """Sutherland-Hodgman clip of a convex polygon by ``c + n . x >= 0``."""
    out = []
    k = len(poly)
    for idx in range(k):
        P, Q = poly[idx], poly[(idx + 1) % k]
        fp, fq = c + n @ P, c + n @ Q
        if fp >= 0:
            out.append(P)
        if (fp >= 0) != (fq >= 0):
            t = fp / (fp - fq)
            out.append(P + t * (Q - P))
    return out


def _polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    v = np.array(poly)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


def _cut_cell_weights(grid: PolytopeGrid) -> np.ndarray:
    p = grid.polytope
    h = grid.dx / 2
    corners = [(-h, -h), (h, -h), (h, h), (-h, h)]
    cl = np.stack([edge_values(p, grid.points + np.array(c)) for c in corners])
    full = np.all(cl >= 0, axis=(0, -1))
    empty = np.any(np.all(cl <= 0, axis=0), axis=-1)
    w = np.where(full, grid.dx**2, 0.0)
    for i, j in zip(*np.nonzero(~full & ~empty)):
        ctr = grid.points[i, j]
        poly = [ctr + np.array(c) for c in corners]
        for n, c in zip(p.normals, p.offsets):
            poly = _clip(poly, n, c)
            if not poly:
                break
        w[i, j] = _polygon_area(poly)
    return w


def _lump(w, defined):
    orphan = (w > 0) & ~defined
    out = np.where(defined, w, 0.0)
    if orphan.any():
        _, (ii, jj) = ndimage.distance_transform_edt(~defined, return_indices=True)
        np.add.at(out, (ii[orphan], jj[orphan]), w[orphan])
    return out


def lumped_weights(grid: PolytopeGrid, defined: np.ndarray) -> np.ndarray:
    """Cut-cell weights with each undefined node's share moved to its nearest defined node.

    Nearest-node ties are broken by the distance transform in an
    orientation-dependent way, so the lumping is averaged with its mirror
    image; for a reflection-symmetric mask the weights are then symmetric.
    """
    w = grid.cell_weights
    return 0.5 * (_lump(w, defined) + _lump(w.T, defined.T).T)


def integrate(grid: PolytopeGrid, values: np.ndarray) -> float:
    """Cut-cell midpoint quadrature over the polygon.

    The reduction runs over ``F + F.T`` (same total, fixed order) so the result
    is reproducible and respects the ``x1 <-> x2`` reflection.
    """
    defined = np.isfinite(values)
    w = lumped_weights(grid, defined)
    F = np.where(w > 0, w * np.where(defined, values, 0.0), 0.0)
    return 0.5 * float(np.sum(F + F.T))


def symmetric_sum(F: np.ndarray) -> float:
    return 0.5 * float(np.sum(F + F.T))
