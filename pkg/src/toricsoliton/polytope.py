"""Delzant polygons of toric surfaces and the Guillemin canonical potential.

A polygon is stored as its edge functions ``l_a(x) = c_a + n_a . x`` with
primitive integer inward normals ``n_a``. Vertices are derived on demand.

Every per-edge sum in this module is reduced after sorting the terms, so the
result is independent of edge order. For a polygon symmetric under
``x1 <-> x2`` this makes the canonical quantities bitwise symmetric, which the
flow relies on to keep the potential exactly symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

BUILTIN_SURFACES = ("CP2", "dP1", "dP2", "dP3")

_TIE = 1e-12


@dataclass(frozen=True)
class Edge:
    normal: tuple[int, int]
    offset: float = 1.0

    def __post_init__(self):
        n1, n2 = (int(v) for v in self.normal)
        if (n1, n2) == (0, 0) or gcd(n1, n2) != 1:
            raise ConfigurationError(f"edge normal {self.normal} is not a primitive lattice vector")
        object.__setattr__(self, "normal", (n1, n2))
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True)
class SolitonVector:
    """Soliton vector field in symplectic coordinates, ``phi(x) = xi . x``."""

    components: tuple[float, float]

    @property
    def alpha(self) -> float:
        return self.components[0]

    def phi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.components[0] * x[..., 0] + self.components[1] * x[..., 1]

    @classmethod
    def symmetric(cls, alpha: float) -> "SolitonVector":
        return cls((float(alpha), float(alpha)))


@dataclass(frozen=True)
class DelzantPolytope:
    edges: tuple[Edge, ...]
    name: str = "user"
    normals: np.ndarray = field(init=False, repr=False, compare=False)
    offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = tuple(e if isinstance(e, Edge) else Edge(*e) for e in self.edges)
        if len(edges) < 3:
            raise ConfigurationError("a polygon needs at least three edges")
        object.__setattr__(self, "edges", edges)
        normals = np.array([e.normal for e in edges], dtype=float)
        offsets = np.array([e.offset for e in edges], dtype=float)
        normals.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)
        verts = self.vertices()
        if len(verts) != len(edges):
            raise ConfigurationError(
                f"polygon {self.name!r} has {len(verts)} vertices for {len(edges)} edges; "
                "interior must be nonempty and bounded with every edge active"
            )

    @classmethod
    def from_records(cls, records: Sequence[dict], name: str = "user") -> "DelzantPolytope":
        """Build from ``[{"normal": [n1, n2], "offset": c}, ...]`` records."""
        try:
            edges = tuple(Edge(tuple(r["normal"]), r.get("offset", 1.0)) for r in records)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed edge record: {exc}") from exc
        return cls(edges, name=name)

    def to_records(self) -> list[dict]:
        return [{"normal": list(e.normal), "offset": e.offset} for e in self.edges]

    @property
    def anticanonical(self) -> bool:
        return bool(np.all(self.offsets == 1.0))

    def vertices(self) -> np.ndarray:
        """Vertices in counter-clockwise order."""
        pts = []
        m = len(self.edges)
        for a in range(m):
            for b in range(a + 1, m):
                A = self.normals[[a, b]]
                if abs(np.linalg.det(A)) < 1e-12:
                    continue
                v = np.linalg.solve(A, -self.offsets[[a, b]])
                if np.all(self.offsets + self.normals @ v >= -1e-9):
                    if not any(np.allclose(v, p, atol=1e-9) for p in pts):
                        pts.append(v)
        if len(pts) < 3:
            return np.zeros((len(pts), 2))
        pts = np.array(pts)
        c = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
        return pts[order]

    def area(self) -> float:
        v = self.vertices()
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices()
        return v.min(axis=0), v.max(axis=0)

    def is_delzant(self) -> bool:
        for v in self.vertices():
            active = np.flatnonzero(np.abs(self.offsets + self.normals @ v) < 1e-9)
            if len(active) != 2:
                return False
            det = np.linalg.det(self.normals[active])
            if abs(abs(det) - 1.0) > 1e-9:
                return False
        return True

    def is_swap_symmetric(self) -> bool:
        """True if the edge set is invariant under ``x1 <-> x2``."""
        own = {(e.normal, e.offset) for e in self.edges}
        swapped = {((e.normal[1], e.normal[0]), e.offset) for e in self.edges}
        return own == swapped

    def vertex_angles(self) -> np.ndarray:
        """Interior angle (radians) at each vertex, in vertex order."""
        v = self.vertices()
        a = np.roll(v, 1, axis=0) - v
        b = np.roll(v, -1, axis=0) - v
        cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        return np.arccos(np.clip(cos, -1.0, 1.0))

    @property
    def euler_characteristic(self) -> int:
        return len(self.edges)

    def barycenter(self) -> np.ndarray:
        v = self.vertices()
        x, y = v[:, 0], v[:, 1]
        cross = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = 0.5 * cross.sum()
        cx = np.sum((x + np.roll(x, -1)) * cross) / (6 * a)
        cy = np.sum((y + np.roll(y, -1)) * cross) / (6 * a)
        return np.array([cx, cy])


def builtin_surface(name: str) -> DelzantPolytope:
    """Anticanonical polygon of CP2, dP1, dP2 or dP3."""
    catalog = {
        "CP2": [(1, 0), (0, 1), (-1, -1)],
        "dP1": [(-1, -1), (1, 0), (0, 1), (1, 1)],
        "dP2": [(-1, -1), (1, 0), (-1, 0), (0, 1), (0, -1)],
        "dP3": [(-1, -1), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1)],
    }
    if name not in catalog:
        raise ConfigurationError(f"unknown surface {name!r}; choose from {', '.join(BUILTIN_SURFACES)}")
    return DelzantPolytope(tuple(Edge(n, 1.0) for n in catalog[name]), name=name)


def edge_values(p: DelzantPolytope, x) -> np.ndarray:
    """``l_a(x)`` for every edge, stacked on the last axis."""
    x = np.asarray(x, dtype=float)
    # grouped so that swapping x1, x2 with the normals gives bitwise-equal values
    return p.offsets + (x[..., :1] * p.normals[:, 0] + x[..., 1:2] * p.normals[:, 1])


def contains(p: DelzantPolytope, x, margin: float = 0.0):
    l = edge_values(p, x)
    return np.all(l >= margin, axis=-1)


def _interior_edges(p, x):
    l = edge_values(p, x)
    if np.any(l <= _TIE):
        raise DomainError("canonical potential is only defined strictly inside the polygon")
    return l


def _sorted_sum(terms):
    return np.sort(terms, axis=-1).sum(axis=-1)


def canonical_potential(p: DelzantPolytope, x):
    """Guillemin potential ``1/2 sum_a l_a log l_a``."""
    l = _interior_edges(p, x)
    return 0.5 * _sorted_sum(l * np.log(l))


def canonical_gradient(p: DelzantPolytope, x) -> np.ndarray:
    l = _interior_edges(p, x)
    t = np.log(l) + 1.0
    g1 = 0.5 * _sorted_sum(p.normals[:, 0] * t)
    g2 = 0.5 * _sorted_sum(p.normals[:, 1] * t)
    return np.stack([g1, g2], axis=-1)


def canonical_hessian(p: DelzantPolytope, x) -> np.ndarray:
    """``1/2 sum_a n_a n_a^T / l_a`` as a ``(..., 2, 2)`` array."""
    l = _interior_edges(p, x)
    n1, n2 = p.normals[:, 0], p.normals[:, 1]
    h11 = 0.5 * _sorted_sum(n1 * n1 / l)
    h22 = 0.5 * _sorted_sum(n2 * n2 / l)
    h12 = 0.5 * _sorted_sum(n1 * n2 / l)
    return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)


def canonical_third(p: DelzantPolytope, x) -> np.ndarray:
    """Third derivatives ``-1/2 sum_a n_i n_j n_k / l_a^2``, shape ``(..., 2, 2, 2)``."""
    l = _interior_edges(p, x)
    n = p.normals
    out = np.empty(l.shape[:-1] + (2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                out[..., i, j, k] = -0.5 * _sorted_sum(n[:, i] * n[:, j] * n[:, k] / l**2)
    return out


def canonical_fourth(p: DelzantPolytope, x) -> np.ndarray:
    """Fourth derivatives ``sum_a n_i n_j n_k n_m / l_a^3``, shape ``(..., 2, 2, 2, 2)``."""
    l = _interior_edges(p, x)
    n = p.normals
    out = np.empty(l.shape[:-1] + (2, 2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for m in range(2):
                    out[..., i, j, k, m] = _sorted_sum(n[:, i] * n[:, j] * n[:, k] * n[:, m] / l**3)
    return out


def canonical_legendre_part(p: DelzantPolytope, x):
    """``g_can - x . grad g_can``, evaluated as ``1/2 sum_a (c_a log l_a - n_a . x)``."""
    l = _interior_edges(p, x)
    x = np.asarray(x, dtype=float)
    nx = x[..., :1] * p.normals[:, 0] + x[..., 1:2] * p.normals[:, 1]
    return 0.5 * _sorted_sum(p.offsets * np.log(l) - nx)


def gauss_rule(p: DelzantPolytope, order: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule on the fan of triangles from the barycenter.

    Each triangle is the image of the unit square under the collapsed
    (Duffy) map, so the rule integrates polynomials of degree ``2 order - 2``
    exactly and smooth integrands such as ``exp(-xi . x)`` to roundoff.
    Returns ``(points, weights)`` with ``points`` of shape ``(n, 2)``.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    s, r = np.meshgrid(t, t, indexing="ij")
    ws = np.outer(w, w)
    c = p.barycenter()
    verts = p.vertices()
    pts, wts = [], []
    for k in range(len(verts)):
        a, b = verts[k], verts[(k + 1) % len(verts)]
        e1, e2 = a - c, b - c
        jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
        # (s, r) -> c + s e1 + s r (e2 - e1) covers the triangle with Jacobian s |e1 x e2|
        P = c + s[..., None] * (e1 + r[..., None] * (e2 - e1))
        pts.append(P.reshape(-1, 2))
        wts.append((ws * s * jac).ravel())
    return np.concatenate(pts), np.concatenate(wts)
