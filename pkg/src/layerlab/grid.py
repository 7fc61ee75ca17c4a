"""Radially symmetric domains and discrete radial operators.

Every field in layerlab is a function of the radius only, sampled on a
strictly increasing set of node radii.  For a ball the first node sits at
the center and is a symmetry node (u'(0) = 0); for an annulus both end
nodes lie on the boundary.

The radial Laplacian is

    Lu = u'' + (N - 1)/r * u'

discretised with the three-point non-uniform formulas for u'' and u'.  Both
are exact on quadratics, so L(r^2) = 2N holds to round-off on any grid.  At
the center of a ball the symmetry limit Lu(0) = N u''(0) is used with the
mirror ghost value u(-h) = u(h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .exceptions import ValidationError

BALL = "ball"
ANNULUS = "annulus"


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    N: int
    R_outer: float = 1.0
    R_inner: float = 0.0

    def __post_init__(self) -> None:
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind not in (BALL, ANNULUS):
            raise ValidationError(f"domain kind must be 'ball' or 'annulus', got {self.kind!r}")
        if int(self.N) != self.N or self.N < 2:
            raise ValidationError("N >= 2 required")
        object.__setattr__(self, "N", int(self.N))
        if not (np.isfinite(self.R_outer) and self.R_outer > 0):
            raise ValidationError("R_outer must be a positive finite length")
        if kind == BALL and self.R_inner != 0:
            raise ValidationError("a ball requires R_inner = 0")
        if kind == ANNULUS and not (0 < self.R_inner < self.R_outer):
            raise ValidationError("an annulus requires 0 < R_inner < R_outer")

    @classmethod
    def ball(cls, N: int, R: float = 1.0) -> "DomainSpec":
        return cls(BALL, N, float(R), 0.0)

    @classmethod
    def annulus(cls, N: int, R_inner: float, R_outer: float) -> "DomainSpec":
        return cls(ANNULUS, N, float(R_outer), float(R_inner))

    @property
    def is_ball(self) -> bool:
        return self.kind == BALL

    @property
    def is_convex(self) -> bool:
        return self.is_ball

    @property
    def inradius(self) -> float:
        """Largest distance from an interior point to the boundary."""
        if self.is_ball:
            return self.R_outer
        return 0.5 * (self.R_outer - self.R_inner)

    @property
    def volume(self) -> float:
        return sphere_area(self.N) * (self.R_outer**self.N - self.R_inner**self.N) / self.N

    @property
    def boundary_area(self) -> float:
        area = self.R_outer ** (self.N - 1)
        if not self.is_ball:
            area += self.R_inner ** (self.N - 1)
        return sphere_area(self.N) * area

    def to_dict(self) -> dict:
        return {"kind": self.kind, "N": self.N, "R_outer": self.R_outer, "R_inner": self.R_inner}


@dataclass(frozen=True, eq=False)
class RadialGrid:
    spec: DomainSpec
    nodes: np.ndarray
    boundary_indices: tuple = field(default=())

    def __post_init__(self) -> None:
        r = np.array(self.nodes, dtype=float)
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)
        if r.ndim != 1 or r.size < 3:
            raise ValidationError("a radial grid needs at least 3 nodes")
        if not np.all(np.diff(r) > 0):
            raise ValidationError("grid nodes must be strictly increasing")
        if r[0] != self.spec.R_inner or r[-1] != self.spec.R_outer:
            raise ValidationError("first/last node must coincide with the domain radii")
        expected = (r.size - 1,) if self.spec.is_ball else (0, r.size - 1)
        if not self.boundary_indices:
            object.__setattr__(self, "boundary_indices", expected)
        elif tuple(self.boundary_indices) != expected:
            raise ValidationError(f"boundary indices must be {expected}")

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def N(self) -> int:
        return self.spec.N

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.size, dtype=bool)
        mask[list(self.boundary_indices)] = False
        return mask

    def same_nodes(self, other: "RadialGrid") -> bool:
        return (
            self is other
            or (self.spec == other.spec and self.size == other.size and np.array_equal(self.nodes, other.nodes))
        )

    def field(self, values) -> "RadialField":
        return RadialField(self, values)

    @cached_property
    def stencil(self) -> tuple:
        """Tridiagonal coefficients (lower, diag, upper) of L at non-boundary rows.

        ``lower[i]`` multiplies u[i-1] and ``upper[i]`` multiplies u[i+1].
        Boundary rows are left at zero; consumers fill them.
        """
        r = self.nodes
        n = r.size
        lo = np.zeros(n)
        di = np.zeros(n)
        up = np.zeros(n)
        hm = r[1:-1] - r[:-2]
        hp = r[2:] - r[1:-1]
        s = hm + hp
        k = (self.N - 1) / r[1:-1]
        lo[1:-1] = 2.0 / (hm * s) - k * hp / (hm * s)
        up[1:-1] = 2.0 / (hp * s) + k * hm / (hp * s)
        if self.spec.is_ball:
            up[0] = 2.0 * self.N / (r[1] - r[0]) ** 2
        # zero row sums, so constants are annihilated exactly
        di[:] = -(lo + up)
        return lo, di, up

    @cached_property
    def boundary_flux_weight(self) -> dict:
        """Per boundary node b: (neighbour index, h, w_b) for the ghost-node row.

        Eliminating the ghost value with the flux g = du/dnu gives the
        boundary row  Lu = 2 (u_nb - u_b)/h^2 + w_b g  with
        w_b = 2/h + (N-1)/R on the outer sphere and 2/h - (N-1)/R on the
        inner one.
        """
        r = self.nodes
        out = {}
        for b in self.boundary_indices:
            if b == 0:
                h = r[1] - r[0]
                out[b] = (1, h, 2.0 / h - (self.N - 1) / r[0])
            else:
                h = r[-1] - r[-2]
                out[b] = (b - 1, h, 2.0 / h + (self.N - 1) / r[-1])
        return out

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        """Weights w with sum(w * f) = trapezoid rule for the volume integral."""
        g = sphere_area(self.N) * self.nodes ** (self.N - 1)
        h = self.spacing
        w = np.zeros(self.size)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w * g

    @property
    def h_min(self) -> float:
        return float(self.spacing.min())

    @property
    def h_max(self) -> float:
        return float(self.spacing.max())


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValidationError(f"field has {v.size} values but grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValidationError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self) -> int:
        return self.values.size

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def boundary_values(self) -> np.ndarray:
        return self.values[list(self.grid.boundary_indices)]

    @property
    def outer_value(self) -> float:
        return float(self.values[-1])


def _graded_spacing(n_cells: int, strength: float, two_sided: bool) -> np.ndarray:
    t = np.arange(n_cells) / max(n_cells - 1, 1)
    e = (2.0 * t - 1.0) ** 2 if two_sided else t
    span = e.max() - e.min()
    if span > 0:
        e = (e - e.min()) / span
    return strength ** (-e)


def build_grid(spec: DomainSpec, M: int, grading: str = "uniform", strength: float = 1.0) -> RadialGrid:
    """Node radii for ``spec`` with ``M`` nodes.

    ``boundary_graded`` spacing shrinks geometrically toward r = R_outer (and
    toward R_inner for an annulus); ``strength`` is the ratio between the
    largest and the smallest spacing.
    """
    if not isinstance(spec, DomainSpec):
        raise ValidationError("spec must be a DomainSpec")
    if int(M) != M or M < 16:
        raise ValidationError("M >= 16 nodes required")
    M = int(M)
    a, b = spec.R_inner, spec.R_outer
    if grading == "uniform":
        r = np.linspace(a, b, M)
    elif grading == "boundary_graded":
        if not (np.isfinite(strength) and strength >= 1):
            raise ValidationError("grading strength must be >= 1")
        w = _graded_spacing(M - 1, float(strength), two_sided=not spec.is_ball)
        r = a + (b - a) * np.concatenate([[0.0], np.cumsum(w)]) / w.sum()
    else:
        raise ValidationError(f"unknown grading {grading!r}")
    r[0], r[-1] = a, b
    return RadialGrid(spec, r)


def strength_for_min_spacing(spec: DomainSpec, M: int, h_min: float) -> float:
    """Grading strength whose graded grid has smallest spacing ``h_min``."""
    uniform = (spec.R_outer - spec.R_inner) / (M - 1)
    if h_min >= uniform:
        return 1.0

    def gap(log_s):
        return math.log(build_grid(spec, M, "boundary_graded", math.exp(log_s)).h_min / h_min)

    hi = 1.0
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 200:
            raise ValidationError("requested spacing is unreachable with this node count")
    return math.exp(brentq(gap, 0.0, hi, xtol=1e-6))


def _as_values(grid: RadialGrid, u) -> np.ndarray:
    if isinstance(u, RadialField):
        if not u.grid.same_nodes(grid):
            raise ValidationError("field lives on a different grid")
        return u.values
    v = np.asarray(u, dtype=float)
    if v.shape != (grid.size,):
        raise ValidationError(f"expected {grid.size} nodal values, got shape {v.shape}")
    return v


def _endpoint_derivatives(r3: np.ndarray, u3: np.ndarray) -> tuple:
    """First and second derivative at r3[0] of the quadratic through 3 points."""
    h1 = r3[1] - r3[0]
    h2 = r3[2] - r3[0]
    d1 = (u3[1] - u3[0]) / h1
    d2 = (u3[2] - u3[0]) / h2
    second = 2.0 * (d2 - d1) / (h2 - h1)
    first = d1 - 0.5 * second * h1
    return first, second


def apply_stencil(grid: RadialGrid, u: np.ndarray) -> np.ndarray:
    """L applied in difference form  lo*(u[i-1]-u[i]) + up*(u[i+1]-u[i])."""
    lo, _, up = grid.stencil
    du = np.diff(u)
    out = np.zeros_like(u, dtype=float)
    out[1:] -= lo[1:] * du
    out[:-1] += up[:-1] * du
    return out


def laplacian_apply(grid: RadialGrid, u) -> RadialField:
    """Second-order radial Laplacian; boundary nodes get one-sided values."""
    v = _as_values(grid, u)
    out = apply_stencil(grid, v)
    r = grid.nodes
    k = grid.N - 1
    for b in grid.boundary_indices:
        idx = [b, b - 1, b - 2] if b > 0 else [0, 1, 2]
        first, second = _endpoint_derivatives(r[idx], v[idx])
        out[b] = second + k / r[b] * first
    return RadialField(grid, out)


def radial_derivative(grid: RadialGrid, u) -> RadialField:
    """du/dr: central non-uniform stencil inside, one-sided 3-point at the ends.

    The ball center returns exactly 0 (symmetry).
    """
    v = _as_values(grid, u)
    r = grid.nodes
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    s = hm + hp
    d = np.empty_like(v)
    d[1:-1] = (-hp / (hm * s)) * v[:-2] + ((hp - hm) / (hm * hp)) * v[1:-1] + (hm / (hp * s)) * v[2:]
    d[0] = _endpoint_derivatives(r[:3], v[:3])[0]
    d[-1] = _endpoint_derivatives(r[-1:-4:-1], v[-1:-4:-1])[0]
    if grid.spec.is_ball:
        d[0] = 0.0
    return RadialField(grid, d)


def integrate_volume(grid: RadialGrid, f) -> float:
    """Trapezoid rule for the integral over the domain with weight |S^{N-1}| r^{N-1}."""
    return float(grid.trapezoid_weights @ _as_values(grid, f))


def integrate_boundary(grid: RadialGrid, f) -> float:
    v = _as_values(grid, f)
    area = sphere_area(grid.N)
    return float(sum(area * grid.nodes[b] ** (grid.N - 1) * v[b] for b in grid.boundary_indices))


def distance_to_boundary(grid: RadialGrid) -> RadialField:
    r = grid.nodes
    spec = grid.spec
    d = spec.R_outer - r
    if not spec.is_ball:
        d = np.minimum(r - spec.R_inner, d)
    d = np.maximum(d, 0.0)
    return RadialField(grid, d)


def nodes_in_closed_core(grid: RadialGrid, eps: float) -> np.ndarray:
    """Boolean mask of nodes in the closure of {d(x, boundary) > eps}."""
    return distance_to_boundary(grid).values >= eps
