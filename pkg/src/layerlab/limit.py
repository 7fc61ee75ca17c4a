"""Boundary blow-up limit u_inf and the interior convergence u_mu -> u_inf.

u_inf is approached by Dirichlet problems  -Lu = u - u^p,  u = M on the
boundary, for an increasing sequence of levels M.  Interior values saturate
as M grows; boundary nodes never do and are only flagged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import ValidationError
from .grid import RadialField, RadialGrid, apply_stencil, nodes_in_closed_core
from .solver import NEWTON_MAX_ITER, NEWTON_TOL, STENCIL_WEIGHT, ContinuationResult, damped_newton

DEFAULT_LEVELS = (10.0, 1e2, 1e3, 1e4, 1e5)


@dataclass(frozen=True, eq=False)
class BlowupApprox:
    M_values: tuple
    fields: tuple
    u_infty: RadialField
    est_error: np.ndarray
    flags: np.ndarray
    tol: float = 1e-6

    @property
    def grid(self) -> RadialGrid:
        return self.u_infty.grid

    @property
    def divergent(self) -> np.ndarray:
        """Boundary nodes, where u_inf is infinite."""
        return ~self.grid.interior_mask

    def interior(self) -> tuple:
        """(r, u_inf, est_error) restricted to non-boundary nodes."""
        m = self.grid.interior_mask
        return self.grid.nodes[m], self.u_infty.values[m], self.est_error[m]


def _dirichlet_rows(grid: RadialGrid, p, M, u):
    lo, _, up = grid.stencil
    lap = apply_stencil(grid, u)
    up_ = u**p
    F = -lap - u + up_
    mag = np.abs(lap) + u + up_ + 1.0 + STENCIL_WEIGHT * 2.0 * (np.abs(lo) + np.abs(up)) * u
    b = list(grid.boundary_indices)
    F[b] = u[b] - M
    mag[b] = 1.0 + M
    return F, mag


def _dirichlet_jacobian(grid: RadialGrid, p, u):
    lo, di, up = grid.stencil
    ab = np.zeros((3, grid.size))
    ab[0, 1:] = -up[:-1]
    ab[1] = -di - 1.0 + p * u ** (p - 1)
    ab[2, :-1] = -lo[1:]
    for b in grid.boundary_indices:
        ab[1, b] = 1.0
        if b + 1 < grid.size:
            ab[0, b + 1] = 0.0
        if b > 0:
            ab[2, b - 1] = 0.0
    return ab


def solve_dirichlet_level(
    grid: RadialGrid,
    p: float,
    M: float,
    initial: Optional[RadialField] = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> RadialField:
    """Newton solution of  -Lu = u - u^p  with u = M on every boundary node.

    The initial guess is max(1, ``initial``) with the boundary set to M.
    """
    if not M >= 1:
        raise ValidationError("Dirichlet level M must be >= 1")
    if not p > 1:
        raise ValidationError("p must satisfy p > 1")
    u0 = np.ones(grid.size) if initial is None else np.maximum(initial.values, 1.0)
    u0[list(grid.boundary_indices)] = M
    ones = np.ones(grid.size)
    u, _, _, _ = damped_newton(
        lambda v: _dirichlet_rows(grid, p, M, v),
        lambda v: _dirichlet_jacobian(grid, p, v),
        u0,
        ones,
        tol,
        max_iter,
        1.0,
    )
    return RadialField(grid, u)


def estimate_u_infinity(
    grid: RadialGrid,
    p: float,
    M_schedule: Sequence[float] = DEFAULT_LEVELS,
    tol: float = 1e-6,
) -> BlowupApprox:
    """Sweep the Dirichlet levels with warm starts and keep the last one.

    est_error = |last - previous| per node (inf on boundary nodes); nodes
    with est_error > ``tol`` are flagged.  Near-boundary flags are expected.
    """
    levels = [float(m) for m in M_schedule]
    if len(levels) < 2:
        raise ValidationError("need at least two Dirichlet levels")
    if any(b <= a for a, b in zip(levels, levels[1:])) or levels[0] < 1:
        raise ValidationError("M_schedule must be increasing and start at a value >= 1")
    fields = []
    prev = None
    for M in levels:
        prev = solve_dirichlet_level(grid, p, M, initial=prev)
        fields.append(prev)
    last, before = fields[-1].values, fields[-2].values
    err = np.abs(last - before)
    err[~grid.interior_mask] = np.inf
    return BlowupApprox(tuple(levels), tuple(fields), fields[-1], err, err > tol, tol)


def _second_difference(grid: RadialGrid, u: np.ndarray) -> np.ndarray:
    r = grid.nodes
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    out = np.zeros_like(u)
    out[1:-1] = 2.0 * ((u[2:] - u[1:-1]) / hp - (u[1:-1] - u[:-2]) / hm) / (hm + hp)
    return out


@dataclass(frozen=True)
class LayerReport:
    eps: float
    mu_values: tuple
    sup_distance: tuple
    second_diff_distance: tuple
    error_floor: float
    squeeze_ok: bool

    def strictly_decreasing(self) -> bool:
        d = self.sup_distance
        return all(b < a for a, b in zip(d, d[1:]))


def _core(grid: RadialGrid, eps: float) -> np.ndarray:
    if not eps > grid.h_max:
        raise ValidationError(f"eps = {eps:g} must exceed the grid spacing {grid.h_max:g}")
    mask = nodes_in_closed_core(grid, eps)
    if not mask.any():
        raise ValidationError(f"no nodes at distance >= {eps:g} from the boundary")
    return mask


def layer_convergence(
    cont: ContinuationResult,
    blowup: BlowupApprox,
    eps: float,
    mu_min: float = 0.0,
    slack: float = 1e-8,
) -> LayerReport:
    """Sup-distance of u_mu to u_inf (values and second differences) on S_eps.

    Only continuation points with mu >= ``mu_min`` are reported.  The squeeze
    u_mu <= u_inf + slack is checked on the same nodes.
    """
    grid = cont.grid
    if not grid.same_nodes(blowup.grid):
        raise ValidationError("continuation and blow-up approximation live on different grids")
    mask = _core(grid, eps)
    ui = blowup.u_infty.values
    d2i = _second_difference(grid, ui)
    mus, dist, dist2 = [], [], []
    squeeze = True
    for mu, sol in zip(cont.mu_values, cont.solutions):
        if mu < mu_min:
            continue
        u = sol.u.values
        diff = (ui - u)[mask]
        squeeze &= bool(np.all(diff >= -slack))
        mus.append(mu)
        dist.append(float(np.abs(diff).max()))
        dist2.append(float(np.abs(_second_difference(grid, u) - d2i)[mask].max()))
    floor = float(blowup.est_error[mask].max())
    return LayerReport(float(eps), tuple(mus), tuple(dist), tuple(dist2), floor, squeeze)


def mu_route_estimate(cont: ContinuationResult, eps: float) -> tuple:
    """u_inf on S_eps from the mu-sweep: last curve point plus a tail band.

    The band is the geometric-tail bound  D * k / (1 - k)  built from the
    last two sup increments D_prev, D with ratio k = D / D_prev.
    Returns (values on the full grid, band).
    """
    grid = cont.grid
    mask = _core(grid, eps)
    if len(cont.solutions) < 3:
        raise ValidationError("need at least three curve points for a tail estimate")
    u = [s.u.values for s in cont.solutions[-3:]]
    d_prev = float(np.abs(u[1] - u[0])[mask].max())
    d_last = float(np.abs(u[2] - u[1])[mask].max())
    k = d_last / d_prev if d_prev > 0 else 0.0
    if k >= 1.0:
        return u[2], float("inf")
    return u[2], d_last * k / (1.0 - k)


def two_route_agreement(cont: ContinuationResult, blowup: BlowupApprox, eps: float) -> dict:
    """Compare the mu-route and M-route approximations of u_inf on S_eps."""
    grid = cont.grid
    if not grid.same_nodes(blowup.grid):
        raise ValidationError("continuation and blow-up approximation live on different grids")
    mask = _core(grid, eps)
    u_mu, band_mu = mu_route_estimate(cont, eps)
    band_M = float(blowup.est_error[mask].max())
    gap = float(np.abs(u_mu - blowup.u_infty.values)[mask].max())
    return {
        "eps": float(eps),
        "gap": gap,
        "band_mu": band_mu,
        "band_M": band_M,
        "agree": bool(gap <= band_mu + band_M),
    }

