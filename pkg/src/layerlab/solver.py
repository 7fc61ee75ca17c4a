"""Positive solutions of  -Lu = u - u^p,  du/dnu = mu u^q  on radial grids.

Discrete rows
-------------
Non-boundary nodes carry  F_i = -(Lu)_i - u_i + u_i^p.  At a boundary node b
the Neumann data enter through a ghost value, which leaves the tridiagonal
row

    F_b = -2 (u_nb - u_b)/h^2 - w_b mu u_b^q - u_b + u_b^p,

where u_nb is the neighbouring node and w_b = 2/h +- (N-1)/R.  Dividing by
w_b gives the boundary residual  Du - mu u^q  with the one-sided derivative

    Du = (2 (u_b - u_nb)/h^2 + u_b^p - u_b) / w_b,

which is second order for solutions of the interior equation.  All linear
solves (Newton, sensitivity, gamma_1, monotone sweeps) share this layout and
keep the M-matrix sign pattern.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .eigen import (
    BarrierKit,
    EigenPair,
    barrier_constants,
    barrier_profile,
    check_exponents,
    principal_eigenpair,
)
from .exceptions import (
    ContinuationError,
    ConvergenceError,
    LinearAlgebraError,
    SchemeError,
    ValidationError,
)
from .grid import DomainSpec, RadialField, RadialGrid, apply_stencil, integrate_boundary, integrate_volume

logger = logging.getLogger(__name__)

FLOOR = 1e-6
NEWTON_TOL = 1e-10
MONOTONE_TOL = 1e-8
NEWTON_MAX_ITER = 50
MONOTONE_MAX_ITER = 5000
MAX_HALVINGS = 30
STENCIL_WEIGHT = 1e-5


@dataclass(frozen=True)
class ProblemParams:
    spec: DomainSpec
    p: float
    q: float
    mu: float

    def __post_init__(self) -> None:
        check_exponents(self.p, self.q)
        if not (np.isfinite(self.mu) and self.mu >= 0):
            raise ValidationError("mu must be >= 0")
        assert self.p - 2 * self.q + 1 > 0

    def with_mu(self, mu: float) -> "ProblemParams":
        return ProblemParams(self.spec, self.p, self.q, float(mu))


@dataclass(frozen=True, eq=False)
class Solution:
    params: ProblemParams
    u: RadialField
    residual_norm: float
    newton_iters: int
    history: tuple = ()

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid

    @property
    def boundary_value(self) -> float:
        return self.u.outer_value


@dataclass(frozen=True, eq=False)
class ContinuationResult:
    grid: RadialGrid
    p: float
    q: float
    mu_values: tuple
    solutions: tuple
    gamma1_values: tuple
    gamma1_formula_values: tuple
    boundary_values: tuple
    sensitivities: tuple = field(default=())

    def solution_at(self, mu: float) -> Solution:
        return self.solutions[self.mu_values.index(mu)]


def _check_grid(params: ProblemParams, grid: RadialGrid) -> None:
    if grid.spec != params.spec:
        raise ValidationError("grid and problem parameters describe different domains")


def _rows(grid: RadialGrid, p, q, mu, u):
    """Full residual rows F and the per-row magnitude used for scaling.

    The magnitude is 1 + |Lu| + u + u^p plus STENCIL_WEIGHT times the size
    of the individual stencil terms.  The last part covers the round-off of
    order eps u / h^2 that no iterate can beat on fine grids, while a
    constant field of the wrong value still shows an O(1) residual.
    """
    lo, _, up = grid.stencil
    lap = apply_stencil(grid, u)
    up_ = u**p
    F = -lap - u + up_
    mag = np.abs(lap) + u + up_ + 1.0 + STENCIL_WEIGHT * 2.0 * (np.abs(lo) + np.abs(up)) * u
    for b, (nb, h, w) in grid.boundary_flux_weight.items():
        g = mu * u[b] ** q
        flux = 2.0 * (u[nb] - u[b]) / h**2
        F[b] = -flux - w * g - u[b] + up_[b]
        mag[b] = abs(flux) + w * g + u[b] + up_[b] + 1.0 + STENCIL_WEIGHT * 4.0 * u[b] / h**2
    return F, mag


def _jacobian(grid: RadialGrid, p, q, mu, u, shift=0.0):
    """Banded (3, n) Jacobian of the residual rows, in solve_banded layout."""
    lo, di, up = grid.stencil
    ab = np.zeros((3, grid.size))
    ab[0, 1:] = -up[:-1]
    ab[1] = -di - 1.0 + p * u ** (p - 1) - shift
    ab[2, :-1] = -lo[1:]
    for b, (nb, h, w) in grid.boundary_flux_weight.items():
        ab[1, b] = 2.0 / h**2 - w * q * mu * u[b] ** (q - 1) - 1.0 + p * u[b] ** (p - 1)
        if nb > b:
            ab[0, nb] = -2.0 / h**2
        else:
            ab[2, nb] = -2.0 / h**2
    return ab


def _solve(ab, rhs):
    try:
        x = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinearAlgebraError(f"linearized system is singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise LinearAlgebraError("linearized solve produced non-finite values")
    return x


def _values(grid: RadialGrid, u) -> np.ndarray:
    if isinstance(u, RadialField):
        if not u.grid.same_nodes(grid):
            raise ValidationError("field lives on a different grid")
        return u.values
    return np.asarray(u, dtype=float)


def _scaled_norm(F, mag) -> float:
    return float(np.max(np.abs(F) / mag))


def residual(params: ProblemParams, u: RadialField):
    """(interior residual field, boundary residuals Du - mu u^q, scaled sup-norm).

    The interior field holds -Lu - u + u^p at non-boundary nodes and 0 at
    boundary nodes.  The norm divides every row by the sum of magnitudes of
    its terms.
    """
    grid = u.grid
    _check_grid(params, grid)
    v = u.values
    if np.any(v <= 0):
        raise ValidationError("residual needs u > 0 at every node")
    F, mag = _rows(grid, params.p, params.q, params.mu, v)
    interior = F.copy()
    bidx = list(grid.boundary_indices)
    interior[bidx] = 0.0
    boundary = np.array([F[b] / grid.boundary_flux_weight[b][2] for b in bidx])
    return RadialField(grid, interior), boundary, _scaled_norm(F, mag)


def damped_newton(rows, jacobian, u0, B, tol, max_iter, floor):
    """Generic damped Newton loop on banded systems.

    ``rows(u) -> (F, mag)`` and ``jacobian(u) -> ab`` in solve_banded layout.
    Returns (u, norm, iterations, history); the history holds the residuals
    of the Newton iterations before the final polishing step.  Iterates are projected onto
    u >= floor.  When no step length decreases the scaled residual the step
    is regularised as  (J + sigma B) du = -F  with growing sigma, a
    pseudo-time step along the stable parabolic flow.
    """
    u = np.maximum(np.asarray(u0, dtype=float), floor)
    F, mag = rows(u)
    norm = _scaled_norm(F, mag)
    history = [norm]
    sigma = 0.0
    it = 0
    while not norm <= tol:
        if it >= max_iter:
            raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (residual {norm:.3e})", history)
        it += 1
        ab = jacobian(u)
        ab[1] += sigma * B
        du = _solve(ab, -F)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = np.maximum(u + t * du, floor)
            Ft, mt = rows(trial)
            nt = _scaled_norm(Ft, mt)
            if np.isfinite(nt) and nt < norm:
                break
            t *= 0.5
        else:
            sigma = 1.0 if sigma == 0.0 else 10.0 * sigma
            if sigma > 1e12:
                raise ConvergenceError(f"line search failed at iteration {it} (residual {norm:.3e})", history)
            history.append(norm)
            continue
        sigma = 0.0 if sigma <= 1e-3 else 0.1 * sigma
        u, F, mag, norm = trial, Ft, mt, nt
        history.append(norm)
    # One polishing step: a residual below tol can still hide a solution
    # error of order tol times the inverse Jacobian norm.
    if it > 0 or norm > 0:
        du = _solve(jacobian(u), -F)
        trial = np.maximum(u + du, floor)
        Ft, mt = rows(trial)
        nt = _scaled_norm(Ft, mt)
        if nt <= tol:
            u, norm = trial, nt
    return u, norm, it, history


def _mu_ramp(run, mu, u0, first_exc, start=1e-2, per_decade=4, max_bisections=12):
    """Warm-started Newton solves along a geometric ramp ending at ``mu``."""
    k = max(1, int(math.ceil(per_decade * math.log10(max(mu / start, 10.0)))))
    stages = list(np.geomspace(min(start, mu / 10.0), mu, k + 1))
    u, total, history = u0, 0, []
    lo = 0.0
    for target in stages:
        m, depth = target, 0
        while True:
            try:
                u, norm, it, hist = run(m, u)
            except ConvergenceError:
                depth += 1
                if depth > max_bisections or lo == 0.0:
                    raise first_exc
                m = math.sqrt(lo * m)
                continue
            total += it
            history.extend(hist)
            lo = m
            if m == target:
                break
            m, depth = target, 0
    return u, norm, total, history


def newton_solve(
    params: ProblemParams,
    initial,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    grid: Optional[RadialGrid] = None,
    lower: float = 1.0,
    homotopy: bool = True,
) -> Solution:
    """Damped Newton iteration with backtracking on the scaled residual norm.

    Iterates are projected onto u >= ``lower`` and never below FLOOR.  Every
    positive solution satisfies u >= 1, and the projection keeps constant
    guesses below 1 out of the basin of the trivial solution.  If Newton
    fails from ``initial`` at mu > 0 and ``homotopy`` is set, mu is ramped up
    geometrically from a small value with warm starts (far-off starts such
    as u = 1 at large mu saturate every scaled residual row).
    """
    grid = grid or initial.grid
    _check_grid(params, grid)
    if not tol > 0:
        raise ValidationError("tol must be positive")
    p, q, mu = params.p, params.q, params.mu
    floor = max(FLOOR, lower)

    def run(m, u0):
        return damped_newton(
            lambda v: _rows(grid, p, q, m, v),
            lambda v: _jacobian(grid, p, q, m, v),
            u0,
            _boundary_mass(grid),
            tol,
            max_iter,
            floor,
        )

    u0 = _values(grid, initial)
    try:
        u, norm, it, history = run(mu, u0)
    except ConvergenceError as exc:
        if not (homotopy and mu > 0):
            raise
        logger.debug("direct Newton failed at mu=%g (%s); ramping mu", mu, exc)
        u, norm, it, history = _mu_ramp(run, mu, u0, exc)
    if u.min() <= FLOOR:
        raise ConvergenceError("converged onto the positivity floor", history)
    return Solution(params, RadialField(grid, u), norm, it, tuple(history))


def sensitivity(params: ProblemParams, sol: Solution) -> RadialField:
    """du/dmu from the linearized interior equation and Robin-type boundary row."""
    grid = sol.grid
    u = sol.u.values
    rhs = np.zeros(grid.size)
    for b, (_, _, w) in grid.boundary_flux_weight.items():
        rhs[b] = w * u[b] ** params.q
    ab = _jacobian(grid, params.p, params.q, params.mu, u)
    return RadialField(grid, _solve(ab, rhs))


def linearized_operator_apply(params: ProblemParams, sol: Solution, w) -> np.ndarray:
    """Apply the Jacobian of the residual rows at ``sol`` to ``w``."""
    grid = sol.grid
    ab = _jacobian(grid, params.p, params.q, params.mu, sol.u.values)
    w = _values(grid, w)
    out = ab[1] * w
    out[:-1] += ab[0, 1:] * w[1:]
    out[1:] += ab[2, :-1] * w[:-1]
    return out


def _boundary_mass(grid: RadialGrid) -> np.ndarray:
    B = np.ones(grid.size)
    for b, (_, _, w) in grid.boundary_flux_weight.items():
        B[b] = 1.0 + w
    return B


def gamma1_quotient(grid: RadialGrid, p, q, lam, v, phi, volume_power=None) -> float:
    """Quotient for gamma_1 built from a positive eigenfunction.

    ``volume_power`` is the power of v in the volume term of the numerator:
    q reproduces the printed quotient verbatim; p is what Green's identity
    gives when the equation for v is used.
    """
    volume_power = q if volume_power is None else volume_power
    v = _values(grid, v)
    phi = _values(grid, phi)
    num = (p - 1) * integrate_volume(grid, v**volume_power * phi) + lam * (1 - q) * integrate_boundary(grid, v**q * phi)
    den = integrate_volume(grid, v * phi) + integrate_boundary(grid, v * phi)
    return num / den


def _banded_to_sparse(ab) -> sp.csc_matrix:
    n = ab.shape[1]
    return sp.diags([ab[2, :-1], ab[1], ab[0, 1:]], [-1, 0, 1], shape=(n, n), format="csc")


def linearized_gamma1(params: ProblemParams, sol: Solution, tol: float = 1e-14):
    """Smallest eigenvalue of the linearization with gamma in both row types.

    Returns (gamma1_direct, gamma1_formula, eigenfunction).  The direct
    value solves  J phi = gamma B phi  with B = 1 in the interior and 1 + w_b
    on boundary rows, by shift-invert Arnoldi at 0 (an annulus has two
    nearly degenerate layer modes, which stalls plain inverse iteration).
    The formula value evaluates the printed quotient verbatim with the
    computed eigenfunction.
    """
    grid = sol.grid
    p, q, mu = params.p, params.q, params.mu
    u = sol.u.values
    ab = _jacobian(grid, p, q, mu, u)
    B = _boundary_mass(grid)
    J = _banded_to_sparse(ab)
    k = min(3, grid.size - 2)
    try:
        vals, vecs = eigs(J, k=k, M=sp.diags(B, format="csc"), sigma=0.0, which="LM", v0=np.ones(grid.size), tol=tol)
    except (ArpackNoConvergence, RuntimeError) as exc:
        raise ConvergenceError(f"eigen-solve for gamma_1 failed: {exc}") from exc
    order = np.argsort(vals.real)
    x = vecs[:, order[0]].real
    x /= x[np.argmax(np.abs(x))]
    if np.any(x <= 0):
        raise LinearAlgebraError("principal eigenfunction of the linearization is not positive")
    Jx = J @ x
    direct = float(np.sum(Jx * x) / np.sum(B * x * x))
    formula = gamma1_quotient(grid, p, q, mu, u, x)
    return direct, formula, RadialField(grid, x)


def barrier_setup(params: ProblemParams, grid: RadialGrid, mu_lower: Optional[float] = None, pair: EigenPair = None):
    """Eigenpair and barrier kit for ``grid``; mu_lower defaults to params.mu."""
    pair = pair or principal_eigenpair(grid)
    mu_lower = params.mu if mu_lower is None else mu_lower
    kit = barrier_constants(pair, grid, params.p, params.q, mu_lower)
    return pair, kit


def initial_guess(params: ProblemParams, grid: RadialGrid, pair: EigenPair = None, kit: BarrierKit = None) -> RadialField:
    """u = 1 for mu <= 1, otherwise the barrier at the mean amplitude."""
    if params.mu <= 1:
        return RadialField(grid, np.ones(grid.size))
    if kit is None:
        pair, kit = barrier_setup(params, grid, pair=pair)
    A = 0.5 * (kit.A_lower + kit.A_upper)
    return barrier_profile(A, pair, params.mu, params.p, params.q, grid)


def solve(params: ProblemParams, grid: RadialGrid, tol: float = NEWTON_TOL) -> Solution:
    """Standalone solve with the default initial-guess policy."""
    return newton_solve(params, initial_guess(params, grid), tol=tol, grid=grid)


def monotone_iterate(
    params: ProblemParams,
    grid: RadialGrid,
    start: str = "sub",
    tol: float = MONOTONE_TOL,
    max_iter: int = MONOTONE_MAX_ITER,
    kit: BarrierKit = None,
    pair: EigenPair = None,
    step_tol: float = 1e-11,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
    adaptive: bool = True,
) -> Solution:
    """Monotone sub/supersolution iteration started from the barriers.

    Each sweep solves  (-L + K) u_new = K u + u - u^p  (plus the flux term
    on boundary rows) for a subsolution sequence starting at psi_lower and a
    supersolution sequence starting at psi_upper.  The shift
    K_i = p U_i^(p-1) - 1 bounds -f' on [lower_i, U_i], which keeps both
    sequences ordered and monotone.  With ``adaptive`` U is the current
    supersolution iterate, otherwise the upper barrier (a fixed shift; much
    slower when the barriers are far apart).  Stops when the scaled residual
    of the requested sequence is below ``tol`` and the geometric tail
    estimate of its remaining change is below ``step_tol``.
    """
    if start not in ("sub", "super"):
        raise ValidationError("start must be 'sub' or 'super'")
    _check_grid(params, grid)
    p, q, mu = params.p, params.q, params.mu
    if mu <= 0:
        raise ValidationError("monotone iteration needs mu > 0")
    if kit is None:
        pair, kit = barrier_setup(params, grid, pair=pair)
    elif pair is None:
        pair = principal_eigenpair(grid)
    if mu < kit.mu_lower:
        raise ValidationError("monotone iteration needs mu >= mu_lower of the barrier kit")
    lower = barrier_profile(kit.A_lower, pair, mu, p, q, grid).values
    upper = barrier_profile(kit.A_upper, pair, mu, p, q, grid).values

    lo, di, up = grid.stencil
    base = np.zeros((3, grid.size))
    base[0, 1:] = -up[:-1]
    base[1] = -di
    base[2, :-1] = -lo[1:]
    flux_w = {}
    for b, (nb, h, w) in grid.boundary_flux_weight.items():
        base[1, b] = 2.0 / h**2
        if nb > b:
            base[0, nb] = -2.0 / h**2
        else:
            base[2, nb] = -2.0 / h**2
        flux_w[b] = w

    def sweep(u, K, ab):
        rhs = K * u + u - u**p
        for b, w in flux_w.items():
            rhs[b] += w * mu * u[b] ** q
        return _solve(ab.copy(), rhs)

    seqs = {"sub": lower.copy(), "super": upper.copy()}
    signs = {"sub": 1.0, "super": -1.0}
    prev_step = None
    history = []
    for k in range(1, max_iter + 1):
        U = seqs["super"] if adaptive else upper
        K = np.maximum(p * U ** (p - 1) - 1.0, 0.0)
        ab = base.copy()
        ab[1] += K
        for name in ("sub", "super"):
            u = seqs[name]
            new = sweep(u, K, ab)
            delta = new - u
            slack = 1e-9 * np.maximum(1.0, np.abs(u))
            if np.any(signs[name] * delta < -slack):
                worst = float(np.min(signs[name] * delta))
                raise SchemeError(f"monotonicity lost at sweep {k} ({name}, signed change {worst:.3e})")
            seqs[name] = new
            if name == start:
                step = float(np.abs(delta).max())
        u = seqs[start]
        if callback is not None:
            callback(k, u)
        F, mag = _rows(grid, p, q, mu, u)
        norm = _scaled_norm(F, mag)
        history.append(norm)
        if prev_step and prev_step > 0 and step > 0:
            theta = min(step / prev_step, 0.999999)
            tail = step * theta / (1.0 - theta)
        else:
            tail = step
        prev_step = step
        if norm <= tol and tail <= step_tol:
            return Solution(params, RadialField(grid, u), norm, k, tuple(history))
    raise ConvergenceError(f"monotone iteration did not converge in {max_iter} sweeps", history)


def default_mu_schedule() -> list:
    """mu = 0 followed by 10^(k/4), k = -4..20."""
    return [0.0] + [10.0 ** (k / 4.0) for k in range(-4, 21)]


def continue_in_mu(
    grid: RadialGrid,
    p: float,
    q: float,
    mu_schedule: Sequence[float],
    tol: float = NEWTON_TOL,
    with_gamma: bool = True,
    min_step: float = 1e-10,
) -> ContinuationResult:
    """Natural-parameter continuation from (0, u = 1) along ``mu_schedule``.

    Predictor u + dmu * du/dmu (tangent from the sensitivity system),
    Newton corrector, step halving when the corrector fails.
    """
    mus = [float(m) for m in mu_schedule]
    if not mus or mus[0] != 0.0:
        raise ValidationError("mu_schedule must start at 0")
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise ValidationError("mu_schedule must be strictly increasing")
    base = ProblemParams(grid.spec, p, q, 0.0)
    sol = newton_solve(base, RadialField(grid, np.ones(grid.size)), tol=tol, grid=grid)
    tangent = sensitivity(base, sol)
    mu_c = 0.0
    sols, gammas, formulas, bvals, sens = [], [], [], [], []

    def record(s, t):
        sols.append(s)
        sens.append(t)
        bvals.append(s.boundary_value)
        if with_gamma:
            g_direct, g_formula, _ = linearized_gamma1(s.params, s)
        else:
            g_direct = g_formula = float("nan")
        gammas.append(g_direct)
        formulas.append(g_formula)

    record(sol, tangent)
    for target in mus[1:]:
        h = target - mu_c
        while mu_c < target:
            h = min(h, target - mu_c)
            mu_new = target if h >= target - mu_c else mu_c + h
            params = base.with_mu(mu_new)
            pred = sol.u.values + (mu_new - mu_c) * tangent.values
            try:
                new = newton_solve(params, RadialField(grid, np.maximum(pred, 1.0)), tol=tol, grid=grid, homotopy=False)
            except (ConvergenceError, LinearAlgebraError) as exc:
                h *= 0.5
                logger.debug("corrector failed at mu=%g (%s); halving step", mu_new, exc)
                if h < min_step * max(1.0, target):
                    partial = ContinuationResult(
                        grid, p, q, tuple(mus[: len(sols)]), tuple(sols), tuple(gammas), tuple(formulas), tuple(bvals), tuple(sens)
                    )
                    raise ContinuationError(
                        f"continuation stalled before mu={target:g}", last_good=sol, partial=partial
                    ) from exc
                continue
            sol, mu_c = new, mu_new
            tangent = sensitivity(params, sol)
            h *= 2.0
        record(sol, tangent)
    return ContinuationResult(
        grid, p, q, tuple(mus), tuple(sols), tuple(gammas), tuple(formulas), tuple(bvals), tuple(sens)
    )
