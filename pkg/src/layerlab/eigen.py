"""Principal Dirichlet eigenpair, barrier constants and the barrier family.

The barrier profile is

    psi_A = A * (phi + mu**-tau) ** -rho,   tau = (p-1)/(p-2q+1),  rho = 2/(p-1)

with phi the principal Dirichlet eigenfunction normalised to max 1.  For
mu >= mu_lower it is a supersolution once A >= A_upper and a subsolution
once A <= A_lower; ``barrier_constants`` builds the geometric constants
those amplitudes are made of.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import ConstantsError, ConvergenceError, ValidationError
from .grid import (
    RadialField,
    RadialGrid,
    apply_stencil,
    distance_to_boundary,
    radial_derivative,
)


def check_exponents(p: float, q: float) -> None:
    if not (0 < q < 1 < p):
        if not (0 < q < 1):
            raise ValidationError("q must satisfy 0 < q < 1")
        raise ValidationError("p must satisfy p > 1")


def exponents(p: float, q: float) -> tuple:
    """(tau, rho) of the barrier family."""
    check_exponents(p, q)
    tau = (p - 1.0) / (p - 2.0 * q + 1.0)
    rho = 2.0 / (p - 1.0)
    return tau, rho


def boundary_exponent(p: float, q: float) -> float:
    """Growth exponent 2/(p-2q+1) of the boundary values in mu."""
    check_exponents(p, q)
    return 2.0 / (p - 2.0 * q + 1.0)


@dataclass(frozen=True, eq=False)
class EigenPair:
    beta: float
    phi: RadialField
    phi_prime: RadialField
    residual: float = 0.0
    iterations: int = 0

    @property
    def grid(self) -> RadialGrid:
        return self.phi.grid

    def normal_slope(self) -> np.ndarray:
        """-dphi/dnu at each boundary node (outer normal)."""
        g = self.grid
        dphi = self.phi_prime.values
        return np.array([dphi[b] if b == 0 else -dphi[b] for b in g.boundary_indices])


def _dirichlet_matrix(grid: RadialGrid) -> sp.csc_matrix:
    """-L restricted to the non-boundary nodes (homogeneous Dirichlet data)."""
    lo, di, up = grid.stencil
    keep = np.flatnonzero(grid.interior_mask)
    a, b = keep[0], keep[-1] + 1
    A = sp.diags([-lo[a + 1 : b], -di[a:b], -up[a : b - 1]], [-1, 0, 1], format="csc")
    return A, keep


def principal_eigenpair(grid: RadialGrid, tol: float = 1e-13, max_iter: int = 2000) -> EigenPair:
    """Smallest Dirichlet eigenvalue of the discrete radial Laplacian.

    Inverse power iteration on the tridiagonal operator, factorised once.
    Stops when successive sup-normalised iterates differ by at most ``tol``
    or stop improving below 1e-9 (round-off floor).  The eigenfunction is rescaled to sup-norm 1.
    """
    A, keep = _dirichlet_matrix(grid)
    lu = splu(A)
    x = np.ones(keep.size)
    beta = 0.0
    history = []
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        y /= y[np.argmax(np.abs(y))]
        change = float(np.abs(y - x).max())
        history.append(change)
        x = y
        # round-off floor: the change stops shrinking
        if change <= tol or (change <= 1e-9 and len(history) > 1 and change >= 0.5 * history[-2]):
            break
    else:
        raise ConvergenceError(f"inverse iteration stalled, last change {change:.3e}", history)
    Ax = A @ x
    beta = float(x @ Ax) / float(x @ x)
    res = float(np.abs(Ax - beta * x).max() / beta)
    if x.sum() < 0:
        x = -x
    phi = np.zeros(grid.size)
    phi[keep] = x / x.max()
    phi_f = RadialField(grid, phi)
    return EigenPair(beta, phi_f, radial_derivative(grid, phi_f), res, it)


def rayleigh_quotient(grid: RadialGrid, phi) -> float:
    """Discrete quotient  sum w phi (-L phi) / sum w phi^2  with trapezoid weights."""
    v = np.asarray(phi, dtype=float)
    lap = apply_stencil(grid, v)
    mask = grid.interior_mask
    w = grid.trapezoid_weights
    return float(np.sum((w * v * -lap)[mask]) / np.sum((w * v * v)[mask]))


@dataclass(frozen=True)
class BarrierKit:
    p: float
    q: float
    beta: float
    c1: float
    c2: float
    c3: float
    eps0: float
    b1: float
    b2: float
    mu_lower: float
    c_mu: float
    d1: float
    d2: float
    tau: float
    rho: float
    A_lower: float = float("nan")
    A_upper: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def amplitude_parts(kit: BarrierKit, p: float, q: float) -> dict:
    """The five candidate amplitudes from the sub/supersolution construction."""
    rho = 2.0 / (p - 1.0)
    return {
        "A_upper_1": (rho * (rho + 1) * kit.c3 + rho * kit.c_mu * kit.beta + kit.c_mu**2) ** (1.0 / (p - 1.0)),
        "A_upper_2": (rho * kit.c1) ** (1.0 / (q - 1.0)),
        "A_lower_1": (rho * (rho + 1) * kit.b1) ** (1.0 / (p - 1.0)),
        "A_lower_2": kit.b2 ** (2.0 / (p - 1.0)),
        "A_lower_3": (rho * kit.c2) ** (1.0 / (q - 1.0)),
    }


def barrier_amplitudes(kit: BarrierKit, p: float, q: float) -> tuple:
    """(A_lower, A_upper) = (min of the three lower, max of the two upper)."""
    parts = amplitude_parts(kit, p, q)
    lower = min(parts["A_lower_1"], parts["A_lower_2"], parts["A_lower_3"])
    upper = max(parts["A_upper_1"], parts["A_upper_2"])
    return lower, upper


def _eps_candidates(grid: RadialGrid, count: int = 64) -> np.ndarray:
    lo = grid.h_max
    hi = 0.5 * grid.spec.inradius
    if hi <= lo:
        raise ConstantsError("grid too coarse to place a boundary band")
    return np.geomspace(lo, hi, count)


def barrier_constants(
    pair: EigenPair,
    grid: RadialGrid,
    p: float,
    q: float,
    mu_lower: float,
    eps0: float | None = None,
) -> BarrierKit:
    """Discrete surrogates of the geometric constants, with amplitudes filled in.

    With ``eps0=None`` the band width is scanned over a geometric sequence and
    the largest width giving the largest lower amplitude is kept.
    """
    tau, rho = exponents(p, q)
    if not mu_lower > 0:
        raise ValidationError("mu_lower must be positive")
    phi = pair.phi.values
    dphi2 = pair.phi_prime.values ** 2
    slope = pair.normal_slope()
    c1, c2 = float(slope.min()), float(slope.max())
    if c1 <= 0:
        raise ConstantsError("normal derivative of phi is not negative on the boundary")
    c3 = float(dphi2.max())
    c_mu = 1.0 + mu_lower ** (-tau)
    d = distance_to_boundary(grid).values
    inside = d > 0
    ratio = phi[inside] / d[inside]
    d1, d2 = float(ratio.min()), float(ratio.max())

    def kit_for(eps):
        band = d < eps
        b1 = float(dphi2[band].min())
        b2 = float(phi[~band].min())
        if b1 <= 0:
            raise ConstantsError(f"b1 = {b1:g} <= 0 for eps0 = {eps:g}; choose a smaller eps0")
        kit = BarrierKit(p, q, pair.beta, c1, c2, c3, float(eps), b1, b2, mu_lower, c_mu, d1, d2, tau, rho)
        lower, upper = barrier_amplitudes(kit, p, q)
        return BarrierKit(**{**kit.to_dict(), "A_lower": lower, "A_upper": upper})

    if eps0 is not None:
        return kit_for(eps0)

    best = None
    for eps in _eps_candidates(grid):
        try:
            kit = kit_for(eps)
        except ConstantsError:
            continue
        # ties go to the wider band
        if best is None or kit.A_lower >= best.A_lower * (1 - 1e-12):
            best = kit
    if best is None:
        raise ConstantsError("no band width gives b1 > 0; choose a smaller eps0")
    return best


def barrier_profile(A: float, pair: EigenPair, mu: float, p: float, q: float, grid: RadialGrid = None) -> RadialField:
    tau, rho = exponents(p, q)
    if not (A > 0 and mu > 0):
        raise ValidationError("barrier needs A > 0 and mu > 0")
    grid = grid or pair.grid
    return RadialField(grid, A * (pair.phi.values + mu ** (-tau)) ** (-rho))


def residual_of_barrier(A: float, pair: EigenPair, mu: float, p: float, q: float, grid: RadialGrid = None):
    """Closed-form  (Delta psi + psi - psi^p,  dpsi/dnu - mu psi^q)  for psi_A.

    Derivatives go through the chain rule on (phi, phi', beta), not through
    differencing psi.  Returns (interior field, boundary array).
    """
    tau, rho = exponents(p, q)
    grid = grid or pair.grid
    m = mu ** (-tau)
    phi = pair.phi.values
    s = phi + m
    I = rho * (rho + 1) * pair.phi_prime.values ** 2 + rho * s * pair.beta * phi + s**2 - A ** (p - 1)
    interior = A * s ** (-rho - 2) * I
    slope = pair.normal_slope()
    boundary = A**q * mu ** (tau * (rho + 1)) * (A ** (1 - q) * rho * slope - 1.0)
    return RadialField(grid, interior), boundary


def barrier_sign_report(kit: BarrierKit, pair: EigenPair, mu: float) -> dict:
    """Sign checks of the barrier residuals at A_upper and A_lower.

    A round-off allowance of 1e-12 relative to the size of the individual
    terms is granted where an amplitude makes an inequality tight.
    """
    p, q = kit.p, kit.q
    out = {}
    for name, A, sign in (("super", kit.A_upper, -1.0), ("sub", kit.A_lower, 1.0)):
        interior, boundary = residual_of_barrier(A, pair, mu, p, q)
        s = pair.phi.values + mu ** (-kit.tau)
        scale_in = A * s ** (-kit.rho - 2) * (A ** (p - 1) + s**2 + kit.rho * (kit.rho + 1) * kit.c3 + kit.rho * s * kit.beta)
        scale_b = A**q * mu ** (kit.tau * (kit.rho + 1)) * (1.0 + A ** (1 - q) * kit.rho * kit.c2)
        ok_in = bool(np.all(sign * interior.values >= -1e-12 * scale_in))
        ok_b = bool(np.all(-sign * boundary >= -1e-12 * scale_b))
        out[name] = {"interior_ok": ok_in, "boundary_ok": ok_b, "ok": ok_in and ok_b}
    return out
