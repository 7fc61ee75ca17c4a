"""Large-mu diagnostics: boundary scaling, barrier sandwich, L^r integrals.

Divergence of an integral cannot be observed directly.  A sweep is called
divergent when its values grow monotonically and the increments between
consecutive mu points grow too (positive log-log slope over the analysis
window); it is convergent when the increments shrink.  For geometric mu
steps and I(mu) ~ C0 + C mu^g the increments scale like mu^g, so the same
slope is reported as the growth exponent.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .eigen import BarrierKit, EigenPair, barrier_profile, boundary_exponent, exponents
from .exceptions import ValidationError
from .grid import (
    DomainSpec,
    RadialGrid,
    build_grid,
    integrate_volume,
    radial_derivative,
    sphere_area,
    strength_for_min_spacing,
)
from .solver import ContinuationResult, Solution

CONVERGENT = "convergent"
DIVERGENT = "divergent"


class HypothesisWarning(UserWarning):
    """A sweep was requested outside the hypotheses of the blow-up statement."""


def resolving_grid(spec: DomainSpec, p: float, q: float, mu_max: float, M: int = 4000, level_max: float = None) -> RadialGrid:
    """Boundary-graded grid whose smallest cell is 2% of the thinnest layer.

    The layer of u_mu has width ~ mu^-tau and the Dirichlet level M_D has
    width ~ M_D^-(p-1)/2; ``level_max`` adds the latter.
    """
    tau, _ = exponents(p, q)
    width = mu_max ** (-tau) if mu_max > 1 else 1.0
    if level_max is not None:
        width = min(width, level_max ** (-(p - 1) / 2.0))
    h_min = 0.02 * width * spec.inradius
    uniform = (spec.R_outer - spec.R_inner) / (M - 1)
    if h_min >= uniform:
        return build_grid(spec, M)
    return build_grid(spec, M, "boundary_graded", strength_for_min_spacing(spec, M, h_min))


def loglog_fit(x, y) -> tuple:
    """(slope, intercept, r^2) of log y against log x."""
    res = stats.linregress(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)))
    return float(res.slope), float(res.intercept), float(res.rvalue**2)


@dataclass(frozen=True)
class ScalingReport:
    exponent_fitted: float
    exponent_theory: float
    window: tuple
    r2: float
    mu_values: tuple
    boundary_values: tuple
    per_mu_sandwich: tuple = ()

    @property
    def relative_error(self) -> float:
        return abs(self.exponent_fitted - self.exponent_theory) / self.exponent_theory


def boundary_scaling_fit(cont: ContinuationResult, window=(1e2, 1e5), kit: Optional[BarrierKit] = None) -> ScalingReport:
    """Least-squares slope of log u_mu(R_outer) against log mu inside ``window``.

    With ``kit`` each boundary value is also checked against
    [A_lower mu^e, A_upper mu^e], e = 2/(p-2q+1).
    """
    lo, hi = float(window[0]), float(window[1])
    if not (0 < lo < hi) or math.log10(hi / lo) < 2.0 - 1e-12:
        raise ValidationError("scaling window must span at least two decades of mu")
    if kit is not None and lo < kit.mu_lower:
        raise ValidationError("scaling window starts below mu_lower of the barrier kit")
    theory = boundary_exponent(cont.p, cont.q)
    pts = [(m, s) for m, s in zip(cont.mu_values, cont.solutions) if lo * (1 - 1e-12) <= m <= hi * (1 + 1e-12)]
    if len(pts) < 3:
        raise ValidationError("fewer than three continuation points inside the scaling window")
    mus = tuple(m for m, _ in pts)
    vals = tuple(s.u.outer_value for _, s in pts)
    slope, _, r2 = loglog_fit(mus, vals)
    sandwich = ()
    if kit is not None:
        sandwich = tuple(
            bool(np.all(kit.A_lower * m**theory <= s.u.boundary_values() * (1 + 1e-12))
                 and np.all(s.u.boundary_values() <= kit.A_upper * m**theory * (1 + 1e-12)))
            for m, s in pts
        )
    return ScalingReport(slope, theory, (lo, hi), r2, mus, vals, sandwich)


@dataclass(frozen=True, eq=False)
class SandwichReport:
    mu: float
    lower_margin: np.ndarray
    upper_margin: np.ndarray
    tol_rel: float

    @property
    def passed(self) -> bool:
        return bool(self.worst_relative >= -self.tol_rel)

    @property
    def worst_relative(self) -> float:
        return float(min(self.lower_margin.min(), self.upper_margin.min()))


def sandwich_report(sol: Solution, kit: BarrierKit, pair: EigenPair, tol_rel: float = 1e-2) -> SandwichReport:
    """Relative margins (u - psi_lower)/u and (psi_upper - u)/u per node."""
    mu = sol.params.mu
    if mu < kit.mu_lower:
        raise ValidationError(f"mu = {mu:g} is below mu_lower = {kit.mu_lower:g}")
    grid = sol.grid
    u = sol.u.values
    lower = barrier_profile(kit.A_lower, pair, mu, kit.p, kit.q, grid).values
    upper = barrier_profile(kit.A_upper, pair, mu, kit.p, kit.q, grid).values
    return SandwichReport(mu, (u - lower) / u, (upper - u) / u, tol_rel)


@dataclass(frozen=True)
class NormSweep:
    r: float
    kind: str
    mu_values: tuple
    values: tuple
    classification: str
    growth_exponent: Optional[float]
    increment_slope: float
    window: tuple
    quadrature_change: float = 0.0
    flagged: bool = False
    notes: tuple = field(default=())

    @property
    def monotone(self) -> bool:
        v = np.asarray(self.values)
        d = np.diff(v)
        if self.r < 0 and self.kind == "volume":
            return bool(np.all(d <= 1e-12 * np.abs(v[1:])))
        return bool(np.all(d >= -1e-12 * np.abs(v[1:])))

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "kind": self.kind,
            "mu": list(self.mu_values),
            "values": list(self.values),
            "classification": self.classification,
            "growth_exponent": self.growth_exponent,
            "increment_slope": self.increment_slope,
            "window": list(self.window),
            "quadrature_change": self.quadrature_change,
            "flagged": self.flagged,
            "notes": list(self.notes),
        }


def _coarse_weights(grid: RadialGrid) -> tuple:
    """Trapezoid weights on every other node (the last node always kept)."""
    idx = np.arange(0, grid.size, 2)
    if idx[-1] != grid.size - 1:
        idx = np.append(idx, grid.size - 1)
    r = grid.nodes[idx]
    w = np.zeros(idx.size)
    h = np.diff(r)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return idx, sphere_area(grid.N) * r ** (grid.N - 1) * w


def _classify(mus, values, decades: float) -> tuple:
    """(classification, increment slope, window) over the last ``decades``."""
    mus = np.asarray(mus, float)
    values = np.asarray(values, float)
    top = mus[-1]
    sel = mus >= top / 10.0**decades * (1 - 1e-12)
    m, v = mus[sel], values[sel]
    if m.size < 3:
        raise ValidationError("need at least three mu points in the analysis window")
    inc = np.abs(np.diff(v))
    scale = np.abs(v).max()
    window = (float(m[0]), float(m[-1]))
    if np.all(inc <= 1e-13 * max(scale, 1.0)):
        return CONVERGENT, float("-inf"), window
    inc = np.maximum(inc, 1e-300)
    mid = np.sqrt(m[1:] * m[:-1])
    slope, _, _ = loglog_fit(mid, inc)
    return (DIVERGENT if slope > 0 else CONVERGENT), slope, window


def _positive_mu(cont: ContinuationResult, mu_min: float) -> list:
    return [(m, s) for m, s in zip(cont.mu_values, cont.solutions) if m >= mu_min and m > 0]


def lr_volume_sweep(cont: ContinuationResult, r: float, mu_min: float = 1.0, decades: float = 1.0) -> NormSweep:
    """Integral of u_mu^r over the domain along the curve, classified by growth."""
    pts = _positive_mu(cont, mu_min)
    grid = cont.grid
    idx, wc = _coarse_weights(grid)
    mus, vals, change = [], [], 0.0
    for m, s in pts:
        f = s.u.values ** r
        full = integrate_volume(grid, f)
        coarse = float(wc @ f[idx])
        change = max(change, abs(full - coarse) / abs(full))
        mus.append(m)
        vals.append(full)
    cls, slope, window = _classify(mus, vals, decades)
    growth = slope if cls == DIVERGENT else None
    notes = ()
    p = cont.p
    if abs(r - (p - 1) / 2.0) < 1e-12:
        notes = ("threshold exponent: logarithmic growth expected, not gated",)
    return NormSweep(float(r), "volume", tuple(mus), tuple(vals), cls, growth, slope, window, change, False, notes)


def gradient_norm_sweep(cont: ContinuationResult, r: float, mu_min: float = 1.0, decades: float = 1.0) -> NormSweep:
    """L^r norm of |grad u_mu| along the curve, classified by growth."""
    if r < 1:
        raise ValidationError("gradient sweeps need r >= 1")
    grid = cont.grid
    flagged = False
    notes = ()
    if not grid.spec.is_convex and r >= (cont.p - 1) / 2.0:
        warnings.warn(
            f"r = {r:g} >= (p-1)/2 on a non-convex domain is outside the blow-up hypotheses",
            HypothesisWarning,
            stacklevel=2,
        )
        flagged = True
        notes = ("non-convex domain with r >= (p-1)/2",)
    idx, wc = _coarse_weights(grid)
    mus, vals, change = [], [], 0.0
    for m, s in _positive_mu(cont, mu_min):
        g = np.abs(radial_derivative(grid, s.u).values) ** r
        full = integrate_volume(grid, g) ** (1.0 / r)
        coarse = float(wc @ g[idx]) ** (1.0 / r)
        change = max(change, abs(full - coarse) / full)
        mus.append(m)
        vals.append(full)
    cls, slope, window = _classify(mus, vals, decades)
    growth, _, _ = loglog_fit(*zip(*[(m, v) for m, v in zip(mus, vals) if m >= window[0]]))
    return NormSweep(float(r), "gradient", tuple(mus), tuple(vals), cls, growth, slope, window, change, flagged, notes)


def gradient_norm(sol: Solution, r: float) -> float:
    g = np.abs(radial_derivative(sol.grid, sol.u).values) ** r
    return integrate_volume(sol.grid, g) ** (1.0 / r)


def _cell_power_integral(alpha: np.ndarray, beta: np.ndarray, h: np.ndarray, a: float) -> np.ndarray:
    """Integral over [0, h] of (alpha + beta s)^(-a) ds, exact for linear data."""
    out = np.empty_like(alpha)
    flat = np.abs(beta * h) <= 1e-12 * np.abs(alpha)
    out[flat] = h[flat] * np.abs(alpha[flat]) ** (-a)
    nb = ~flat
    lo, hi = alpha[nb], alpha[nb] + beta[nb] * h[nb]
    if abs(a - 1.0) < 1e-14:
        out[nb] = (np.log(hi) - np.log(lo)) / beta[nb]
    else:
        with np.errstate(divide="ignore"):
            out[nb] = (hi ** (1 - a) - lo ** (1 - a)) / ((1 - a) * beta[nb])
    return out


def barrier_integral(pair: EigenPair, A: float, p: float, q: float, r: float, mu: Optional[float] = None) -> float:
    """Integral of psi_A^r = A^r (phi + mu^-tau)^(-rho r); mu=None means the mu -> inf limit.

    Product integration: phi is linear on each cell and integrated exactly,
    the volume weight r^(N-1) is taken at the cell midpoint.  Returns inf
    when the limit integrand is not integrable.
    """
    tau, rho = exponents(p, q)
    grid = pair.grid
    m = 0.0 if mu is None else mu ** (-tau)
    a = rho * r
    if mu is None and a >= 1.0:
        return float("inf")
    x = grid.nodes
    phi = pair.phi.values + m
    h = np.diff(x)
    beta = np.diff(phi) / h
    # a < 1 here whenever phi reaches 0, so the end cells stay finite
    cells = _cell_power_integral(phi[:-1], beta, h, a)
    mid = 0.5 * (x[1:] + x[:-1])
    w = sphere_area(grid.N) * mid ** (grid.N - 1)
    return float(A**r * np.sum(w * cells))


def barrier_growth_exponent(p: float, q: float, r: float) -> float:
    """Predicted growth exponent tau (2r/(p-1) - 1) of the divergent L^r integrals."""
    tau, _ = exponents(p, q)
    return tau * (2.0 * r / (p - 1.0) - 1.0)


def barrier_integral_sweep(pair: EigenPair, A: float, p: float, q: float, r: float, mus) -> tuple:
    """Barrier integrals along ``mus`` and the fitted increment slope."""
    vals = [barrier_integral(pair, A, p, q, r, m) for m in mus]
    inc = np.abs(np.diff(vals))
    mid = np.sqrt(np.asarray(mus[1:]) * np.asarray(mus[:-1]))
    slope, _, _ = loglog_fit(mid, inc)
    return tuple(vals), slope
