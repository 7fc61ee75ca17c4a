"""Cached test-matrix computations shared by the test modules."""

from functools import lru_cache

from layerlab.asymptotics import resolving_grid
from layerlab.eigen import barrier_constants, principal_eigenpair
from layerlab.grid import DomainSpec, build_grid
from layerlab.limit import estimate_u_infinity
from layerlab.solver import continue_in_mu, default_mu_schedule

PQ = ((3.0, 0.5), (2.0, 0.5), (4.0, 0.9))
DOMAINS = {
    "disk": DomainSpec.ball(2),
    "ball3": DomainSpec.ball(3),
    "annulus": DomainSpec.annulus(2, 0.5, 1.0),
}
MATRIX = [(name, p, q) for name in DOMAINS for p, q in PQ]
MU_LOWER = 1.0


@lru_cache(maxsize=None)
def curve(name, p, q, mu_max=1e5, level_max=1e5):
    """Continuation on the layer-resolving grid along the default schedule."""
    grid = resolving_grid(DOMAINS[name], p, q, mu_max, level_max=level_max)
    sched = [m for m in default_mu_schedule() if m <= mu_max * (1 + 1e-12)]
    return continue_in_mu(grid, p, q, sched)


@lru_cache(maxsize=None)
def kit_for(name, p, q, mu_max=1e5, level_max=1e5):
    grid = curve(name, p, q, mu_max, level_max).grid
    pair = principal_eigenpair(grid)
    return pair, barrier_constants(pair, grid, p, q, MU_LOWER)


@lru_cache(maxsize=None)
def moderate(name, p, q, M=801, strength=20.0):
    """Graded grid, eigenpair and kit for mid-range mu checks."""
    grid = build_grid(DOMAINS[name], M, "boundary_graded", strength)
    pair = principal_eigenpair(grid)
    return grid, pair, barrier_constants(pair, grid, p, q, MU_LOWER)


@lru_cache(maxsize=None)
def blowup(name, p, levels=(10.0, 1e2, 1e3, 1e4, 1e5), q=0.5, mu_max=1e5):
    grid = curve(name, p, q, mu_max, levels[-1]).grid
    return estimate_u_infinity(grid, p, levels)
