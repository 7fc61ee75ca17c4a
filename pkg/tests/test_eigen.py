import dataclasses
import math

import numpy as np
import pytest
from scipy.special import j0, j1, jn_zeros
from scipy.optimize import minimize_scalar

from layerlab.eigen import (
    amplitude_parts,
    barrier_amplitudes,
    barrier_constants,
    barrier_profile,
    barrier_sign_report,
    check_exponents,
    exponents,
    principal_eigenpair,
    residual_of_barrier,
)
from layerlab.exceptions import ValidationError
from layerlab.grid import DomainSpec, build_grid

J01 = jn_zeros(0, 1)[0]


@pytest.fixture(scope="module")
def disk():
    g = build_grid(DomainSpec.ball(2), 2001, "boundary_graded", 20.0)
    pair = principal_eigenpair(g)
    return g, pair, barrier_constants(pair, g, 3.0, 0.5, 1.0)


def test_disk_eigenvalue(disk):
    _, pair, _ = disk
    assert pair.beta == pytest.approx(J01**2, rel=1e-4)


def test_disk_eigenfunction_shape(disk):
    g, pair, _ = disk
    np.testing.assert_allclose(pair.phi.values, j0(J01 * g.nodes), atol=1e-5)
    assert pair.phi.values.max() == pytest.approx(1.0)
    assert np.all(pair.phi.values[:-1] > 0)


def test_ball3_eigenpair():
    g = build_grid(DomainSpec.ball(3), 2001, "boundary_graded", 20.0)
    pair = principal_eigenpair(g)
    assert pair.beta == pytest.approx(math.pi**2, rel=1e-4)
    r = g.nodes[1:-1]
    np.testing.assert_allclose(pair.phi.values[1:-1], np.sin(math.pi * r) / (math.pi * r), atol=1e-5)


def test_annulus_eigenpair_positive():
    g = build_grid(DomainSpec.annulus(2, 0.5, 1.0), 801, "boundary_graded", 20.0)
    pair = principal_eigenpair(g)
    assert pair.beta > 0
    assert np.all(pair.phi.values[1:-1] > 0)
    # the first Dirichlet eigenvalue of a thin annulus is close to (pi / width)^2
    assert pair.beta == pytest.approx((math.pi / 0.5) ** 2, rel=0.05)


def test_disk_constants_against_bessel(disk):
    _, _, kit = disk
    slope = J01 * j1(J01)
    assert kit.c1 == pytest.approx(slope, rel=1e-4)
    assert kit.c2 == pytest.approx(slope, rel=1e-4)
    j1max = -minimize_scalar(lambda x: -j1(x), bounds=(0.5, 3.0), method="bounded").fun
    assert kit.c3 == pytest.approx((J01 * j1max) ** 2, rel=1e-4)
    assert kit.c_mu == pytest.approx(2.0)
    assert kit.b1 > 0 and 0 < kit.b2 <= 1
    assert 0 < kit.d1 <= kit.d2


def test_amplitude_plugins(disk):
    _, _, kit = disk
    unit = dataclasses.replace(kit, c1=1.0, c2=1.0)
    parts = amplitude_parts(unit, 3.0, 0.5)
    assert parts["A_upper_2"] == pytest.approx(1.0)
    assert parts["A_lower_3"] == pytest.approx(1.0)
    custom = dataclasses.replace(kit, c3=2.0, c_mu=2.0, beta=6.0, b1=0.5)
    parts = amplitude_parts(custom, 3.0, 0.5)
    assert parts["A_upper_1"] == pytest.approx(math.sqrt(20.0))
    assert parts["A_lower_1"] == pytest.approx(1.0)


def test_amplitudes_ordered(disk):
    _, _, kit = disk
    lo, hi = barrier_amplitudes(kit, 3.0, 0.5)
    assert (lo, hi) == (kit.A_lower, kit.A_upper)
    assert 0 < lo < hi


def test_barrier_profile_values(disk):
    g, pair, _ = disk
    psi = barrier_profile(1.0, pair, 1.0, 3.0, 0.5, g)
    center = psi.values[0]
    assert center == pytest.approx(0.5)
    assert barrier_profile(1.0, pair, 1e6, 3.0, 0.5, g).values[-1] == pytest.approx(1e4)
    assert barrier_profile(2.5, pair, 10.0, 3.0, 0.5, g).values[-1] == pytest.approx(2.5 * 10 ** (2 / 3))


def test_exponent_identity():
    tau, rho = exponents(3.0, 0.5)
    assert tau * (rho + 1) == pytest.approx(4 / 3)
    for p, q in ((2.0, 0.5), (4.0, 0.9), (1.5, 0.1)):
        tau, rho = exponents(p, q)
        assert tau * (rho + 1) == pytest.approx((p + 1) / (p - 2 * q + 1))
        assert tau * (rho + 1) == pytest.approx(1 + tau * rho * q)


@pytest.mark.parametrize("p, q, msg", [(3.0, 1.0, "q must satisfy 0 < q < 1"), (1.0, 0.5, "p"), (3.0, 0.0, "q")])
def test_exponent_checks(p, q, msg):
    with pytest.raises(ValidationError, match=msg):
        check_exponents(p, q)


@pytest.mark.parametrize("mu", [1.0, 10.0, 1e3])
def test_barrier_signs(disk, mu):
    _, pair, kit = disk
    rep = barrier_sign_report(kit, pair, mu)
    assert rep["super"]["ok"] and rep["sub"]["ok"]


def test_barrier_residual_signs_explicit(disk):
    _, pair, kit = disk
    interior, boundary = residual_of_barrier(kit.A_upper * 1.5, pair, 5.0, 3.0, 0.5)
    assert np.all(interior.values <= 0) and np.all(boundary >= 0)
    interior, boundary = residual_of_barrier(kit.A_lower * 0.5, pair, 5.0, 3.0, 0.5)
    assert np.all(interior.values >= 0) and np.all(boundary <= 0)


def test_barrier_residual_matches_finite_differences():
    from layerlab.grid import laplacian_apply

    g = build_grid(DomainSpec.ball(2), 4001)
    pair = principal_eigenpair(g)
    p, q, mu, A = 3.0, 0.5, 2.0, 1.3
    psi = barrier_profile(A, pair, mu, p, q, g).values
    # the closed form uses the continuum Laplacian of phi; compare away from the center
    fd = laplacian_apply(g, psi).values + psi - psi**p
    closed, _ = residual_of_barrier(A, pair, mu, p, q, g)
    core = (g.nodes > 0.1) & g.interior_mask
    rel = np.abs(fd - closed.values)[core] / (1 + np.abs(closed.values[core]))
    assert rel.max() < 1e-3
