import math
import warnings

import numpy as np
import pytest
from cases import MATRIX, curve, kit_for

from layerlab.asymptotics import (
    CONVERGENT,
    DIVERGENT,
    HypothesisWarning,
    barrier_growth_exponent,
    barrier_integral,
    barrier_integral_sweep,
    boundary_scaling_fit,
    gradient_norm,
    gradient_norm_sweep,
    loglog_fit,
    lr_volume_sweep,
    resolving_grid,
    sandwich_report,
)
from layerlab.eigen import barrier_profile
from layerlab.exceptions import ValidationError
from layerlab.grid import DomainSpec
from layerlab.solver import Solution, newton_solve


@pytest.fixture(scope="module")
def disk():
    cont = curve("disk", 3.0, 0.5)
    pair, kit = kit_for("disk", 3.0, 0.5)
    return cont, pair, kit


def test_loglog_fit_power_law():
    x = np.geomspace(1, 1e4, 9)
    slope, intercept, r2 = loglog_fit(x, 3.0 * x**0.75)
    assert slope == pytest.approx(0.75) and intercept == pytest.approx(math.log(3.0)) and r2 == pytest.approx(1.0)


def test_scaling_exponents(disk):
    cont, _, kit = disk
    rep = boundary_scaling_fit(cont, (1e2, 1e5), kit=kit)
    assert rep.exponent_theory == pytest.approx(2 / 3)
    assert rep.relative_error <= 0.05 and rep.r2 >= 0.999
    assert all(rep.per_mu_sandwich)
    assert boundary_scaling_fit(curve("disk", 2.0, 0.5), (1e2, 1e5)).exponent_theory == pytest.approx(1.0)


def test_scaling_window_validation(disk):
    cont, _, _ = disk
    with pytest.raises(ValidationError):
        boundary_scaling_fit(cont, (1e3, 1e4))
    with pytest.raises(ValidationError):
        boundary_scaling_fit(cont, (1e6, 1e9))


def test_sandwich_examples(disk):
    cont, pair, kit = disk
    assert sandwich_report(cont.solution_at(10.0), kit, pair).passed
    at_lower = newton_solve(cont.solutions[0].params.with_mu(kit.mu_lower), cont.solutions[0].u)
    assert sandwich_report(at_lower, kit, pair).passed
    sol = cont.solution_at(10.0)
    bad_u = 1.1 * barrier_profile(kit.A_upper, pair, 10.0, 3.0, 0.5, sol.grid).values
    bad = Solution(sol.params, sol.grid.field(bad_u), 0.0, 0)
    rep = sandwich_report(bad, kit, pair)
    assert not rep.passed
    assert rep.upper_margin[-1] < 0
    with pytest.raises(ValidationError):
        sandwich_report(cont.solutions[1], kit, pair)


def test_zero_and_negative_exponents(disk):
    cont, _, _ = disk
    zero = lr_volume_sweep(cont, 0.0)
    np.testing.assert_allclose(zero.values, math.pi, rtol=1e-12)
    assert zero.classification == CONVERGENT
    neg = lr_volume_sweep(cont, -1.0)
    assert neg.classification == CONVERGENT and 0 < neg.values[-1] < math.pi
    assert neg.monotone


def test_disk_p3_threshold_sides(disk):
    cont, pair, kit = disk
    low, high = lr_volume_sweep(cont, 0.5), lr_volume_sweep(cont, 2.0)
    assert low.classification == CONVERGENT and high.classification == DIVERGENT
    assert low.values[-1] <= barrier_integral(pair, kit.A_upper, 3.0, 0.5, 0.5)
    assert low.values[-1] >= barrier_integral(pair, kit.A_lower, 3.0, 0.5, 0.5)
    assert high.growth_exponent == pytest.approx(2 / 3, rel=0.1)
    assert low.quadrature_change < 1e-2 and high.quadrature_change < 1e-2


def test_threshold_note(disk):
    cont, _, _ = disk
    assert lr_volume_sweep(cont, 1.0).notes


@pytest.mark.parametrize("name, p, q", MATRIX)
def test_classification_flips_at_threshold(name, p, q):
    cont = curve(name, p, q)
    th = (p - 1) / 2
    assert lr_volume_sweep(cont, th - 0.1).classification == CONVERGENT
    assert lr_volume_sweep(cont, th + 0.1).classification == DIVERGENT


def test_gradient_norms(disk):
    cont, _, _ = disk
    assert gradient_norm(cont.solutions[0], 1.0) <= 1e-10
    for r in (1.0, 2.0):
        sw = gradient_norm_sweep(cont, r)
        assert sw.classification == DIVERGENT and sw.monotone and sw.growth_exponent > 0
        assert not sw.flagged
    with pytest.raises(ValidationError):
        gradient_norm_sweep(cont, 0.5)


def test_annulus_outside_hypotheses_warns():
    cont = curve("annulus", 3.0, 0.5)
    with pytest.warns(HypothesisWarning):
        sw = gradient_norm_sweep(cont, 2.0)
    assert sw.flagged
    below = curve("annulus", 4.0, 0.9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not gradient_norm_sweep(below, 1.0).flagged


def test_barrier_integral_oracle(disk):
    _, pair, kit = disk
    mus = np.geomspace(1e3, 1e6, 7)
    for r in (1.5, 2.0, 3.0):
        _, slope = barrier_integral_sweep(pair, kit.A_upper, 3.0, 0.5, r, mus)
        assert slope == pytest.approx(barrier_growth_exponent(3.0, 0.5, r), rel=0.02)
    assert barrier_integral(pair, 1.0, 3.0, 0.5, 1.0) == math.inf
    finite = barrier_integral(pair, 1.0, 3.0, 0.5, 0.5)
    assert barrier_integral(pair, 1.0, 3.0, 0.5, 0.5, mu=1e8) < finite


def test_resolving_grid_spacing():
    g = resolving_grid(DomainSpec.ball(2), 3.0, 0.5, 1e5)
    assert g.h_min == pytest.approx(0.02 * 1e5 ** (-2 / 3), rel=1e-3)
    coarse = resolving_grid(DomainSpec.ball(2), 3.0, 0.5, 1.0, M=101)
    assert coarse.h_min == pytest.approx(0.01)
