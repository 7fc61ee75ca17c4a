"""Acceptance criteria 1-12, one test each, each printing a PASS/FAIL line.

Run directly (``python tests/test_acceptance.py``) for the lines alone, or
through pytest, where they are collected into the terminal summary.
"""

import math
import sys
from pathlib import Path

import numpy as np
from scipy.special import jn_zeros

sys.path.insert(0, str(Path(__file__).parent))

from cases import DOMAINS, MATRIX, MU_LOWER, blowup, curve, kit_for, moderate  # noqa: E402

from layerlab.asymptotics import (  # noqa: E402
    CONVERGENT,
    DIVERGENT,
    barrier_growth_exponent,
    barrier_integral,
    boundary_scaling_fit,
    gradient_norm_sweep,
    lr_volume_sweep,
    sandwich_report,
)
from layerlab.eigen import barrier_sign_report, principal_eigenpair  # noqa: E402
from layerlab.grid import DomainSpec, build_grid, integrate_boundary, integrate_volume  # noqa: E402
from layerlab.limit import layer_convergence, two_route_agreement  # noqa: E402
from layerlab.solver import (  # noqa: E402
    ProblemParams,
    gamma1_quotient,
    linearized_gamma1,
    monotone_iterate,
    newton_solve,
    sensitivity,
)

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "disk_p3_q05.json"


def report(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _order(errors) -> float:
    return math.log2(errors[-2] / errors[-1])


def test_criterion_01_eigen_oracle():
    oracles = {2: jn_zeros(0, 1)[0] ** 2, 3: math.pi**2}
    worst_err, worst_order = 0.0, float("inf")
    for N, exact in oracles.items():
        errs = []
        for M in (501, 1001, 2001):
            g = build_grid(DomainSpec.ball(N), M, "boundary_graded", 20.0)
            errs.append(abs(principal_eigenpair(g).beta - exact) / exact)
        worst_err = max(worst_err, errs[-1])
        worst_order = min(worst_order, _order(errs))
    report(1, worst_err <= 1e-4 and worst_order >= 1.9, f"max rel. error {worst_err:.2e} at M=2001, min order {worst_order:.3f}")


def test_criterion_02_trivial_branch():
    worst = 0.0
    for spec in DOMAINS.values():
        g = build_grid(spec, 801, "boundary_graded", 20.0)
        for p, q in ((3.0, 0.5), (2.0, 0.5), (4.0, 0.9)):
            params = ProblemParams(spec, p, q, 0.0)
            for c in (1e-3, 0.1, 0.5, 0.9, 1.5, 10.0, 100.0):
                sol = newton_solve(params, g.field(np.full(g.size, c)))
                worst = max(worst, float(np.abs(sol.u.values - 1.0).max()))
    report(2, worst <= 1e-10, f"max |u - 1| = {worst:.1e} over 3 domains x 3 (p,q) x 7 constant guesses")


def test_criterion_03_barrier_signs():
    bad = []
    for name, p, q in MATRIX:
        _, pair, kit = moderate(name, p, q)
        for mu in (MU_LOWER, 10 * MU_LOWER, 100 * MU_LOWER):
            rep = barrier_sign_report(kit, pair, mu)
            if not (rep["super"]["ok"] and rep["sub"]["ok"]):
                bad.append((name, p, q, mu))
    report(3, not bad, f"{len(MATRIX) * 3 - len(bad)}/{len(MATRIX) * 3} (case, mu) pairs with correct signs {bad or ''}")


def test_criterion_04_sandwich():
    worst, count, fails = float("inf"), 0, []
    for name, p, q in MATRIX:
        cont = curve(name, p, q)
        pair, kit = kit_for(name, p, q)
        for sol in cont.solutions:
            if sol.params.mu < kit.mu_lower:
                continue
            rep = sandwich_report(sol, kit, pair, tol_rel=1e-2)
            count += 1
            worst = min(worst, rep.worst_relative)
            if not rep.passed:
                fails.append((name, p, q, sol.params.mu))
    report(4, not fails, f"{count - len(fails)}/{count} curve points inside the barriers, worst relative margin {worst:.3f}")


def test_criterion_05_boundary_scaling():
    worst_rel, worst_r2 = 0.0, 1.0
    for name, p, q in MATRIX:
        rep = boundary_scaling_fit(curve(name, p, q), (1e2, 1e5))
        worst_rel = max(worst_rel, rep.relative_error)
        worst_r2 = min(worst_r2, rep.r2)
    ok = worst_rel <= 0.05 and worst_r2 >= 0.999
    report(5, ok, f"max rel. exponent error {worst_rel:.2%}, min r2 {worst_r2:.6f}")


def test_criterion_06_newton_vs_monotone():
    worst = 0.0
    for name, p, q in MATRIX:
        grid, pair, kit = moderate(name, p, q)
        params = ProblemParams(DOMAINS[name], p, q, 10.0)
        newton = newton_solve(params, grid.field(np.ones(grid.size)))
        for start in ("sub", "super"):
            mono = monotone_iterate(params, grid, start, kit=kit, pair=pair)
            worst = max(worst, float(np.abs(mono.u.values - newton.u.values).max()))
    report(6, worst <= 1e-8, f"max sup difference {worst:.1e} over {len(MATRIX)} cases x 2 starts at mu=10")


def test_criterion_07_monotone_curve_and_sensitivity():
    mono_ok, sens_ok = True, True
    for name, p, q in MATRIX:
        cont = curve(name, p, q)
        sols = cont.solutions
        mono_ok &= all(bool(np.all(b.u.values > a.u.values)) for a, b in zip(sols, sols[1:]))
        sens_ok &= all(float(t.values.min()) > 0 for t in cont.sensitivities)
    worst_order = float("inf")
    for name, p, q in MATRIX:
        grid, _, _ = moderate(name, p, q)
        base = ProblemParams(DOMAINS[name], p, q, 10.0)
        sol = newton_solve(base, grid.field(np.ones(grid.size)))
        s = sensitivity(base, sol).values
        errs = []
        for h in (0.1, 0.05):
            up = newton_solve(base.with_mu(10.0 + h), sol.u).u.values
            dn = newton_solve(base.with_mu(10.0 - h), sol.u).u.values
            errs.append(float(np.abs((up - dn) / (2 * h) - s).max()))
        worst_order = min(worst_order, _order(errs))
    ok = mono_ok and sens_ok and worst_order >= 1.9
    report(7, ok, f"nodewise increasing {mono_ok}, du/dmu > 0 {sens_ok}, min centered-difference order {worst_order:.3f}")


def test_criterion_08_gamma1():
    positive = True
    worst_identity = 0.0
    worst_verbatim = 0.0
    for name, p, q in MATRIX:
        cont = curve(name, p, q)
        positive &= all(g > 0 for g in cont.gamma1_values)
        for gd, gf in zip(cont.gamma1_values, cont.gamma1_formula_values):
            worst_verbatim = max(worst_verbatim, abs(gd - gf) / gd)
        for sol in cont.solutions[::5]:
            gd, _, phi = linearized_gamma1(sol.params, sol)
            gi = gamma1_quotient(sol.grid, p, q, sol.params.mu, sol.u, phi, volume_power=p)
            worst_identity = max(worst_identity, abs(gd - gi) / gd)
    # lambda = 0, v = 1 reduction of the quotient
    cont = curve("disk", 3.0, 0.5)
    sol0 = cont.solutions[0]
    _, formula, phi = linearized_gamma1(sol0.params, sol0)
    g = sol0.grid
    reduction = 2.0 * integrate_volume(g, phi) / (integrate_volume(g, phi) + integrate_boundary(g, phi))
    red_err = abs(formula - reduction)
    ok = positive and red_err <= 1e-10
    report(
        8,
        ok,
        f"gamma1 > 0 everywhere {positive}; lambda=0 reduction error {red_err:.1e}; "
        f"direct vs printed quotient max rel. gap {worst_verbatim:.2f} (v^q volume term), "
        f"vs v^p variant {worst_identity:.1e}",
    )


def test_criterion_09_lr_threshold():
    p, q = 3.0, 0.5
    cont = curve("disk", p, q)
    pair, kit = kit_for("disk", p, q)
    low = lr_volume_sweep(cont, 0.5)
    high = lr_volume_sweep(cont, 2.0)
    window = (barrier_integral(pair, kit.A_lower, p, q, 0.5), barrier_integral(pair, kit.A_upper, p, q, 0.5))
    v = low.values
    k = (v[-1] - v[-2]) / (v[-2] - v[-3])
    limit = v[-1] + (v[-1] - v[-2]) * k / (1 - k)
    inside = window[0] <= v[-1] <= window[1] and window[0] <= limit <= window[1]
    pred = barrier_growth_exponent(p, q, 2.0)
    rel = abs(high.growth_exponent - pred) / pred
    ok = low.classification == CONVERGENT and inside and high.classification == DIVERGENT and rel <= 0.10
    report(
        9,
        ok,
        f"r=0.5 {low.classification}, limit ~{limit:.3f} in [{window[0]:.3f}, {window[1]:.3f}]; "
        f"r=2 {high.classification}, growth {high.growth_exponent:.4f} vs {pred:.4f} ({rel:.1%})",
    )


def test_criterion_10_gradient_blowup():
    ok, parts = True, []
    for p, q in ((3.0, 0.5), (2.0, 0.5), (4.0, 0.9)):
        cont = curve("disk", p, q)
        for r in (1.0, 2.0):
            sw = gradient_norm_sweep(cont, r, mu_min=10.0)
            vals = sw.values
            inc = all(b > a for a, b in zip(vals, vals[1:]))
            good = inc and sw.classification == DIVERGENT and sw.growth_exponent > 0
            ok &= good
            parts.append(f"p={p:g},r={r:g}:{sw.growth_exponent:.3f}")
    report(10, ok, "growth exponents on mu in [10, 1e5]: " + " ".join(parts))


def test_criterion_11_layer_convergence():
    cont = curve("disk", 3.0, 0.5)
    bu = blowup("disk", 3.0)
    rep = layer_convergence(cont, bu, 0.2, mu_min=0.0)
    ratio = rep.sup_distance[-1] / rep.error_floor
    route = two_route_agreement(cont, bu, 0.2)
    ok = rep.strictly_decreasing() and ratio <= 10.0 and route["agree"]
    report(
        11,
        ok,
        f"strictly decreasing {rep.strictly_decreasing()}, distance/floor at mu=1e5 = {ratio:.2f}, "
        f"routes differ by {route['gap']:.2e} <= {route['band_mu'] + route['band_M']:.2e}: {route['agree']}",
    )


def test_criterion_12_determinism(tmp_path):
    from layerlab.cli import main

    outs = []
    for k in (1, 2):
        out = tmp_path / f"run{k}"
        code = main(["verify", "--config", str(CONFIG), "--out", str(out), "--seedless"])
        outs.append((code, (out / "verify.json").read_bytes()))
    same = outs[0][1] == outs[1][1]
    report(12, same and outs[0][0] == 0 and outs[1][0] == 0, f"verify.json byte-identical {same}, exit codes {outs[0][0]}, {outs[1][0]}")


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
