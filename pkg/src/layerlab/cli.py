"""Command-line experiment runner.

    layerlab eigen    --config case.json [--out DIR]
    layerlab continue --config case.json
    layerlab limit    --config case.json
    layerlab verify   --config case.json
    layerlab report   --config case.json

Exit codes: 0 success, 2 configuration or missing input, 3 solver failure,
4 verification failure.  CSV and JSON outputs depend only on the config and
the installed versions; wall-clock timings go to timings.json.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import random
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .asymptotics import (
    CONVERGENT,
    DIVERGENT,
    barrier_growth_exponent,
    barrier_integral,
    boundary_scaling_fit,
    gradient_norm_sweep,
    lr_volume_sweep,
    sandwich_report,
)
from .config import ConfigError, ExperimentConfig, load_config
from .eigen import amplitude_parts, barrier_constants, principal_eigenpair
from .exceptions import (
    ConstantsError,
    ContinuationError,
    ConvergenceError,
    LinearAlgebraError,
    SchemeError,
    ValidationError,
)
from .grid import RadialField
from .limit import estimate_u_infinity, layer_convergence, two_route_agreement
from .solver import ContinuationResult, ProblemParams, Solution, continue_in_mu

logger = logging.getLogger("layerlab")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

CURVE_COLUMNS = ["mu", "u_boundary", "gamma1_direct", "gamma1_formula", "newton_iters", "residual_norm", "sandwich_pass"]
PROFILE_COLUMNS = ["r", "u", "du_dmu"]


class MissingArtifact(ConfigError):
    pass


# ---------------------------------------------------------------- output helpers


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path: Path, header) -> list:
    if not path.exists():
        raise MissingArtifact(f"missing artifact: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != list(header):
        raise ConfigError(f"{path}: header must be {','.join(header)}")
    return rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def profile_name(mu: float) -> str:
    return f"mu_{float(mu)!r}.csv"


def versions() -> dict:
    return {"layerlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


@contextmanager
def forbid_rng(active: bool):
    """Make every common RNG entry point raise while the run is active."""
    if not active:
        yield
        return

    def refuse(*args, **kwargs):
        raise RuntimeError("a random number generator was consulted during a --seedless run")

    targets = [(np.random, n) for n in ("default_rng", "seed", "rand", "randn", "random", "uniform", "normal")]
    targets += [(random, n) for n in ("random", "seed", "randint", "uniform", "gauss", "shuffle")]
    saved = [(mod, n, getattr(mod, n)) for mod, n in targets]
    try:
        for mod, n, _ in saved:
            setattr(mod, n, refuse)
        yield
    finally:
        for mod, n, f in saved:
            setattr(mod, n, f)


# ---------------------------------------------------------------- shared computation


class Case:
    """Grid, eigenpair and barrier kit of a config, built once per run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.grid = cfg.build_grid()
        self.pair = principal_eigenpair(self.grid)
        self.kit = barrier_constants(self.pair, self.grid, cfg.p, cfg.q, cfg.mu_lower)

    def sandwich(self, sol: Solution):
        if sol.params.mu < self.kit.mu_lower:
            return None
        return sandwich_report(sol, self.kit, self.pair, self.cfg.sandwich_rel).passed


def curve_rows(case: Case, cont: ContinuationResult) -> list:
    rows = []
    for mu, s, gd, gf in zip(cont.mu_values, cont.solutions, cont.gamma1_values, cont.gamma1_formula_values):
        rows.append([mu, s.boundary_value, gd, gf, s.newton_iters, s.residual_norm, case.sandwich(s)])
    return rows


def write_curve(out: Path, case: Case, cont: ContinuationResult) -> list:
    rows = curve_rows(case, cont)
    write_csv(out / "curve.csv", CURVE_COLUMNS, rows)
    r = case.grid.nodes
    for mu, s, t in zip(cont.mu_values, cont.solutions, cont.sensitivities):
        write_csv(out / "profiles" / profile_name(mu), PROFILE_COLUMNS, zip(r, s.u.values, t.values))
    return rows


def load_curve(out: Path, case: Case):
    """Rebuild the continuation from curve.csv and the profile files.

    Returns (ContinuationResult, curve rows as floats).
    """
    cfg, grid = case.cfg, case.grid
    raw = read_csv(out / "curve.csv", CURVE_COLUMNS)
    try:
        rows = [[float(x) if x not in ("", "true", "false") else x for x in row] for row in raw]
    except ValueError as exc:
        raise ConfigError(f"{out / 'curve.csv'}: unparsable value ({exc})") from exc
    mus = [row[0] for row in rows]
    sols, sens = [], []
    for mu, row in zip(mus, rows):
        prof = read_csv(out / "profiles" / profile_name(mu), PROFILE_COLUMNS)
        arr = np.array(prof, dtype=float)
        if arr.shape != (grid.size, 3) or not np.array_equal(arr[:, 0], grid.nodes):
            raise ConfigError(f"{out / 'profiles' / profile_name(mu)}: nodes do not match the configured grid")
        params = ProblemParams(cfg.domain, cfg.p, cfg.q, mu)
        sols.append(Solution(params, RadialField(grid, arr[:, 1]), row[5], int(row[4])))
        sens.append(RadialField(grid, arr[:, 2]))
    cont = ContinuationResult(
        grid, cfg.p, cfg.q, tuple(mus), tuple(sols),
        tuple(r[2] for r in rows), tuple(r[3] for r in rows), tuple(r[1] for r in rows), tuple(sens),
    )
    return cont, rows


def run_continuation(case: Case) -> ContinuationResult:
    cfg = case.cfg
    return continue_in_mu(case.grid, cfg.p, cfg.q, cfg.mu_schedule, tol=cfg.newton_tol)


def scaling_dict(rep) -> dict:
    return {
        "exponent_theory": rep.exponent_theory,
        "exponent_fitted": rep.exponent_fitted,
        "relative_error": rep.relative_error,
        "r2": rep.r2,
        "window": list(rep.window),
        "mu": list(rep.mu_values),
        "u_boundary": list(rep.boundary_values),
        "per_mu_sandwich": list(rep.per_mu_sandwich),
    }


def grid_dict(grid) -> dict:
    return {"M": grid.size, "h_min": grid.h_min, "h_max": grid.h_max}


# ---------------------------------------------------------------- subcommands


def cmd_eigen(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    case = Case(cfg)
    pair, kit = case.pair, case.kit
    write_csv(out / "eigen.csv", ["r", "phi", "phi_prime"], zip(case.grid.nodes, pair.phi.values, pair.phi_prime.values))
    write_json(
        out / "constants.json",
        {**kit.to_dict(), "amplitude_parts": amplitude_parts(kit, cfg.p, cfg.q), "grid": grid_dict(case.grid),
         "eigen_residual": pair.residual},
    )
    return EXIT_OK


def cmd_continue(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    case = Case(cfg)
    try:
        cont = run_continuation(case)
    except ContinuationError as exc:
        if exc.partial is not None and exc.partial.solutions:
            write_curve(out, case, exc.partial)
        (out / "FAILED").write_text(f"{exc}\n")
        raise
    rows = write_curve(out, case, cont)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    summary = {
        "case_label": cfg.case_label,
        "config": cfg.to_dict(),
        "grid": grid_dict(case.grid),
        "barrier": case.kit.to_dict(),
        "records": [dict(zip(CURVE_COLUMNS, row)) for row in rows],
        "versions": versions(),
    }
    try:
        summary["scaling"] = scaling_dict(boundary_scaling_fit(cont, cfg.scaling_window, case.kit))
    except ValidationError as exc:
        summary["scaling"] = {"skipped": str(exc)}
    write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_limit(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    case = Case(cfg)
    grid = case.grid
    blowup = estimate_u_infinity(grid, cfg.p, cfg.levels)
    r, val, err = blowup.interior()
    write_csv(out / "u_infinity.csv", ["r", "value", "est_error"], zip(r, val, err))
    cont = _curve_for(out, case)
    reports = [layer_convergence(cont, blowup, eps) for eps in cfg.layer_eps_list]
    header = ["mu"] + [f"sup_distance_eps_{eps!r}" for eps in cfg.layer_eps_list]
    rows = [[mu] + [rep.sup_distance[i] for rep in reports] for i, mu in enumerate(reports[0].mu_values)]
    write_csv(out / "layer.csv", header, rows)
    write_json(
        out / "limit.json",
        {
            "levels": list(blowup.M_values),
            "flagged_nodes": int(blowup.flags.sum()),
            "layers": [
                {"eps": rep.eps, "error_floor": rep.error_floor, "strictly_decreasing": rep.strictly_decreasing(),
                 "squeeze_ok": rep.squeeze_ok, "second_diff_distance": list(rep.second_diff_distance)}
                for rep in reports
            ],
            "two_route": [two_route_agreement(cont, blowup, eps) for eps in cfg.layer_eps_list],
        },
    )
    return EXIT_OK


def _curve_for(out: Path, case: Case) -> ContinuationResult:
    if (out / "curve.csv").exists():
        return load_curve(out, case)[0]
    return run_continuation(case)


def _sweeps(cont, cfg, threads):
    lr_jobs = [lambda r=r: lr_volume_sweep(cont, r) for r in cfg.lr_exponents]
    gr_jobs = [lambda r=r: gradient_norm_sweep(cont, r, mu_min=10.0) for r in cfg.grad_exponents]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        res = list(pool.map(lambda f: f(), lr_jobs + gr_jobs))
    return res[: len(lr_jobs)], res[len(lr_jobs):]


def cmd_verify(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    case = Case(cfg)
    grid, p, q = case.grid, cfg.p, cfg.q
    if (out / "curve.csv").exists():
        cont, rows = load_curve(out, case)
        source = "files"
    else:
        cont = run_continuation(case)
        rows = curve_rows(case, cont)
        source = "computed"
    gates = {}
    ub = [row[1] for row in rows]
    gates["curve_starts_trivial"] = bool(rows[0][0] == 0.0 and abs(ub[0] - 1.0) <= 1e-10)
    gates["curve_boundary_increasing"] = all(b > a for a, b in zip(ub, ub[1:]))
    gates["curve_matches_profiles"] = all(
        abs(u - s.boundary_value) <= 1e-12 * abs(u) for u, s in zip(ub, cont.solutions)
    )
    gates["profiles_increasing_nodewise"] = all(
        bool(np.all(b.u.values > a.u.values)) for a, b in zip(cont.solutions, cont.solutions[1:])
    )
    gates["gamma1_positive"] = all(row[2] > 0 for row in rows)
    gates["sandwich"] = all(case.sandwich(s) is not False for s in cont.solutions)

    result = {"exponent_theory": None, "exponent_fitted": None, "fit_r2": None}
    try:
        rep = boundary_scaling_fit(cont, cfg.scaling_window, case.kit)
        result.update(exponent_theory=rep.exponent_theory, exponent_fitted=rep.exponent_fitted, fit_r2=rep.r2)
        gates["boundary_scaling"] = bool(rep.relative_error <= 0.05 and rep.r2 >= 0.999 and all(rep.per_mu_sandwich))
    except ValidationError as exc:
        rep = None
        result["scaling_skipped"] = str(exc)

    lr, grad = _sweeps(cont, cfg, threads)
    threshold = (p - 1) / 2.0
    lr_ok = True
    lr_out = []
    for sw in lr:
        d = sw.to_dict()
        d["barrier_prediction"] = barrier_growth_exponent(p, q, sw.r) if sw.r > threshold else None
        if 0 < sw.r < threshold:
            d["barrier_window"] = [
                barrier_integral(case.pair, case.kit.A_lower, p, q, sw.r),
                barrier_integral(case.pair, case.kit.A_upper, p, q, sw.r),
            ]
        d["gated"] = abs(sw.r - threshold) > 1e-12
        if d["gated"]:
            want = CONVERGENT if sw.r < threshold else DIVERGENT
            d["pass"] = bool(sw.classification == want and sw.monotone)
            lr_ok &= d["pass"]
        lr_out.append(d)
    gates["lr_threshold"] = lr_ok

    grad_ok = True
    grad_out = []
    for sw in grad:
        d = sw.to_dict()
        d["gated"] = not sw.flagged
        d["pass"] = bool(sw.classification == DIVERGENT and sw.monotone and sw.growth_exponent > 0)
        if d["gated"]:
            grad_ok &= d["pass"]
        grad_out.append(d)
    gates["gradient_blowup"] = grad_ok

    blowup = estimate_u_infinity(grid, p, cfg.levels)
    layer = layer_convergence(cont, blowup, cfg.layer_eps, mu_min=10.0)
    route = two_route_agreement(cont, blowup, cfg.layer_eps)
    ratio = layer.sup_distance[-1] / layer.error_floor if layer.error_floor > 0 else float("inf")
    layer_d = {
        "eps": layer.eps,
        "mu": list(layer.mu_values),
        "sup_distance": list(layer.sup_distance),
        "second_diff_distance": list(layer.second_diff_distance),
        "error_floor": layer.error_floor,
        "ratio_to_floor": ratio,
        "strictly_decreasing": layer.strictly_decreasing(),
        "squeeze_ok": layer.squeeze_ok,
        "two_route": route,
    }
    gates["layer_convergence"] = bool(
        layer.strictly_decreasing() and ratio <= 10.0 and route["agree"] and layer.squeeze_ok
    )

    result.update(
        case_label=cfg.case_label,
        source=source,
        lr_sweeps=lr_out,
        grad_sweeps=grad_out,
        layer_distances=[layer_d],
        gates=gates,
        passed=all(gates.values()),
    )
    write_json(out / "verify.json", result)
    _write_plot_data(out, rows, rep, lr, layer)
    return EXIT_OK if result["passed"] else EXIT_VERIFY


def _write_plot_data(out: Path, rows, rep, lr, layer) -> None:
    def dat(name, header, data):
        with open(out / name, "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for row in data:
                fh.write(" ".join(_fmt(v) for v in row) + "\n")

    pts = [(math.log10(r[0]), math.log10(r[1])) for r in rows if r[0] > 0]
    dat("scaling.dat", ["log10_mu", "log10_u_boundary"], pts)
    for sw in lr:
        dat(f"lr_r{sw.r!r}.dat", ["mu", "integral"], zip(sw.mu_values, sw.values))
    dat("layer.dat", ["mu", "sup_distance"], zip(layer.mu_values, layer.sup_distance))
    lines = [
        "# generated plotting stub; run with gnuplot",
        "set terminal pngcairo size 800,600",
        "set output 'scaling.png'",
        "set xlabel 'log10 mu'; set ylabel 'log10 u(R)'",
        "plot 'scaling.dat' using 1:2 with linespoints title 'boundary value'",
        "set output 'layer.png'",
        "set logscale xy; set xlabel 'mu'; set ylabel 'sup distance'",
        "plot 'layer.dat' using 1:2 with linespoints title 'u_inf - u_mu'",
    ]
    for sw in lr:
        lines += [f"set output 'lr_r{sw.r!r}.png'", f"plot 'lr_r{sw.r!r}.dat' using 1:2 with linespoints title 'r = {sw.r!r}'"]
    (out / "plot.gp").write_text("\n".join(lines) + "\n")


def _num(x) -> str:
    return "n/a" if x is None else f"{x:.3f}"


def cmd_report(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    paths = {name: out / name for name in ("summary.json", "verify.json")}
    for path in paths.values():
        if not path.exists():
            raise MissingArtifact(f"missing artifact: {path} (run 'continue' and 'verify' first)")
    summary = json.loads(paths["summary.json"].read_text())
    verify = json.loads(paths["verify.json"].read_text())
    lines = [f"case {summary['case_label']}  (p={cfg.p:g}, q={cfg.q:g}, {cfg.domain.kind} N={cfg.domain.N})"]
    g = summary["grid"]
    lines.append(f"grid: {g['M']} nodes, h_min {g['h_min']:.3g}, h_max {g['h_max']:.3g}")
    last = summary["records"][-1]
    lines.append(f"curve: {len(summary['records'])} points, u(R) = {last['u_boundary']:.6g} at mu = {last['mu']:g}")
    if verify.get("exponent_fitted") is not None:
        lines.append(
            f"boundary exponent: fitted {verify['exponent_fitted']:.5f}, theory {verify['exponent_theory']:.5f}, r2 {verify['fit_r2']:.6f}"
        )
    for sw in verify["lr_sweeps"]:
        lines.append(f"L^{sw['r']:g} volume integral: {sw['classification']} (increment slope {_num(sw['increment_slope'])})")
    for sw in verify["grad_sweeps"]:
        lines.append(f"gradient L^{sw['r']:g}: {sw['classification']} (growth {_num(sw['growth_exponent'])})")
    for ld in verify["layer_distances"]:
        lines.append(f"layer eps={ld['eps']:g}: distance at last mu {ld['sup_distance'][-1]:.3g}, floor {ld['error_floor']:.3g}")
    for name, ok in sorted(verify["gates"].items()):
        lines.append(f"  [{'pass' if ok else 'FAIL'}] {name}")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"eigen": cmd_eigen, "continue": cmd_continue, "limit": cmd_limit, "verify": cmd_verify, "report": cmd_report}
HELP = {
    "eigen": "principal Dirichlet eigenpair and barrier constants",
    "continue": "solution curve from mu = 0 along the schedule",
    "limit": "Dirichlet blow-up approximation and layer distances",
    "verify": "gated checks on the curve, written to verify.json",
    "report": "text summary of summary.json and verify.json",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerlab", description="Radial logistic problems with sublinear boundary flux.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", required=True, help="JSON case file")
        sp.add_argument("--out", default=None, help="output directory (default: the config's 'outputs')")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for independent sweeps")
        sp.add_argument("--seedless", action="store_true", help="fail if any random number generator is consulted")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        out = Path(args.out if args.out is not None else cfg.outputs)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        with forbid_rng(args.seedless):
            code = COMMANDS[args.command](cfg, out, args.threads)
        _record_timing(out, args.command, time.perf_counter() - t0)
        if code == EXIT_VERIFY:
            print("verification failed; see verify.json", file=sys.stderr)
        return code
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, ContinuationError, LinearAlgebraError, SchemeError, ConstantsError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def _record_timing(out: Path, command: str, seconds: float) -> None:
    path = out / "timings.json"
    try:
        data = json.loads(path.read_text()) if path.exists() else {}
    except json.JSONDecodeError:
        data = {}
    data[command] = round(seconds, 3)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    sys.exit(main())
