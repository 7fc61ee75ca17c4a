"""JSON experiment configuration.

A case file looks like::

    {
      "case_label": "disk_p3_q05",
      "domain": {"kind": "ball", "N": 2, "R_outer": 1.0},
      "p": 3, "q": 0.5,
      "mu_schedule": {"start": 0.1, "stop": 1e5, "per_decade": 4, "include_zero": true},
      "grid": {"M": 4000, "grading": "auto"},
      "tolerances": {"newton": 1e-10, "monotone": 1e-8, "sandwich_rel": 1e-2},
      "mu_lower": 1.0,
      "limit": {"levels": [10, 100, 1000, 10000, 100000], "eps": [0.2, 0.3]},
      "verify": {"scaling_window": [100, 100000], "lr_exponents": [0.5, 2],
                 "grad_exponents": [1, 2], "layer_eps": 0.2},
      "outputs": "out/disk_p3_q05"
    }

``mu_schedule`` may also be an explicit list.  Every field except domain,
p and q has a default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .eigen import check_exponents
from .exceptions import ValidationError
from .grid import DomainSpec, RadialGrid, build_grid


class ConfigError(ValidationError):
    """Configuration problem; the message names the file and field."""


_TOP_KEYS = {
    "case_label", "domain", "p", "q", "mu_schedule", "grid", "tolerances",
    "mu_lower", "limit", "verify", "outputs",
}


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainSpec
    p: float
    q: float
    mu_schedule: tuple
    M: int = 4000
    grading: str = "auto"
    strength: Optional[float] = None
    newton_tol: float = 1e-10
    monotone_tol: float = 1e-8
    sandwich_rel: float = 1e-2
    mu_lower: float = 1.0
    levels: tuple = (10.0, 1e2, 1e3, 1e4, 1e5)
    layer_eps_list: tuple = (0.2,)
    scaling_window: tuple = (1e2, 1e5)
    lr_exponents: tuple = (0.5, 2.0)
    grad_exponents: tuple = (1.0, 2.0)
    layer_eps: float = 0.2
    outputs: str = "out"
    case_label: str = "case"
    source: str = field(default="<dict>", compare=False)

    @property
    def mu_max(self) -> float:
        return self.mu_schedule[-1]

    def build_grid(self) -> RadialGrid:
        """The grid shared by every subcommand of this case."""
        if self.grading == "auto":
            from .asymptotics import resolving_grid

            return resolving_grid(self.domain, self.p, self.q, self.mu_max, self.M, level_max=self.levels[-1])
        return build_grid(self.domain, self.M, self.grading, self.strength if self.strength is not None else 1.0)

    def to_dict(self) -> dict:
        return {
            "case_label": self.case_label,
            "domain": self.domain.to_dict(),
            "p": self.p,
            "q": self.q,
            "mu_schedule": list(self.mu_schedule),
            "grid": {"M": self.M, "grading": self.grading, "strength": self.strength},
            "tolerances": {"newton": self.newton_tol, "monotone": self.monotone_tol, "sandwich_rel": self.sandwich_rel},
            "mu_lower": self.mu_lower,
            "limit": {"levels": list(self.levels), "eps": list(self.layer_eps_list)},
            "verify": {
                "scaling_window": list(self.scaling_window),
                "lr_exponents": list(self.lr_exponents),
                "grad_exponents": list(self.grad_exponents),
                "layer_eps": self.layer_eps,
            },
            "outputs": self.outputs,
        }


def geometric_schedule(start: float, stop: float, per_decade: int, include_zero: bool = True) -> list:
    """start * 10^(k/per_decade) up to stop, with round-trip friendly values."""
    if not (0 < start < stop) or per_decade < 1:
        raise ValidationError("geometric schedule needs 0 < start < stop and per_decade >= 1")
    n = int(round(math.log10(stop / start) * per_decade))
    vals = [float(f"{start * 10.0 ** (k / per_decade):.12g}") for k in range(n + 1)]
    return ([0.0] if include_zero else []) + vals


def _num(where: str, value, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{where}: must be positive")
    if integer and int(value) != value:
        raise ConfigError(f"{where}: must be an integer")
    return int(value) if integer else float(value)


def _numlist(where: str, value, positive=False) -> tuple:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list")
    return tuple(_num(f"{where}[{i}]", v, positive) for i, v in enumerate(value))


def _section(raw: dict, key: str, allowed: set) -> dict:
    sec = raw.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected an object")
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"{key}: unknown field(s) {sorted(extra)}")
    return sec


def _domain(raw) -> DomainSpec:
    if not isinstance(raw, dict):
        raise ConfigError("domain: expected an object")
    kind = raw.get("kind", "ball")
    N = raw.get("N")
    if N is None:
        raise ConfigError("domain.N: missing")
    N = _num("domain.N", N, integer=True)
    try:
        if kind == "ball":
            return DomainSpec.ball(N, _num("domain.R_outer", raw.get("R_outer", 1.0), positive=True))
        if kind == "annulus":
            return DomainSpec.annulus(
                N,
                _num("domain.R_inner", raw.get("R_inner"), positive=True),
                _num("domain.R_outer", raw.get("R_outer", 1.0), positive=True),
            )
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(f"domain: {exc}") from exc
    raise ConfigError(f"domain.kind: expected 'ball' or 'annulus', got {kind!r}")


def config_from_dict(raw: dict, source: str = "<dict>") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown field(s) {sorted(extra)}")
    for key in ("domain", "p", "q"):
        if key not in raw:
            raise ConfigError(f"missing field '{key}'")
    domain = _domain(raw["domain"])
    p = _num("p", raw["p"])
    q = _num("q", raw["q"])
    try:
        check_exponents(p, q)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc

    sched = raw.get("mu_schedule", {"start": 0.1, "stop": 1e5, "per_decade": 4, "include_zero": True})
    if isinstance(sched, dict):
        extra = set(sched) - {"start", "stop", "per_decade", "include_zero"}
        if extra:
            raise ConfigError(f"mu_schedule: unknown field(s) {sorted(extra)}")
        try:
            mus = geometric_schedule(
                _num("mu_schedule.start", sched.get("start", 0.1), positive=True),
                _num("mu_schedule.stop", sched.get("stop", 1e5), positive=True),
                _num("mu_schedule.per_decade", sched.get("per_decade", 4), positive=True, integer=True),
                bool(sched.get("include_zero", True)),
            )
        except ConfigError:
            raise
        except ValidationError as exc:
            raise ConfigError(f"mu_schedule: {exc}") from exc
    else:
        mus = list(_numlist("mu_schedule", sched))
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise ConfigError("mu_schedule: must be sorted strictly ascending")
    if mus[0] != 0.0:
        raise ConfigError("mu_schedule: first entry must be 0")
    if any(m < 0 for m in mus):
        raise ConfigError("mu_schedule: negative mu is not supported")

    g = _section(raw, "grid", {"M", "grading", "strength"})
    M = _num("grid.M", g.get("M", 4000), positive=True, integer=True)
    if M < 16:
        raise ConfigError("grid.M: at least 16 nodes required")
    grading = g.get("grading", "auto")
    if grading not in ("auto", "uniform", "boundary_graded"):
        raise ConfigError(f"grid.grading: expected auto, uniform or boundary_graded, got {grading!r}")
    strength = g.get("strength")
    if strength is not None:
        strength = _num("grid.strength", strength, positive=True)

    t = _section(raw, "tolerances", {"newton", "monotone", "sandwich_rel"})
    lim = _section(raw, "limit", {"levels", "eps"})
    ver = _section(raw, "verify", {"scaling_window", "lr_exponents", "grad_exponents", "layer_eps"})
    levels = _numlist("limit.levels", lim.get("levels", [10, 1e2, 1e3, 1e4, 1e5]), positive=True)
    if any(b <= a for a, b in zip(levels, levels[1:])) or levels[0] < 1:
        raise ConfigError("limit.levels: must be increasing and >= 1")
    window = _numlist("verify.scaling_window", ver.get("scaling_window", [1e2, 1e5]), positive=True)
    if len(window) != 2:
        raise ConfigError("verify.scaling_window: expected [low, high]")
    grad = _numlist("verify.grad_exponents", ver.get("grad_exponents", [1, 2]))
    if any(r < 1 for r in grad):
        raise ConfigError("verify.grad_exponents: gradient sweeps need r >= 1")
    label = raw.get("case_label", Path(source).stem if source != "<dict>" else "case")
    if not isinstance(label, str) or not label:
        raise ConfigError("case_label: expected a non-empty string")
    outputs = raw.get("outputs", f"out/{label}")
    if not isinstance(outputs, str):
        raise ConfigError("outputs: expected a directory path")

    return ExperimentConfig(
        domain=domain,
        p=p,
        q=q,
        mu_schedule=tuple(mus),
        M=M,
        grading=grading,
        strength=strength,
        newton_tol=_num("tolerances.newton", t.get("newton", 1e-10), positive=True),
        monotone_tol=_num("tolerances.monotone", t.get("monotone", 1e-8), positive=True),
        sandwich_rel=_num("tolerances.sandwich_rel", t.get("sandwich_rel", 1e-2), positive=True),
        mu_lower=_num("mu_lower", raw.get("mu_lower", 1.0), positive=True),
        levels=levels,
        layer_eps_list=_numlist("limit.eps", lim.get("eps", [0.2]), positive=True),
        scaling_window=window,
        lr_exponents=_numlist("verify.lr_exponents", ver.get("lr_exponents", [0.5, 2])),
        grad_exponents=grad,
        layer_eps=_num("verify.layer_eps", ver.get("layer_eps", 0.2), positive=True),
        outputs=outputs,
        case_label=label,
        source=source,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return config_from_dict(raw, str(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
