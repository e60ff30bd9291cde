"""Batch front-end: ``fracsemi <command> --config <path> --out <dir>``.

Reads a JSON configuration, runs one command and writes ``report.json`` plus
CSV profiles into the output directory.  Identical configurations give
byte-identical outputs.  The exit status is 0 iff every certification of
the run passed, 1 if one failed and 2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import barriers, semipositone, spectral, variational
from .errors import ConfigurationError, FracSemiError
from .fraclap import assemble
from .mesh import make_grid

log = logging.getLogger(__name__)

COMMANDS = ("validate-operator", "eigen", "barriers", "solve-p0", "lambda0", "solve",
            "thresholds", "sweep")
OPERATOR_ONLY = ("validate-operator", "eigen")
NEEDS_R = ("solve", "thresholds", "sweep")

TOLERANCE_DEFAULTS = {
    "torsion": 0.05,
    "eigen": 1e-10,
    "threshold": 1e-6,
    "monotone": 1e-8,
    "lambda0_rel": 0.05,
    "minimizer": 1e-10,
    "mountain_pass": 1e-8,
    "verify": 1e-5,
}

_KNOWN = {"s", "q", "r", "alpha1", "alpha2", "domain", "n", "lambda", "mu", "tolerances",
          "seed", "options"}
_LAMBDA_REFS = ("lambda_star",)
_MU_REFS = ("mu_lambda", "mu_limit")


@dataclass(frozen=True)
class Ladder:
    start: float
    stop: float
    points: int
    scale: str = "linear"
    of: str | None = None

    def values(self) -> list[float]:
        if self.scale == "linear":
            v = np.linspace(self.start, self.stop, self.points)
        else:
            v = np.geomspace(self.start, self.stop, self.points)
        return [float(x) for x in v]


@dataclass(frozen=True)
class Param:
    """A scalar given outright or as ``factor`` times a computed reference."""
    value: float | None = None
    factor: float | None = None
    of: str | None = None

    def resolve(self, refs: dict) -> float:
        if self.value is not None:
            return self.value
        return self.factor * refs[self.of]


@dataclass(frozen=True)
class RunConfig:
    command: str
    s: float
    domain: tuple
    n: int
    q: float | None = None
    r: float | None = None
    alpha1: float | None = None
    alpha2: float | None = None
    lam: Param | Ladder | None = None
    mu: Param | Ladder | None = None
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCE_DEFAULTS))
    seed: int = 0
    options: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def spec(p):
            if p is None:
                return None
            if isinstance(p, Ladder):
                return {"from": p.start, "to": p.stop, "points": p.points, "scale": p.scale,
                        "of": p.of}
            if p.value is not None:
                return p.value
            return {"factor": p.factor, "of": p.of}
        return {"command": self.command, "s": self.s, "domain": list(self.domain), "n": self.n,
                "q": self.q, "r": self.r, "alpha1": self.alpha1, "alpha2": self.alpha2,
                "lambda": spec(self.lam), "mu": spec(self.mu), "tolerances": self.tolerances,
                "seed": self.seed, "options": self.options}


def _real(raw, name, required=True):
    if name not in raw or raw[name] is None:
        if required:
            raise ConfigurationError(f"config field '{name}' is required")
        return None
    v = raw[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigurationError(f"config field '{name}' must be a finite number, got {v!r}")
    return float(v)


def _param(raw, name, refs, allow_ladder):
    if name not in raw or raw[name] is None:
        return None
    v = raw[name]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return Param(value=_real(raw, name))
    if not isinstance(v, dict):
        raise ConfigurationError(f"config field '{name}' must be a number or an object")
    of = v.get("of")
    if of is not None and of not in refs:
        raise ConfigurationError(f"config field '{name}.of' must be one of {refs}, got {of!r}")
    if "from" in v or "to" in v or "points" in v:
        if not allow_ladder:
            raise ConfigurationError(f"config field '{name}' must be a scalar for this command")
        for key in ("from", "to", "points"):
            if key not in v:
                raise ConfigurationError(f"config field '{name}.{key}' is required for a ladder")
        start, stop = _real(v, "from"), _real(v, "to")
        points = v["points"]
        scale = v.get("scale", "linear")
        if not isinstance(points, int) or isinstance(points, bool) or points < 1:
            raise ConfigurationError(f"config field '{name}.points' must be a positive integer")
        if scale not in ("linear", "geometric"):
            raise ConfigurationError(f"config field '{name}.scale' must be linear or geometric")
        if scale == "geometric" and not (start > 0 and stop > 0):
            raise ConfigurationError(f"config field '{name}': geometric ladders need positive ends")
        return Ladder(start, stop, points, scale, of)
    if "factor" not in v or of is None:
        raise ConfigurationError(f"config field '{name}' needs 'factor' and 'of'")
    return Param(factor=_real(v, "factor"), of=of)


def parse_config(raw: dict, command: str) -> RunConfig:
    """Validate a raw JSON mapping against the constraints of every module involved."""
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}; choose from {COMMANDS}")
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigurationError(f"unknown config field '{unknown[0]}'")
    s = _real(raw, "s")
    operator_only = command in OPERATOR_ONLY
    if operator_only:
        if not 0.0 < s < 1.0:
            raise ConfigurationError(f"config field 's' must lie in (0, 1), got {s}")
    elif not 0.0 < s < 0.5:
        raise ConfigurationError(f"config field 's' must lie in (0, 1/2) for {command}, got {s}")
    dom = raw.get("domain", [-1.0, 1.0])
    if (not isinstance(dom, (list, tuple)) or len(dom) != 2
            or not all(isinstance(d, (int, float)) and not isinstance(d, bool) for d in dom)
            or not dom[0] < dom[1]):
        raise ConfigurationError(f"config field 'domain' must be [x_left, x_right] with "
                                 f"x_left < x_right, got {dom!r}")
    n = raw.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 4:
        raise ConfigurationError(f"config field 'n' must be an integer >= 4, got {n!r}")
    q = _real(raw, "q", required=not operator_only)
    if q is not None and not 0.0 < q < 1.0:
        raise ConfigurationError(f"config field 'q' must lie in (0, 1), got {q}")
    r = _real(raw, "r", required=command in NEEDS_R)
    if r is not None and not operator_only:
        top = 2.0 / (1.0 - 2.0 * s) - 1.0
        if not 1.0 < r <= top + 1e-12:
            raise ConfigurationError(
                f"config field 'r' = {r} violates 1 < r <= 2/(1-2s) - 1 = {top:.12g}"
                + (" (supercritical)" if r > top else ""))
    alpha1 = _real(raw, "alpha1", required=False)
    if alpha1 is not None and q is not None and not 1.0 < alpha1 < 1.0 / (1.0 - q):
        raise ConfigurationError(f"config field 'alpha1' must lie in (1, 1/(1-q)) = "
                                 f"(1, {1.0 / (1.0 - q):.12g}), got {alpha1}")
    alpha2 = _real(raw, "alpha2", required=False)
    if alpha2 is not None and q is not None and not alpha2 > 1.0 / (1.0 - q):
        raise ConfigurationError(f"config field 'alpha2' must exceed 1/(1-q) = "
                                 f"{1.0 / (1.0 - q):.12g}, got {alpha2}")
    sweep = command == "sweep"
    lam = _param(raw, "lambda", _LAMBDA_REFS, sweep)
    mu = _param(raw, "mu", _MU_REFS, sweep)
    if isinstance(mu, Param) and mu.value is not None and mu.value < 0:
        raise ConfigurationError(f"config field 'mu' must be nonnegative, got {mu.value}")
    if isinstance(lam, Param) and lam.value is not None and not lam.value > 0:
        raise ConfigurationError(f"config field 'lambda' must be positive, got {lam.value}")
    if sweep and (not isinstance(lam, Ladder) or mu is None):
        raise ConfigurationError("sweep needs a 'lambda' ladder and a 'mu' ladder or scalar")
    if isinstance(mu, Ladder) and mu.of is not None:
        raise ConfigurationError("config field 'mu.of' is not supported for ladders")
    tol = dict(TOLERANCE_DEFAULTS)
    for k, v in (raw.get("tolerances") or {}).items():
        if k not in TOLERANCE_DEFAULTS:
            raise ConfigurationError(f"unknown config field 'tolerances.{k}'")
        tol[k] = _real(raw["tolerances"], k)
        if not tol[k] > 0:
            raise ConfigurationError(f"config field 'tolerances.{k}' must be positive")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigurationError(f"config field 'seed' must be a nonnegative integer, got {seed!r}")
    options = raw.get("options") or {}
    if not isinstance(options, dict):
        raise ConfigurationError("config field 'options' must be an object")
    return RunConfig(command, s, (float(dom[0]), float(dom[1])), n, q, r, alpha1, alpha2, lam,
                     mu, tol, seed, options)


# ---- deterministic output --------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(x, ".17g")


def _encode(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_)):
        return json.dumps(bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return _fmt(x) if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(obj[k], indent + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Stable JSON: sorted keys, 17 significant digits, non-finite floats as null."""
    return _encode(obj) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _fmt(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _profile_rows(grid, *columns):
    return zip(grid.nodes, *columns)


# ---- commands --------------------------------------------------------------------------

class Run:
    """Holds the configuration, lazily computed objects and the outputs of one command."""

    def __init__(self, cfg: RunConfig, out: str):
        self.cfg = cfg
        self.out = out
        self.grid = make_grid(cfg.domain[0], cfg.domain[1], cfg.n)
        self.op = assemble(self.grid, cfg.s)
        self.results: dict = {}
        self.certs: dict = {}
        self._eig = None
        self._threshold = None
        self._z1 = None

    @property
    def eig(self):
        if self._eig is None:
            self._eig = spectral.principal_eigenpair(self.op, rtol=self.cfg.tolerances["eigen"])
        return self._eig

    @property
    def alpha1(self):
        return self.cfg.alpha1 if self.cfg.alpha1 is not None else barriers.default_alpha1(self.cfg.q)

    @property
    def z1(self):
        if self._z1 is None:
            self._z1 = barriers.solve_sublinear(self.op, 1.0, self.cfg.q, tol=1e-12)
        return self._z1

    @property
    def threshold(self):
        if self._threshold is None:
            self._threshold = barriers.subsolution_threshold(
                self.op, self.eig, self.cfg.q, self.alpha1, tol=self.cfg.tolerances["threshold"],
                z1=self.z1)
        return self._threshold

    def lam(self) -> float:
        p = self.cfg.lam if self.cfg.lam is not None else Param(factor=2.0, of="lambda_star")
        if isinstance(p, Param) and p.of is None:
            return p.value
        return p.resolve({"lambda_star": self.threshold.lambda_star})

    def csv(self, name, header, rows):
        write_csv(os.path.join(self.out, name), header, rows)
        return name


def cmd_validate_operator(run: Run):
    op = run.op
    dense = op.dense()
    off = dense - np.diag(np.diag(dense))
    psi = barriers.torsion(op)
    m, half = run.grid.midpoint, run.grid.length / 2.0
    x = run.grid.nodes
    # closed form of the torsion function on an interval of half-width R
    kappa = 4.0**op.s * math.gamma(0.5 + op.s) * math.gamma(1.0 + op.s) / math.gamma(0.5)
    exact = np.clip(half**2 - (x - m) ** 2, 0.0, None) ** op.s / kappa
    inner = np.abs(x - m) <= 0.9 * half
    rel = float(np.max(np.abs(psi.values[inner] - exact[inner]) / exact[inner]))
    run.results.update({
        "c_ns": op.c_ns,
        "diagonal": float(op.diag[0]),
        "symmetric": bool(np.array_equal(dense, dense.T)),
        "offdiag_max": float(off.max()),
        "row_excess_min": float(op.row_excess.min()),
        "torsion_max_rel_error": rel,
        "torsion_window": 0.9,
        "profile_csv": run.csv("torsion.csv", ["x", "psi", "exact"],
                               _profile_rows(run.grid, psi.values, exact)),
    })
    run.certs["symmetric"] = run.results["symmetric"]
    run.certs["m_matrix"] = bool(off.max() <= 0 and op.row_excess.min() > 0)
    run.certs["torsion"] = rel < run.cfg.tolerances["torsion"]


def cmd_eigen(run: Run):
    eig = run.eig
    phi = eig.phi1.values
    lam1 = eig.lambda1
    res = float(np.abs(run.op.matvec_direct(phi) - lam1 * phi).max())
    sym = float(np.abs(phi - phi[::-1]).max())
    run.results.update({
        "lambda1": lam1, "residual_inf": res, "iterations": eig.iterations,
        "min_phi": float(phi.min()), "symmetry_defect": sym,
        "profile_csv": run.csv("eigen.csv", ["x", "phi1"], _profile_rows(run.grid, phi)),
    })
    run.certs["residual"] = res < 10.0 * run.cfg.tolerances["eigen"] * lam1
    run.certs["positive"] = bool(phi.min() > 0)


def cmd_barriers(run: Run):
    th = run.threshold
    lam = run.lam()
    bs = barriers.build_barriers(run.op, run.eig, lam, run.cfg.q, run.alpha1, run.cfg.alpha2)
    run.results.update({
        "lambda_star": th.lambda_star, "lambda_order": th.lambda_order,
        "margin_at_star": th.margin_at_star, "margin_below": th.margin_below,
        "lambda": lam, "alpha1": bs.alpha1, "alpha2": bs.alpha2, "margins": bs.margins,
        "ordered": bs.ordered,
        "barriers_csv": run.csv("barriers.csv", ["x", "u_under", "z_super", "psi_super", "h"],
                                _profile_rows(run.grid, bs.u_under.values, bs.z_super.values,
                                              bs.psi_super.values, bs.h.values)),
    })
    run.certs["subsolution"] = bs.margins["subsolution"] <= 0
    run.certs["ordered"] = bs.ordered
    run.certs["h_positive"] = bs.margins["h_min"] > 0


def _solution_csv(run, k, u, u_under, res):
    return run.csv(f"solution_{k}.csv", ["x", "u", "u_under", "residual"],
                   _profile_rows(run.grid, u.values, u_under.values, res.values))


def cmd_solve_p0(run: Run):
    cfg = run.cfg
    lam = run.lam()
    th = run.threshold
    bs = barriers.build_barriers(run.op, run.eig, lam, cfg.q, run.alpha1, cfg.alpha2)
    rep = semipositone.monotone_iterate(run.op, lam, 0.0, cfg.q, 1.0, bs.u_under, bs.z_super,
                                        "ascend", tol=cfg.tolerances["monotone"])
    res = semipositone.uncut_residual(run.op, rep.solution, lam, 0.0, cfg.q, 1.0)
    run.results.update({
        "lambda_star": th.lambda_star, "lambda": lam,
        "solution": rep.to_json(_solution_csv(run, 0, rep.solution, bs.u_under, res)),
        "subsolution_margin": bs.margins["subsolution"],
    })
    run.certs["subsolution"] = bs.margins["subsolution"] <= 0
    run.certs["converged"] = rep.converged
    run.certs["ordering"] = rep.ordering_ok
    run.certs["residual"] = rep.residual_inf < cfg.tolerances["monotone"]


def cmd_lambda0(run: Run):
    cfg = run.cfg
    br = semipositone.estimate_lambda0(run.op, cfg.q, rel_tol=cfg.tolerances["lambda0_rel"],
                                       tol=cfg.tolerances["monotone"])
    run.results.update({"lambda_lo": br.lambda_lo, "lambda_hi": br.lambda_hi,
                        "rel_width": br.rel_width, "detector_lo": br.detector_lo,
                        "detector_hi": br.detector_hi, "evaluations": len(br.trace)})
    run.certs["bracket"] = br.rel_width <= cfg.tolerances["lambda0_rel"]


def _nonlinearity(run: Run, lam: float):
    under = barriers.subsolution(run.eig, lam, run.alpha1, run.cfg.q)
    margin = barriers.certify_subsolution(run.op, under, lam, run.cfg.q)
    nl = variational.make_nonlinearity(lam, 0.0, run.cfg.q, run.cfg.r, run.cfg.s, under)
    return nl, margin


def _mu_refs(th: variational.ThresholdReport, critical: bool) -> dict:
    limit = min(th.mu_lambda, th.mu0_critical) if critical else th.mu_lambda
    return {"mu_lambda": th.mu_lambda, "mu_limit": limit}


def _resolve_mu(run, th, critical):
    p = run.cfg.mu if run.cfg.mu is not None else Param(factor=0.5, of="mu_limit")
    return p.resolve(_mu_refs(th, critical))


def cmd_thresholds(run: Run):
    lam = run.lam()
    nl, margin = _nonlinearity(run, lam)
    embeds = variational.embedding_constants(run.op, nl.q, nl.r, seed=run.cfg.seed)
    th0 = variational.choose_rho_mu(nl, run.op, embeds=embeds)
    mu = _resolve_mu(run, th0, nl.critical)
    th = variational.choose_rho_mu(nl.with_mu(mu), run.op, embeds=embeds)
    run.results.update({"lambda": lam, "mu": mu, "subsolution_margin": margin,
                        "critical_case": nl.critical, "thresholds": th.to_json(),
                        "growth_c": nl.growth_c, "growth_cprime": nl.growth_cprime})
    run.certs["subsolution"] = margin <= 0
    run.certs["boundary_bound"] = th.boundary_inf_bound > 0


def cmd_solve(run: Run):
    cfg = run.cfg
    tol = cfg.tolerances
    lam = run.lam()
    nl, margin = _nonlinearity(run, lam)
    embeds = variational.embedding_constants(run.op, nl.q, nl.r, seed=cfg.seed)
    th0 = variational.choose_rho_mu(nl, run.op, embeds=embeds)
    mu = _resolve_mu(run, th0, nl.critical)
    nl = nl.with_mu(mu)
    th = variational.choose_rho_mu(nl, run.op, embeds=embeds)
    limit = _mu_refs(th, nl.critical)["mu_limit"]
    run.results.update({"lambda": lam, "mu": mu, "subsolution_margin": margin,
                        "critical_case": nl.critical, "thresholds": th.to_json()})
    run.certs["subsolution"] = margin <= 0
    run.certs["mu_below_threshold"] = mu < limit
    run.certs["boundary_bound"] = th.boundary_inf_bound > 0
    sols = []
    u0 = variational.minimize_in_ball(nl, run.op, th.rho, tol=tol["minimizer"], eig=run.eig,
                                      seed=cfg.seed)
    sols.append(u0)
    run.certs["minimizer_energy_nonpositive"] = u0.energy <= 0
    run.certs["minimizer_interior"] = not u0.diagnostics["boundary_contact"]
    if not nl.critical:
        mp = variational.mountain_pass(nl, run.op, u0.solution, th.rho, tol=tol["mountain_pass"],
                                       eig=run.eig)
        sols.append(mp)
        run.certs["mountain_pass_energy_positive"] = mp.energy > 0
        run.certs["distinct"] = not mp.diagnostics["merged"]
    out = []
    for k, rep in enumerate(sols):
        chk = variational.verify_solution(nl, run.op, rep.solution, tol=tol["verify"])
        res = semipositone.uncut_residual(run.op, rep.solution, lam, mu, nl.q, nl.r)
        entry = rep.to_json(_solution_csv(run, k, rep.solution, nl.u_under, res))
        entry["check"] = chk.to_json()
        entry["gradient_sup"] = rep.diagnostics["gradient_sup"]
        if rep.classification == "mountain-pass":
            d = rep.diagnostics
            entry.update({"path_max": d["path_max"], "morse_index": d["morse_index"],
                          "separation": d["separation"], "sep_min": d["sep_min"],
                          "merged": d["merged"], "sweeps": d["sweeps"]})
        out.append(entry)
        run.certs[f"verify_{k}"] = chk.passed
    run.results["solutions"] = out
    run.results["solution_count"] = len(out)


# ---- sweep -----------------------------------------------------------------------------

_CTX: dict = {}


def _sweep_context(cfg: RunConfig) -> dict:
    key = dumps(cfg.to_json())
    if _CTX.get("key") == key:
        return _CTX
    grid = make_grid(cfg.domain[0], cfg.domain[1], cfg.n)
    op = assemble(grid, cfg.s)
    eig = spectral.principal_eigenpair(op, rtol=cfg.tolerances["eigen"])
    alpha1 = cfg.alpha1 if cfg.alpha1 is not None else barriers.default_alpha1(cfg.q)
    z1 = barriers.solve_sublinear(op, 1.0, cfg.q, tol=1e-12)
    th = barriers.subsolution_threshold(op, eig, cfg.q, alpha1, tol=cfg.tolerances["threshold"],
                                        z1=z1)
    _CTX.clear()
    _CTX.update(key=key, op=op, eig=eig, alpha1=alpha1, z1=z1, lambda_star=th.lambda_star,
                embeds=None)
    return _CTX


def _worker_init(cfg):
    _sweep_context(cfg)


def sweep_point(cfg: RunConfig, lam: float, mu: float) -> dict:
    """One phase-diagram row; failures are recorded in the row, never raised."""
    ctx = _sweep_context(cfg)
    op, tol = ctx["op"], cfg.tolerances
    row = {"lambda": lam, "mu": mu, "detector": False, "solution_count": 0, "m0": None,
           "m_mu": None, "min_value": None, "residual_0": None, "residual_1": None,
           "status": ""}
    try:
        ok, rep = semipositone.lambda0_detector(op, lam, cfg.q, ctx["z1"], tol=tol["monotone"])
        row["detector"] = ok
        if not ok:
            row["status"] = "detector-negative"
            return row
        if mu == 0:
            row.update(solution_count=1, min_value=rep.min_value, residual_0=rep.residual_inf,
                       status="monotone-limit")
            return row
        if lam < ctx["lambda_star"]:
            row["status"] = "no-certified-subsolution"
            return row
        under = barriers.subsolution(ctx["eig"], lam, ctx["alpha1"], cfg.q)
        nl = variational.make_nonlinearity(lam, mu, cfg.q, cfg.r, cfg.s, under)
        if ctx["embeds"] is None:
            ctx["embeds"] = variational.embedding_constants(op, cfg.q, cfg.r, seed=cfg.seed)
        th = variational.choose_rho_mu(nl, op, embeds=ctx["embeds"])
        if not mu < _mu_refs(th, nl.critical)["mu_limit"]:
            row["status"] = "mu-above-threshold"
            return row
        u0 = variational.minimize_in_ball(nl, op, th.rho, tol=tol["minimizer"], eig=ctx["eig"],
                                          seed=cfg.seed)
        c0 = variational.verify_solution(nl, op, u0.solution, tol=tol["verify"], decay_band=None)
        count = int(c0.passed)
        row.update(m0=u0.energy, min_value=u0.min_value, residual_0=c0.uncut_residual_inf)
        status = "minimizer"
        if not nl.critical:
            mp = variational.mountain_pass(nl, op, u0.solution, th.rho, tol=tol["mountain_pass"],
                                           eig=ctx["eig"])
            c1 = variational.verify_solution(nl, op, mp.solution, tol=tol["verify"],
                                             decay_band=None)
            row.update(m_mu=mp.energy, residual_1=c1.uncut_residual_inf)
            if c1.passed and not mp.diagnostics["merged"]:
                count += 1
                status = "two-solutions"
            elif mp.diagnostics["merged"]:
                status = "merged"
        else:
            status = "critical-case"
        row.update(solution_count=count, status=status)
    except FracSemiError as exc:
        row["status"] = f"error: {type(exc).__name__}"
        log.warning("sweep point (%g, %g) failed: %s", lam, mu, exc)
    return row


def _ladder(p, refs):
    if isinstance(p, Ladder):
        vals = p.values()
        if p.of is not None:
            vals = [v * refs[p.of] for v in vals]
        return vals
    return [p.resolve(refs)]


SWEEP_COLUMNS = ["lambda", "mu", "detector", "solution_count", "m0", "m_mu", "min_value",
                 "residual_0", "residual_1", "status"]


def cmd_sweep(run: Run, workers: int = 1):
    cfg = run.cfg
    ctx = _sweep_context(cfg)
    lams = _ladder(cfg.lam, {"lambda_star": ctx["lambda_star"]})
    mus = _ladder(cfg.mu, {})
    jobs = sorted((lam, mu) for lam in lams for mu in mus)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(cfg,)) as pool:
            rows = list(pool.map(sweep_point, [cfg] * len(jobs), *zip(*jobs)))
    else:
        rows = [sweep_point(cfg, lam, mu) for lam, mu in jobs]
    run.csv("sweep.csv", SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in rows))
    errors = [r for r in rows if r["status"].startswith("error")]
    run.results.update({"lambda_star": ctx["lambda_star"], "rows": len(rows),
                        "lambda_values": lams, "mu_values": mus, "failed_points": len(errors),
                        "sweep_csv": "sweep.csv"})
    run.certs["all_points_ran"] = not errors


DISPATCH = {
    "validate-operator": cmd_validate_operator,
    "eigen": cmd_eigen,
    "barriers": cmd_barriers,
    "solve-p0": cmd_solve_p0,
    "lambda0": cmd_lambda0,
    "solve": cmd_solve,
    "thresholds": cmd_thresholds,
    "sweep": cmd_sweep,
}


def run_command(cfg: RunConfig, out: str, force: bool = False, workers: int = 1) -> int:
    """Execute one command and write its artifacts; returns the exit status."""
    if os.path.exists(os.path.join(out, "report.json")) and not force:
        raise ConfigurationError(f"{out} already holds a report; pass --force to overwrite")
    os.makedirs(out, exist_ok=True)
    run = Run(cfg, out)
    error = None
    try:
        if cfg.command == "sweep":
            cmd_sweep(run, workers=workers)
        else:
            DISPATCH[cfg.command](run)
    except FracSemiError as exc:
        error = {"type": type(exc).__name__, "message": str(exc)}
        run.certs["completed"] = False
    passed = bool(run.certs) and all(run.certs.values())
    report = {"command": cfg.command, "config": cfg.to_json(), "results": run.results,
              "certifications": run.certs, "passed": passed, "error": error}
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(report))
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracsemi", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="sweep worker processes")
    p.add_argument("--force", action="store_true", help="overwrite an existing report")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        if args.workers < 1:
            raise ConfigurationError("--workers must be at least 1")
        cfg = parse_config(raw, args.command)
        return run_command(cfg, args.out, force=args.force, workers=args.workers)
    except (ConfigurationError, json.JSONDecodeError, OSError) as exc:
        print(f"fracsemi: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
