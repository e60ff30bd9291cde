"""Monotone iteration between ordered barriers and the lambda_0 detector."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .barriers import solve_sublinear, torsion
from .errors import (ConfigurationError, DiagnosticError, InfeasibleError,
                     MonotonicityError, NonConvergenceError, UsageError)
from .fraclap import DiscreteFracLap
from .mesh import FieldFunction, boundary_decay_exponent

__all__ = [
    "SolveReport",
    "uncut_rhs",
    "uncut_residual",
    "monotone_iterate",
    "supersolution_mu",
    "largest_certified_mu",
    "Lambda0Bracket",
    "lambda0_detector",
    "estimate_lambda0",
]

log = logging.getLogger(__name__)

CLASSIFICATIONS = ("monotone-limit", "minimizer", "mountain-pass")


@dataclass
class SolveReport:
    solution: FieldFunction
    residual_inf: float
    iterations: int
    converged: bool
    classification: str
    ordering_ok: bool
    min_value: float
    decay_exponent: float
    tol: float
    energy: float | None = None
    params: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.classification not in CLASSIFICATIONS:
            raise UsageError(f"unknown classification {self.classification!r}")

    def to_json(self, solution_csv_path: str | None = None) -> dict:
        """JSON-ready summary; the profile itself goes to a CSV file."""
        return {
            "solution_csv_path": solution_csv_path,
            "residual_inf": self.residual_inf,
            "iterations": self.iterations,
            "converged": self.converged,
            "classification": self.classification,
            "ordering_ok": self.ordering_ok,
            "min_value": self.min_value,
            "decay_exponent": self.decay_exponent,
            "energy": self.energy,
            "params": self.params,
        }

    def dumps(self, solution_csv_path: str | None = None) -> str:
        return json.dumps(self.to_json(solution_csv_path), indent=2, sort_keys=True,
                          allow_nan=True)


def _pos_pow(u, p):
    return np.where(u > 0, np.abs(u) ** p, 0.0)


def uncut_rhs(u: np.ndarray, lam: float, mu: float, q: float, r: float) -> np.ndarray:
    """lam (u^q - 1) + mu u^r with the powers extended by 0 for u < 0."""
    return lam * (_pos_pow(u, q) - 1.0) + mu * _pos_pow(u, r)


def uncut_residual(op: DiscreteFracLap, u: FieldFunction, lam: float, mu: float,
                   q: float, r: float = 2.0) -> FieldFunction:
    """Pointwise residual A u - lam (u^q - 1) - mu u^r."""
    if u.grid != op.grid:
        raise UsageError("field grid does not match the operator grid")
    return FieldFunction(op.grid, op.matvec_direct(u.values) - uncut_rhs(u.values, lam, mu, q, r))


def _decay(u):
    try:
        return boundary_decay_exponent(u)
    except DiagnosticError:
        return float("nan")


def monotone_iterate(op: DiscreteFracLap, lam: float, mu: float, q: float, r: float,
                     lower: FieldFunction | None, upper: FieldFunction, direction: str = "ascend",
                     tol: float = 1e-8, shift: float = 0.0, maxiter: int = 100000,
                     stop_on_nonpositive: bool = False) -> SolveReport:
    """Fixed-point sweep u <- (A + M)^-1 (lam (u^q - 1) + mu u^r + M u).

    Starts at ``lower`` (ascend) or ``upper`` (descend); a descending run
    may pass ``lower=None`` when no subsolution is known.  Every step is
    checked for pointwise monotonicity; a violation raises
    MonotonicityError.  Stops when both the sup-norm step and the uncut
    residual fall below ``tol``.

    With ``stop_on_nonpositive`` a descending run returns as soon as an
    iterate reaches zero somewhere: the limit can only be lower.
    """
    if direction not in ("ascend", "descend"):
        raise UsageError(f"direction must be 'ascend' or 'descend', got {direction!r}")
    if mu < 0:
        raise ConfigurationError(f"mu must be nonnegative, got {mu}")
    if shift < 0:
        raise ConfigurationError(f"shift must be nonnegative, got {shift}")
    if lower is None:
        if direction == "ascend":
            raise UsageError("an ascending run needs a lower barrier")
        lower = FieldFunction(upper.grid, np.full(upper.grid.n, -np.finfo(float).max))
    for f in (lower, upper):
        if f.grid != op.grid:
            raise UsageError("barrier grid does not match the operator grid")
    lo = lower.values
    up = upper.values
    if np.any(lo > up):
        raise ConfigurationError("barriers are not ordered: lower > upper somewhere")
    factor = op.cholesky(shift)
    u = (lo if direction == "ascend" else up).copy()
    sign = 1.0 if direction == "ascend" else -1.0
    converged = False
    res = step = float("inf")
    it = 0
    stopped_early = False
    for it in range(1, maxiter + 1):
        rhs = uncut_rhs(u, lam, mu, q, r) + shift * u
        u_new = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        slack = 1e-13 * max(float(np.abs(u).max()), 1.0)
        bad = np.flatnonzero(sign * (u_new - u) < -slack)
        if bad.size:
            i = int(bad[0])
            raise MonotonicityError(
                f"{direction} step {it} moved node {i + 1} the wrong way by "
                f"{abs(u_new[i] - u[i]):.3e} ({bad.size} nodes)")
        step = float(np.abs(u_new - u).max())
        u = u_new
        res = float(np.abs(op.matvec_direct(u) - uncut_rhs(u, lam, mu, q, r)).max())
        if step < tol and res < tol:
            converged = True
            break
        if stop_on_nonpositive and direction == "descend" and u.min() <= 0:
            stopped_early = True
            break
    sol = FieldFunction(op.grid, u)
    slack = 1e-12 * max(float(np.abs(up).max()), 1.0)
    inside = bool(np.all(u >= lo - slack) and np.all(u <= up + slack))
    ordering_ok = inside and float(u.min()) > 0
    if not converged and not stopped_early:
        log.warning("monotone %s hit the cap (%d steps): step %.2e residual %.2e",
                    direction, maxiter, step, res)
    return SolveReport(
        solution=sol,
        residual_inf=res,
        iterations=it,
        converged=converged,
        classification="monotone-limit",
        ordering_ok=ordering_ok,
        min_value=float(u.min()),
        decay_exponent=_decay(sol) if u.min() > 0 else float("nan"),
        tol=tol,
        params={"lambda": lam, "mu": mu, "q": q, "r": r, "direction": direction,
                "shift": shift, "s": op.s, "n": op.n},
        diagnostics={"last_step": step, "stopped_at_nonpositive": stopped_early},
    )


def supersolution_mu(op: DiscreteFracLap, lam: float, mu: float, q: float, r: float,
                     alpha2: float, psi: FieldFunction | None = None):
    """Return (lam^alpha2 psi, margin) with margin = min_i[(A u)_i - lam(u_i^q - 1) - mu u_i^r].

    The supersolution certificate holds iff margin >= 0.
    """
    if not alpha2 > 1.0 / (1.0 - q):
        raise ConfigurationError(
            f"alpha2 must exceed 1/(1-q) = {1.0 / (1.0 - q):.12g}, got {alpha2}")
    if psi is None:
        psi = torsion(op)
    upper = lam**alpha2 * psi
    margin = float(np.min(op.matvec_direct(upper.values) - uncut_rhs(upper.values, lam, mu, q, r)))
    return upper, margin


def largest_certified_mu(op: DiscreteFracLap, lam: float, q: float, r: float, alpha2: float,
                         psi: FieldFunction | None = None) -> float:
    """Largest mu for which lam^alpha2 psi stays a supersolution.

    The margin is affine in mu, so the bisection limit is a closed form:
    min_i [(A u)_i - lam (u_i^q - 1)] / u_i^r.  Zero when even mu = 0 fails.
    """
    upper, m0 = supersolution_mu(op, lam, 0.0, q, r, alpha2, psi)
    if m0 < 0:
        return 0.0
    u = upper.values
    slack = op.matvec_direct(u) - uncut_rhs(u, lam, 0.0, q, r)
    return float(np.min(slack / u**r))


def lambda0_detector(op: DiscreteFracLap, lam: float, q: float, z1: FieldFunction,
                     tol: float = 1e-8, maxiter: int = 200000) -> tuple[bool, SolveReport]:
    """lam is declared admissible iff the descent from z_lam converges to a positive limit.

    z_lam = lam^(1/(1-q)) z1 (exact rescaling of the unit-lambda solution).
    """
    z = lam ** (1.0 / (1.0 - q)) * z1
    rep = monotone_iterate(op, lam, 0.0, q, 1.0, lower=None, upper=z, direction="descend",
                           tol=tol, maxiter=maxiter, stop_on_nonpositive=True)
    ok = rep.converged and rep.min_value > 0 and rep.residual_inf <= tol
    return ok, rep


@dataclass(frozen=True)
class Lambda0Bracket:
    lambda_lo: float
    lambda_hi: float
    detector_lo: bool
    detector_hi: bool
    trace: tuple

    @property
    def rel_width(self) -> float:
        return (self.lambda_hi - self.lambda_lo) / self.lambda_hi


def estimate_lambda0(op: DiscreteFracLap, q: float, rel_tol: float = 0.05, lam_start: float = 1e-2,
                     cap: float = 1e8, tol: float = 1e-8, maxiter: int = 200000) -> Lambda0Bracket:
    """Bracket the smallest lam admitting a positive discrete solution.

    Geometric scan (factor 2) from ``lam_start`` to the first admissible
    lam, then bisection in log-scale down to relative width ``rel_tol``.
    Both endpoints are re-run at the end.
    """
    if not rel_tol > 0:
        raise ConfigurationError(f"rel_tol must be positive, got {rel_tol}")
    z1 = solve_sublinear(op, 1.0, q, tol=1e-13)
    trace = []

    def detect(lam):
        ok, rep = lambda0_detector(op, lam, q, z1, tol=tol, maxiter=maxiter)
        trace.append((float(lam), bool(ok), rep.iterations, rep.min_value))
        return ok

    lam = lam_start
    if detect(lam):
        raise InfeasibleError(f"detector already true at the lower bracket {lam_start:g}",
                              trace=trace)
    lo = lam
    while True:
        lam = lam * 2.0
        if lam > cap:
            raise InfeasibleError(f"detector false up to the cap {cap:g}", trace=trace)
        if detect(lam):
            hi = lam
            break
        lo = lam
    while (hi - lo) / hi > rel_tol:
        mid = float(np.sqrt(lo * hi))
        if detect(mid):
            hi = mid
        else:
            lo = mid
    d_lo = detect(lo)
    d_hi = detect(hi)
    if d_lo or not d_hi:
        raise DiagnosticError(f"bracket endpoints failed re-verification ({d_lo}, {d_hi})")
    return Lambda0Bracket(lo, hi, d_lo, d_hi, tuple(trace))
