"""Explicit barrier functions for the semipositone problem.

* torsion function psi with A psi = 1,
* the sublinear supersolution z solving A z = lam z^q,
* h(x), the quadratic-defect integral of phi_1 (two independent routes),
* the subsolution lam^alpha1 phi_1^2 and its pointwise certificate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (ConfigurationError, ConsistencyError, DiagnosticError,
                     InfeasibleError, NonConvergenceError)
from .fraclap import DiscreteFracLap, apply
from .mesh import FieldFunction, boundary_decay_exponent
from .spectral import Eigenpair, solve_linear

__all__ = [
    "BarrierSet",
    "HReport",
    "ThresholdResult",
    "torsion",
    "solve_sublinear",
    "compute_h",
    "h_by_quadrature",
    "subsolution",
    "certify_subsolution",
    "subsolution_threshold",
    "ordering_threshold",
    "default_alpha1",
    "build_barriers",
]

log = logging.getLogger(__name__)

LAMBDA_CAP = 1e8


def default_alpha1(q: float) -> float:
    """Midpoint of the admissible exponent interval (1, 1/(1-q))."""
    return 0.5 * (1.0 + 1.0 / (1.0 - q))


def _check_q(q):
    if not 0.0 < q < 1.0:
        raise ConfigurationError(f"q must lie in (0, 1), got {q}")


def _check_alpha1(alpha1, q):
    _check_q(q)
    hi = 1.0 / (1.0 - q)
    if not 1.0 < alpha1 < hi:
        raise ConfigurationError(
            f"alpha1 = {alpha1} outside the admissible open interval (1, {hi:.12g})")


def torsion(op: DiscreteFracLap, tol: float = 1e-12) -> FieldFunction:
    """Solve A psi = 1."""
    psi = solve_linear(op, 0.0, op.grid.ones(), tol)
    if psi.min() <= 0:
        raise DiagnosticError("torsion function is not positive; M-matrix property lost")
    return psi


def solve_sublinear(op: DiscreteFracLap, lam: float, q: float, tol: float = 1e-10,
                    t: float | None = None, psi: FieldFunction | None = None,
                    maxiter: int = 10000, return_trace: bool = False):
    """Positive solution of A z = lam z^q by monotone descent from t*psi.

    ``t`` defaults to the smallest multiplier with t^(1-q) >= lam max(psi)^q,
    which makes t*psi a supersolution.  ``tol`` bounds the sup-norm residual.
    """
    _check_q(q)
    if not lam > 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    if psi is None:
        psi = torsion(op)
    tmin = (lam * psi.max() ** q) ** (1.0 / (1.0 - q))
    if t is None:
        t = tmin
    elif t < tmin * (1 - 1e-14):
        raise ConfigurationError(f"start multiplier {t} is below the supersolution bound {tmin}")
    factor = op.cholesky(0.0)
    z = t * psi.values
    trace = []
    for it in range(1, maxiter + 1):
        rhs = lam * z**q
        z_new = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        if np.any(z_new <= 0):
            raise DiagnosticError(f"sublinear iterate lost positivity at step {it}")
        res = float(np.abs(op.matvec_direct(z_new) - lam * z_new**q).max())
        trace.append(res)
        rise = float((z_new - z).max())
        if rise > 1e-12 * z.max():
            raise DiagnosticError(f"sublinear descent increased by {rise:.3e} at step {it}")
        z = z_new
        if res <= tol:
            break
    else:
        raise NonConvergenceError(f"sublinear iteration stalled at residual {trace[-1]:.3e}",
                                  best=FieldFunction(op.grid, z), residual=trace[-1], trace=trace)
    out = FieldFunction(op.grid, z)
    return (out, trace) if return_trace else out


@dataclass(frozen=True)
class HReport:
    h: FieldFunction
    h_quadrature: FieldFunction
    max_rel_gap: float
    window: float


def h_by_quadrature(op: DiscreteFracLap, phi: FieldFunction, gauss_points: int = 8) -> FieldFunction:
    """h(x_i) = int (phi(x_i) - phi(y))^2 |x_i - y|^(-1-2s) dy for the linear interpolant.

    Elements touching x_i are integrated exactly (the integrand is
    slope^2 |z|^(1-2s)); the others by Gauss-Legendre; outside the interval
    the integrand is phi(x_i)^2 |x_i - y|^(-1-2s), integrated in closed form.
    """
    grid = op.grid
    s = op.s
    n = grid.n
    h = grid.h
    vals = np.concatenate(([0.0], phi.values, [0.0]))  # nodes 0..n+1
    x = grid.x_left + h * np.arange(n + 2)
    gx, gw = np.polynomial.legendre.leggauss(gauss_points)
    t = 0.5 * (gx + 1.0)
    w = 0.5 * gw
    out = np.empty(n)
    elem_left = vals[:-1]
    elem_right = vals[1:]
    # interpolant at Gauss points in every element, shape (n+1, g)
    interp = elem_left[:, None] * (1 - t) + elem_right[:, None] * t
    ypts = x[:-1, None] + h * t
    for i in range(1, n + 1):
        xi = x[i]
        ui = vals[i]
        z = np.abs(ypts - xi)
        integrand = (ui - interp) ** 2 * z ** (-1.0 - 2.0 * s)
        far = np.ones(n + 1, dtype=bool)
        far[i - 1] = far[i] = False
        total = h * float(np.sum(integrand[far] @ w))
        for e in (i - 1, i):
            slope = (elem_right[e] - elem_left[e]) / h
            total += slope**2 * h ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        total += ui**2 * ((xi - grid.x_left) ** (-2.0 * s) + (grid.x_right - xi) ** (-2.0 * s)) / (2.0 * s)
        out[i - 1] = total
    return FieldFunction(grid, out)


def compute_h(op: DiscreteFracLap, eig: Eigenpair, window: float = 0.9,
              max_gap: float = 0.05, gauss_points: int = 8) -> HReport:
    """h from the squared-eigenfunction identity, cross-checked by quadrature.

    Primary route: h = (2 lam1 phi^2 - A(phi^2)) / c with c the operator's
    normalization constant (A carries the full kernel prefactor).  Raises
    ConsistencyError when the quadrature route differs by more than
    ``max_gap`` (relative) at any node with |x - mid| <= window * half-width.
    """
    phi = eig.phi1
    phi2 = phi * phi
    hb = (2.0 * eig.lambda1 * phi2.values - apply(op, phi2).values) / op.c_ns
    hv = FieldFunction(op.grid, hb)
    ha = h_by_quadrature(op, phi, gauss_points)
    grid = op.grid
    inner = np.abs(grid.nodes - grid.midpoint) <= window * 0.5 * grid.length
    gap = float(np.max(np.abs(hb[inner] - ha.values[inner]) / np.abs(ha.values[inner])))
    if gap > max_gap:
        raise ConsistencyError(f"h routes disagree by {gap:.2%} inside the window")
    if hv.min() <= 0:
        raise DiagnosticError("h is not strictly positive")
    return HReport(hv, ha, gap, window)


def subsolution(eig: Eigenpair, lam: float, alpha1: float, q: float) -> FieldFunction:
    """lam^alpha1 * phi_1^2."""
    _check_alpha1(alpha1, q)
    if not lam > 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    return lam**alpha1 * (eig.phi1 * eig.phi1)


def certify_subsolution(op: DiscreteFracLap, u_under: FieldFunction, lam: float, q: float) -> float:
    """max_i [(A u)_i - lam (u_i^q - 1)]; the certificate holds iff <= 0."""
    if u_under.min() <= 0:
        raise DiagnosticError("subsolution candidate must be positive")
    au = apply(op, u_under).values
    return float(np.max(au - lam * (u_under.values**q - 1.0)))


def ordering_threshold(eig: Eigenpair, z1: FieldFunction, alpha1: float, q: float) -> float:
    """Least lam with lam^alpha1 phi^2 <= lam^(1/(1-q)) z1 at every node."""
    gap = 1.0 / (1.0 - q) - alpha1
    ratio = float(np.max(eig.phi1.values**2 / z1.values))
    return ratio ** (1.0 / gap)


@dataclass(frozen=True)
class ThresholdResult:
    lambda_star: float
    margin_at_star: float
    margin_below: float
    lambda_order: float
    ordering_ok_at_star: bool
    trace: list = field(default_factory=list)


def subsolution_threshold(op: DiscreteFracLap, eig: Eigenpair, q: float, alpha1: float | None = None,
                          tol: float = 1e-6, lam_start: float = 1e-2, cap: float = LAMBDA_CAP,
                          z1: FieldFunction | None = None) -> ThresholdResult:
    """Least lam whose subsolution certificate passes.

    A geometric scan (factor 2) from ``lam_start`` brackets the first passing
    value and bisection in log-scale shrinks the bracket to relative width
    ``tol``.  The ordering u_under <= z_lam is checked at the result and the
    least lam with that ordering is reported.
    """
    if alpha1 is None:
        alpha1 = default_alpha1(q)
    _check_alpha1(alpha1, q)

    def margin(lam):
        return certify_subsolution(op, subsolution(eig, lam, alpha1, q), lam, q)

    trace = []
    lo = None
    lam = lam_start
    while True:
        m = margin(lam)
        trace.append((lam, m))
        if m <= 0:
            break
        lo = lam
        lam *= 2.0
        if lam > cap:
            raise InfeasibleError(f"no certified subsolution below lambda = {cap:g}", trace=trace)
    hi = lam
    if lo is None:
        raise InfeasibleError(f"certificate already holds at the scan start {lam_start:g}; "
                              "lower lam_start", trace=trace)
    while (hi - lo) > tol * hi:
        mid = np.sqrt(lo * hi)
        m = margin(mid)
        trace.append((mid, m))
        if m <= 0:
            hi = mid
        else:
            lo = mid
    if z1 is None:
        z1 = solve_sublinear(op, 1.0, q)
    lam_order = ordering_threshold(eig, z1, alpha1, q)
    under = subsolution(eig, hi, alpha1, q).values
    z = hi ** (1.0 / (1.0 - q)) * z1.values
    return ThresholdResult(hi, margin(hi), margin(hi * (1 - tol)), lam_order,
                           bool(np.all(under <= z)), trace)


@dataclass(frozen=True)
class BarrierSet:
    lam: float
    alpha1: float
    alpha2: float
    u_under: FieldFunction
    z_super: FieldFunction
    psi_super: FieldFunction
    psi: FieldFunction
    h: FieldFunction
    margins: dict

    @property
    def ordered(self) -> bool:
        return bool(np.all(self.u_under.values <= self.z_super.values))


def build_barriers(op: DiscreteFracLap, eig: Eigenpair, lam: float, q: float,
                   alpha1: float | None = None, alpha2: float | None = None,
                   tol: float = 1e-10) -> BarrierSet:
    """Assemble every barrier at one lam, with certification margins."""
    if alpha1 is None:
        alpha1 = default_alpha1(q)
    if alpha2 is None:
        alpha2 = 1.0 / (1.0 - q) + 0.5
    if not alpha2 > 1.0 / (1.0 - q):
        raise ConfigurationError(f"alpha2 must exceed 1/(1-q) = {1 / (1 - q):.12g}, got {alpha2}")
    psi = torsion(op)
    z1 = solve_sublinear(op, 1.0, q, tol=tol, psi=psi)
    z = lam ** (1.0 / (1.0 - q)) * z1
    under = subsolution(eig, lam, alpha1, q)
    hrep = compute_h(op, eig)
    margins = {
        "subsolution": certify_subsolution(op, under, lam, q),
        "ordering_gap": float(np.min(z.values - under.values)),
        "h_route_gap": hrep.max_rel_gap,
        "h_min": hrep.h.min(),
    }
    try:
        margins["decay_exponent_z"] = boundary_decay_exponent(z)
    except DiagnosticError:
        margins["decay_exponent_z"] = float("nan")
    return BarrierSet(lam, alpha1, alpha2, under, z, lam**alpha2 * psi, psi, hrep.h, margins)
