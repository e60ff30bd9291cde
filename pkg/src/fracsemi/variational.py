"""Cut-off energy functional, its thresholds and its two critical points.

The nonlinearities are frozen below the subsolution ``u_under``: for
``t <= u_under(x)`` the reaction terms take their value at ``u_under``.
Every critical point of the cut-off energy then lies above ``u_under`` and
solves the original equation.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (ConfigurationError, DiagnosticError, InfeasibleError,
                     NonConvergenceError, UsageError)
from .fraclap import DiscreteFracLap
from .mesh import FieldFunction, boundary_decay_exponent, lp_norm
from .semipositone import SolveReport, uncut_residual
from .spectral import Eigenpair, embedding_ascent

__all__ = [
    "CutoffNonlinearity",
    "ThresholdReport",
    "Path",
    "CheckReport",
    "critical_exponent",
    "make_nonlinearity",
    "growth_constants",
    "cutoff_eval",
    "energy",
    "energy_gradient",
    "energy_hessian",
    "lower_bound",
    "embedding_constants",
    "choose_rho_mu",
    "boundary_bound",
    "mu0_formula",
    "minimize_in_ball",
    "mountain_pass",
    "verify_solution",
]

log = logging.getLogger(__name__)

RHO_CAP = 1e15


def critical_exponent(s: float) -> float:
    """2N/(N - 2s) for N = 1."""
    if not 0.0 < s < 0.5:
        raise ConfigurationError(f"the critical exponent needs s in (0, 1/2), got {s}")
    return 2.0 / (1.0 - 2.0 * s)


@dataclass(frozen=True)
class CutoffNonlinearity:
    lam: float
    mu: float
    q: float
    r: float
    s: float
    crit_exp: float
    u_under: FieldFunction
    growth_c: float
    growth_cprime: float

    @property
    def critical(self) -> bool:
        return bool(np.isclose(self.r, self.crit_exp - 1.0, rtol=0.0, atol=1e-12))

    def with_mu(self, mu: float) -> "CutoffNonlinearity":
        return replace(self, mu=float(mu))

    def with_params(self, lam: float, mu: float) -> "CutoffNonlinearity":
        return replace(self, lam=float(lam), mu=float(mu))


def _validate(lam, mu, q, r, s):
    if not lam > 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    if not mu >= 0:
        raise ConfigurationError(f"mu must be nonnegative, got {mu}")
    if not 0.0 < q < 1.0:
        raise ConfigurationError(f"q must lie in (0, 1), got {q}")
    crit = critical_exponent(s)
    if not 1.0 < r <= crit - 1.0 + 1e-12:
        raise ConfigurationError(
            f"r = {r} outside (1, 2/(1-2s) - 1] = (1, {crit - 1.0:.12g}]; "
            "supercritical powers are not admissible")
    return crit


def growth_constants(u_under: FieldFunction, q: float, r: float) -> tuple[float, float]:
    """(c, c') with |F| <= c + c'|t| + |t|^(r+1)/(r+1) and likewise for G."""
    top = u_under.max()
    cprime = max(top**r, top**q + 1.0, 1.0)
    c = max(r / (r + 1.0) * top ** (r + 1.0), q / (q + 1.0) * top ** (q + 1.0))
    return c, cprime


def make_nonlinearity(lam: float, mu: float, q: float, r: float, s: float,
                      u_under: FieldFunction) -> CutoffNonlinearity:
    crit = _validate(lam, mu, q, r, s)
    if u_under.min() <= 0:
        raise ConfigurationError("the cut-off level u_under must be positive at every node")
    c, cp = growth_constants(u_under, q, r)
    return CutoffNonlinearity(float(lam), float(mu), float(q), float(r), float(s), crit,
                              u_under, c, cp)


def _branches(nl, t, ub):
    return t > ub


def _f(nl, t, ub):
    up = t > ub
    return np.where(up, np.abs(t) ** nl.r, ub**nl.r)


def _g(nl, t, ub):
    up = t > ub
    return np.where(up, np.abs(t) ** nl.q, ub**nl.q) - 1.0


def _F(nl, t, ub):
    r = nl.r
    up = t > ub
    return np.where(up, np.abs(t) ** (r + 1) / (r + 1) + r / (r + 1) * ub ** (r + 1), ub**r * t)


def _G(nl, t, ub):
    q = nl.q
    up = t > ub
    return np.where(up, np.abs(t) ** (q + 1) / (q + 1) - t + q / (q + 1) * ub ** (q + 1),
                    (ub**q - 1.0) * t)


def _df(nl, t, ub):
    return np.where(t > ub, nl.r * np.abs(t) ** (nl.r - 1), 0.0)


def _dg(nl, t, ub):
    return np.where(t > ub, nl.q * np.abs(t) ** (nl.q - 1), 0.0)


_KINDS = {"f": _f, "g": _g, "F": _F, "G": _G}


def cutoff_eval(nl: CutoffNonlinearity, node: int, t: float, kind: str) -> float:
    """Value of f, g, F or G at interior node ``node`` (0-based) and level ``t``."""
    if kind not in _KINDS:
        raise UsageError(f"kind must be one of f, g, F, G; got {kind!r}")
    if not 0 <= node < nl.u_under.grid.n:
        raise UsageError(f"node index {node} out of range")
    ub = nl.u_under.values[node]
    return float(_KINDS[kind](nl, np.float64(t), ub))


def _check(nl, op, *fields):
    if nl.u_under.grid != op.grid:
        raise UsageError("nonlinearity and operator live on different grids")
    for f in fields:
        if f.grid != op.grid:
            raise UsageError("field grid does not match the operator grid")


def energy(nl: CutoffNonlinearity, op: DiscreteFracLap, u: FieldFunction) -> float:
    """1/2 h u^T A u - mu h sum F(x_i, u_i) - lam h sum G(x_i, u_i)."""
    _check(nl, op, u)
    x = u.values
    ub = nl.u_under.values
    h = op.grid.h
    quad = 0.5 * h * float(x @ op.matvec_direct(x))
    return quad - h * float(nl.mu * np.sum(_F(nl, x, ub)) + nl.lam * np.sum(_G(nl, x, ub)))


def _grad_raw(nl, op, x):
    ub = nl.u_under.values
    return op.grid.h * (op.matvec_direct(x) - nl.mu * _f(nl, x, ub) - nl.lam * _g(nl, x, ub))


def energy_gradient(nl: CutoffNonlinearity, op: DiscreteFracLap, u: FieldFunction) -> FieldFunction:
    """Euclidean gradient h[(A u)_i - mu f(x_i, u_i) - lam g(x_i, u_i)]."""
    _check(nl, op, u)
    return FieldFunction(op.grid, _grad_raw(nl, op, u.values))


def energy_hessian(nl: CutoffNonlinearity, op: DiscreteFracLap, u: FieldFunction) -> np.ndarray:
    """Dense Hessian away from the kink set {u = u_under}."""
    _check(nl, op, u)
    ub = nl.u_under.values
    x = u.values
    d = nl.mu * _df(nl, x, ub) + nl.lam * _dg(nl, x, ub)
    return op.grid.h * (op.dense() - np.diag(d))


def lower_bound(nl: CutoffNonlinearity, op: DiscreteFracLap, u: FieldFunction) -> float:
    """Growth-bound minorant of the energy.

    ||u||^2/2 - (lam+mu) c |Omega| - (lam+mu) c' ||u||_1 - lam ||u||_{q+1}^{q+1} - mu ||u||_{r+1}^{r+1}
    """
    _check(nl, op, u)
    x = u.values
    h = op.grid.h
    quad = 0.5 * h * float(x @ op.matvec_direct(x))
    lm = nl.lam + nl.mu
    return (quad - lm * nl.growth_c * op.grid.measure - lm * nl.growth_cprime * lp_norm(u, 1.0)
            - nl.lam * lp_norm(u, nl.q + 1.0) ** (nl.q + 1.0)
            - nl.mu * lp_norm(u, nl.r + 1.0) ** (nl.r + 1.0))


@dataclass(frozen=True)
class ThresholdReport:
    rho: float
    mu_lambda: float
    mu0_critical: float
    embed_1: float
    embed_q1: float
    embed_r1: float
    embed_crit: float
    boundary_inf_bound: float
    mu_free_margin: float

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in (
            "rho", "mu_lambda", "mu0_critical", "embed_1", "embed_q1", "embed_r1",
            "embed_crit", "boundary_inf_bound", "mu_free_margin")}


def mu0_formula(crit_exp: float, sobolev: float, rho: float) -> float:
    """crit / (4 S^crit (2 rho)^(crit - 2))."""
    return crit_exp / (4.0 * sobolev**crit_exp * (2.0 * rho) ** (crit_exp - 2.0))


def _mu_free_part(nl, measure, e1, eq1, rho):
    lam = nl.lam
    return (0.5 * rho**2 - lam * nl.growth_c * measure - lam * nl.growth_cprime * e1 * rho
            - lam * (eq1 * rho) ** (nl.q + 1.0))


def _mu_coefficient(nl, measure, e1, er1, rho):
    return nl.growth_c * measure + nl.growth_cprime * e1 * rho + (er1 * rho) ** (nl.r + 1.0)


def boundary_bound(nl, measure, embeds, rho, mu):
    """Certified lower bound of the energy on the sphere ||u||_A = rho."""
    e1, eq1, er1 = embeds
    return _mu_free_part(nl, measure, e1, eq1, rho) - mu * _mu_coefficient(nl, measure, e1, er1, rho)


def embedding_constants(op: DiscreteFracLap, q: float, r: float, seed: int = 0) -> dict:
    """Discrete embedding constants for p in {1, q+1, r+1, 2/(1-2s)}, keyed by p."""
    ps = sorted({1.0, q + 1.0, r + 1.0, critical_exponent(op.s)})
    return {p: embedding_ascent(op, p, seed=seed).constant for p in ps}


def choose_rho_mu(nl: CutoffNonlinearity, op: DiscreteFracLap, seed: int = 0,
                  ladder_ratio: float = 2.0**0.25, slack: float = 0.1,
                  embeds: dict | None = None) -> ThresholdReport:
    """Radius rho and the mu thresholds from the growth bounds.

    Norms on the sphere ||u||_A = rho are bounded by the discrete embedding
    constants.  rho is the first point of a geometric ladder where the
    mu-free part of the minorant is at least ``slack * rho^2/2``.  The
    minorant is affine in mu, so the largest mu keeping it positive is the
    exact root.
    """
    if embeds is None:
        embeds = embedding_constants(op, nl.q, nl.r, seed=seed)
    e1 = embeds[1.0]
    eq1 = embeds[nl.q + 1.0]
    er1 = embeds[nl.r + 1.0]
    ecrit = embeds[nl.crit_exp]
    measure = op.grid.measure
    rho = 1e-3
    while _mu_free_part(nl, measure, e1, eq1, rho) < slack * 0.5 * rho**2:
        rho *= ladder_ratio
        if rho > RHO_CAP:
            raise InfeasibleError(f"no admissible radius below {RHO_CAP:g}; "
                                  "lambda is too large for this grid's constants")
    free = _mu_free_part(nl, measure, e1, eq1, rho)
    mu_lam = free / _mu_coefficient(nl, measure, e1, er1, rho)
    bound = boundary_bound(nl, measure, (e1, eq1, er1), rho, nl.mu)
    return ThresholdReport(rho, mu_lam, mu0_formula(nl.crit_exp, ecrit, rho), e1, eq1, er1,
                           ecrit, bound, free)


def _a_norm(op, x):
    return float(np.sqrt(max(op.grid.h * float(x @ op.matvec_direct(x)), 0.0)))


def _riesz(op, g):
    # A-inner-product representer of a Euclidean gradient: solves h A d = g
    return scipy.linalg.cho_solve(op.cholesky(0.0), g, check_finite=False) / op.grid.h


def _energy_raw(nl, op, x):
    return energy(nl, op, FieldFunction(op.grid, x))


def _newton_polish(nl, op, x, tol, maxiter=50):
    """Damped Newton on the gradient; returns (x, grad_sup, ok)."""
    g = _grad_raw(nl, op, x)
    gn = float(np.abs(g).max())
    for _ in range(maxiter):
        if gn < tol:
            return x, gn, True
        hess = energy_hessian(nl, op, FieldFunction(op.grid, x))
        try:
            dx = np.linalg.solve(hess, -g)
        except np.linalg.LinAlgError:
            return x, gn, False
        t = 1.0
        while t > 1e-6:
            cand = x + t * dx
            gc = _grad_raw(nl, op, cand)
            gcn = float(np.abs(gc).max())
            if gcn < gn:
                break
            t *= 0.5
        else:
            return x, gn, False
        x, g, gn = cand, gc, gcn
    return x, gn, gn < tol


def _decay(u):
    try:
        return boundary_decay_exponent(u)
    except DiagnosticError:
        return float("nan")


def _descend(nl, op, x, rho, tol, maxiter, armijo=1e-4):
    """Projected preconditioned gradient descent in the A-ball of radius rho."""
    e = _energy_raw(nl, op, x)
    step = 1.0
    for it in range(1, maxiter + 1):
        g = _grad_raw(nl, op, x)
        d = _riesz(op, g)
        dn2 = op.grid.h * float(d @ op.matvec_direct(d))
        if float(np.abs(g).max()) < tol:
            return x, e, it, True
        step = min(step * 2.0, 1.0)
        while True:
            cand = x - step * d
            cn = _a_norm(op, cand)
            if cn > rho:
                cand = cand * (rho / cn)
            ce = _energy_raw(nl, op, cand)
            move = cand - x
            # Armijo test against the actual (projected) displacement
            if ce <= e + armijo * float(g @ move) or step < 1e-14:
                break
            step *= 0.5
        if step < 1e-14:
            return x, e, it, False
        if abs(e - ce) <= 1e-15 * max(abs(e), 1.0) and np.abs(move).max() <= 1e-15 * max(np.abs(x).max(), 1.0):
            return cand, ce, it, bool(np.abs(_grad_raw(nl, op, cand)).max() < tol)
        x, e = cand, ce
        del dn2
    return x, e, maxiter, False


def minimize_in_ball(nl: CutoffNonlinearity, op: DiscreteFracLap, rho: float, tol: float = 1e-8,
                     eig: Eigenpair | None = None, mu_lambda: float | None = None,
                     seed: int = 0, maxiter: int = 20000) -> SolveReport:
    """Lowest-energy critical point found in the ball ||u||_A <= rho.

    Three starts (a small multiple of u_under, a small seeded random field,
    and 0.5 rho phi_1 / ||phi_1||_A) are descended with projected,
    A-preconditioned gradient steps and Armijo backtracking; interior
    limits are polished by Newton's method to gradient sup-norm < tol.
    """
    _check(nl, op)
    if mu_lambda is not None and not nl.mu < mu_lambda:
        warnings.warn(f"mu = {nl.mu:g} is not below the sufficient threshold {mu_lambda:g}",
                      stacklevel=2)
    if eig is None:
        from .spectral import principal_eigenpair
        eig = principal_eigenpair(op)
    rng = np.random.default_rng(seed)
    phi = eig.phi1.values
    ub = nl.u_under.values
    starts = {
        "u_under": 0.1 * ub,
        "random": 1e-3 * max(float(ub.max()), 1.0) * rng.random(op.n),
        "phi1": 0.5 * rho * phi / _a_norm(op, phi),
    }
    results = []
    for name, x0 in starts.items():
        cn = _a_norm(op, x0)
        if cn > rho:
            x0 = x0 * (rho / cn)
        x, e, its, ok = _descend(nl, op, x0, rho, tol, maxiter)
        inside = _a_norm(op, x) < rho * (1.0 - 1e-9)
        if inside:
            xp, gn, pok = _newton_polish(nl, op, x, tol)
            if pok and _a_norm(op, xp) < rho and _energy_raw(nl, op, xp) <= e + 1e-9 * max(abs(e), 1.0):
                x, ok = xp, True
        e = _energy_raw(nl, op, x)
        gn = float(np.abs(_grad_raw(nl, op, x)).max())
        log.debug("ball start %s: energy %.12g grad %.2e iters %d ok %s", name, e, gn, its, ok)
        results.append((name, x, e, gn, its, ok or gn < tol))
    good = [r for r in results if r[5]]
    if not good:
        raise NonConvergenceError("no start of the ball minimization converged",
                                  best=FieldFunction(op.grid, min(results, key=lambda r: r[2])[1]),
                                  trace=[(r[0], r[2], r[3]) for r in results])
    name, x, e, gn, its, _ = min(good, key=lambda r: r[2])
    u = FieldFunction(op.grid, x)
    contact = _a_norm(op, x) >= rho * (1.0 - 1e-9)
    res = uncut_residual(op, u, nl.lam, nl.mu, nl.q, nl.r)
    eps = 1e-8 * max(float(ub.max()), 1.0)
    return SolveReport(
        solution=u,
        residual_inf=float(np.abs(res.values).max()),
        iterations=its,
        converged=True,
        classification="minimizer",
        ordering_ok=bool(np.all(x >= ub - eps)),
        min_value=float(x.min()),
        decay_exponent=_decay(u) if x.min() > 0 else float("nan"),
        tol=tol,
        energy=e,
        params={"lambda": nl.lam, "mu": nl.mu, "q": nl.q, "r": nl.r, "s": nl.s,
                "rho": rho, "n": op.n},
        diagnostics={"gradient_sup": gn, "boundary_contact": bool(contact), "start": name,
                     "energy_nonpositive": bool(e <= 0.0), "a_norm": _a_norm(op, x),
                     "starts": [(r[0], r[2], r[3], r[5]) for r in results]},
    )


@dataclass
class Path:
    points: list
    t0: float
    energies: list = field(default_factory=list)
    max_trace: list = field(default_factory=list)
    grad_trace: list = field(default_factory=list)


def _initial_path(nl, op, phi, rho, points):
    t0 = 1.0
    for _ in range(200):
        end = t0 * phi
        if _a_norm(op, end) > rho and _energy_raw(nl, op, end) < 0:
            break
        t0 *= 2.0
    else:
        raise NonConvergenceError("no dyadic t0 puts t0*phi1 outside the ball with negative energy")
    return Path([(j / (points - 1)) * t0 * phi for j in range(points)], t0)


def _reparametrize(pts, seg):
    """Vertices equally spaced in A-arclength along the current polyline."""
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, cum[-1], len(pts))
    out = [pts[0]]
    for t in targets[1:-1]:
        j = min(int(np.searchsorted(cum, t, side="right")) - 1, len(seg) - 1)
        w = (t - cum[j]) / seg[j] if seg[j] > 0 else 0.0
        out.append((1.0 - w) * pts[j] + w * pts[j + 1])
    out.append(pts[-1])
    return out


def _segment_max(nl, op, pts, k):
    """Highest point of the energy on the two polyline segments at vertex k."""
    best_e, best_x = -np.inf, pts[k]
    h = op.grid.h
    ub = nl.u_under.values
    for j in (k - 1, k):
        a, b = pts[j], pts[j + 1]
        d = b - a
        ad = op.matvec_direct(d)
        q0, q1, q2 = 0.5 * h * float(a @ op.matvec_direct(a)), h * float(a @ ad), 0.5 * h * float(d @ ad)

        def neg(t, a=a, d=d, q0=q0, q1=q1, q2=q2):
            x = a + t * d
            nonlin = nl.mu * np.sum(_F(nl, x, ub)) + nl.lam * np.sum(_G(nl, x, ub))
            return -(q0 + t * (q1 + t * q2) - h * float(nonlin))

        res = scipy.optimize.minimize_scalar(neg, bounds=(0.0, 1.0), method="bounded",
                                             options={"xatol": 1e-10})
        if -float(res.fun) > best_e:
            best_e, best_x = -float(res.fun), a + float(res.x) * (b - a)
    return best_e, best_x


def _polyline_max(nl, op, pts, ens, k):
    return max(max(ens), _segment_max(nl, op, pts, k)[0])


def _remax(nl, op, pts, ens):
    """Slide the top vertex to the highest point of its two segments, in place."""
    k = int(np.argmax(ens))
    if 0 < k < len(pts) - 1:
        me, mx = _segment_max(nl, op, pts, k)
        if me > ens[k]:
            pts[k], ens[k] = mx, me
    return k


def mountain_pass(nl: CutoffNonlinearity, op: DiscreteFracLap, u0: FieldFunction, rho: float,
                  tol: float = 1e-6, eig: Eigenpair | None = None, points: int = 31,
                  max_sweeps: int = 10000, polish_from: float = 1e-3, stall_window: int = 200,
                  mu_lambda: float | None = None) -> SolveReport:
    """Second critical point by deforming paths from 0 to t0 phi_1.

    The path is a polyline of ``points`` vertices whose top vertex is kept at
    the highest point of its two segments.  Each sweep moves that vertex one
    Armijo step down the A-preconditioned gradient, reparametrizes by
    A-arclength when the top is under-resolved, and is accepted only if the
    path maximum does not rise.  Once the relative gradient at the top is
    below ``polish_from``, or the coarse path stops improving it, Newton's
    method finishes the saddle to gradient sup-norm < tol.  The polished
    point must keep the saddle signature (exactly one negative Hessian
    eigenvalue) and an energy not above the path maximum.
    """
    _check(nl, op, u0)
    if nl.critical or nl.r >= nl.crit_exp - 1.0:
        raise ConfigurationError(
            "mountain pass requires a subcritical power r < 2/(1-2s) - 1; "
            "in the critical case only the minimizer is available")
    if mu_lambda is not None and not nl.mu < mu_lambda:
        raise ConfigurationError(f"mu = {nl.mu:g} must be below mu_lambda = {mu_lambda:g}")
    if eig is None:
        from .spectral import principal_eigenpair
        eig = principal_eigenpair(op)
    path = _initial_path(nl, op, eig.phi1.values, rho, points)
    pts = [p.copy() for p in path.points]
    ens = [_energy_raw(nl, op, p) for p in pts]
    scale = max(abs(max(ens)), 1.0)
    k = _remax(nl, op, pts, ens)
    step_prev = 1.0
    top = None
    reached = False
    stalled = False
    sweep = 0
    reparams = 0
    best_rel, best_sweep = np.inf, 0
    for sweep in range(1, max_sweeps + 1):
        m = ens[k]
        path.max_trace.append(m)
        if k == 0 or k == points - 1:
            raise NonConvergenceError(f"path collapsed: maximum reached the endpoint {k}",
                                      trace=list(path.max_trace))
        x = pts[k]
        g = _grad_raw(nl, op, x)
        d = _riesz(op, g)
        dn = _a_norm(op, d)
        rel = dn / max(_a_norm(op, x), 1.0)
        path.grad_trace.append(rel)
        if rel <= polish_from:
            reached = True
            break
        if rel < 0.9 * best_rel:
            best_rel, best_sweep = rel, sweep
        elif sweep - best_sweep >= stall_window:
            # the coarse path resolves the ridge no further; hand over to Newton
            stalled = True
            break
        gaps = min(_a_norm(op, x - pts[k - 1]), _a_norm(op, x - pts[k + 1]))
        # keep the moved vertex within half a neighbour spacing
        step = min(step_prev * 2.0, 1.0, 0.5 * gaps / dn)
        gd = float(g @ d)
        accepted = None
        while step > 1e-12:
            cand = x - step * d
            ce = _energy_raw(nl, op, cand)
            if ce <= m - 1e-4 * step * gd:
                tp = list(pts)
                te = list(ens)
                tp[k], te[k] = cand, ce
                seg = [_a_norm(op, tp[j + 1] - tp[j]) for j in range(points - 1)]
                rp = max(seg[k - 1], seg[k]) > 2.0 * float(np.median(seg))
                if rp:
                    tp = _reparametrize(tp, seg)
                    te = [_energy_raw(nl, op, p) for p in tp]
                tk = _remax(nl, op, tp, te)
                # the sweep is accepted only if the path maximum did not rise
                if te[tk] <= m:
                    accepted = (tp, te, tk, rp)
                    break
            step *= 0.5
        if accepted is None:
            stalled = True
            break
        pts, ens, k, rp = accepted
        reparams += int(rp)
        step_prev = step
    top = k
    path.points = [FieldFunction(op.grid, p) for p in pts]
    path.energies = list(ens)
    path_max = _polyline_max(nl, op, pts, ens, top)
    x = pts[top]
    xp, gn, ok = _newton_polish(nl, op, x, tol)
    if not ok:
        raise NonConvergenceError(f"saddle polish stalled at gradient {gn:.3e}",
                                  best=FieldFunction(op.grid, xp), residual=gn, trace=list(ens))
    e = _energy_raw(nl, op, xp)
    hess = energy_hessian(nl, op, FieldFunction(op.grid, xp))
    neg = int(np.sum(scipy.linalg.eigvalsh(hess, subset_by_index=[0, min(4, op.n - 1)]) < 0))
    sep_min = 1e-3 * max(u0.sup_norm(), 1.0)
    sep = float(np.abs(xp - u0.values).max())
    merged = sep <= sep_min
    u = FieldFunction(op.grid, xp)
    ub = nl.u_under.values
    eps = 1e-8 * max(float(ub.max()), 1.0)
    res = uncut_residual(op, u, nl.lam, nl.mu, nl.q, nl.r)
    if e > path_max * (1 + 1e-9) + 1e-9 * scale:
        raise DiagnosticError(f"polished saddle energy {e:.6g} exceeds the path maximum {path_max:.6g}")
    return SolveReport(
        solution=u,
        residual_inf=float(np.abs(res.values).max()),
        iterations=sweep,
        converged=True,
        classification="mountain-pass",
        ordering_ok=bool(np.all(xp >= ub - eps)),
        min_value=float(xp.min()),
        decay_exponent=_decay(u) if xp.min() > 0 else float("nan"),
        tol=tol,
        energy=e,
        params={"lambda": nl.lam, "mu": nl.mu, "q": nl.q, "r": nl.r, "s": nl.s,
                "rho": rho, "n": op.n, "t0": path.t0, "points": points},
        diagnostics={"gradient_sup": gn, "path_max": path_max, "morse_index": neg,
                     "separation": sep, "sep_min": sep_min, "merged": merged,
                     "sweeps": sweep, "reached_polish_tolerance": reached, "stalled": stalled,
                     "reparametrizations": reparams,
                     "max_trace_len": len(path.max_trace),
                     "max_nonincreasing": bool(np.all(np.diff(path.max_trace) <= 0)),
                     "path": path},
    )


@dataclass(frozen=True)
class CheckReport:
    uncut_residual_inf: float
    cutoff_residual_inf: float
    min_value: float
    ordering_ok: bool
    decay_exponent: float
    decay_ok: bool | None
    energy: float
    tol: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "uncut_residual_inf": self.uncut_residual_inf,
            "cutoff_residual_inf": self.cutoff_residual_inf,
            "min_value": self.min_value,
            "ordering_ok": self.ordering_ok,
            "decay_exponent": self.decay_exponent,
            "decay_ok": self.decay_ok,
            "energy": self.energy,
            "tol": self.tol,
            "passed": self.passed,
        }


def verify_solution(nl: CutoffNonlinearity, op: DiscreteFracLap, u: FieldFunction,
                    tol: float = 1e-5, decay_band: tuple | None = (0.7, 1.3)) -> CheckReport:
    """Residual, positivity, ordering and decay diagnostics for a candidate solution.

    The algebraic residual row i is the weak residual against the nodal test
    function of node i divided by h, so one check covers both.  The decay
    exponent must fall in ``decay_band`` times s; pass None to report it
    without judging it (it is biased on coarse grids).
    """
    _check(nl, op, u)
    res = uncut_residual(op, u, nl.lam, nl.mu, nl.q, nl.r)
    cut = _grad_raw(nl, op, u.values) / op.grid.h
    ub = nl.u_under.values
    eps = 1e-8 * max(float(ub.max()), 1.0)
    ordering = bool(np.all(u.values >= ub - eps))
    mn = u.min()
    dec = _decay(u) if mn > 0 else float("nan")
    ures = float(np.abs(res.values).max())
    cres = float(np.abs(cut).max())
    decay_ok = None
    if decay_band is not None:
        decay_ok = bool(decay_band[0] * nl.s <= dec <= decay_band[1] * nl.s)
    passed = ures < tol and cres < tol and mn > 0 and ordering and decay_ok is not False
    return CheckReport(ures, cres, mn, ordering, dec, decay_ok, energy(nl, op, u), tol, bool(passed))
