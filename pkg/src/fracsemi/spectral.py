"""Linear solves, the principal eigenpair and discrete embedding constants."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import DiagnosticError, DomainError, NonConvergenceError, UsageError
from .fraclap import DiscreteFracLap
from .mesh import FieldFunction, lp_norm

__all__ = [
    "Eigenpair",
    "solve_linear",
    "principal_eigenpair",
    "embedding_constant",
    "embedding_ascent",
    "EmbeddingResult",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Eigenpair:
    lambda1: float
    phi1: FieldFunction
    residual: float
    iterations: int


def _solve_raw(op: DiscreteFracLap, shift: float, rhs: np.ndarray, tol: float,
               method: str = "cholesky", maxiter: int | None = None) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs)

    def residual(x):
        return rhs - (op.matvec_direct(x) + shift * x)

    if method == "cholesky":
        factor = op.cholesky(shift)
        x = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        r = residual(x)
        # iterative refinement; one step is almost always enough
        for _ in range(5):
            if np.linalg.norm(r) <= tol * bnorm:
                return x
            x = x + scipy.linalg.cho_solve(factor, r, check_finite=False)
            r = residual(x)
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        raise NonConvergenceError(
            f"refined Cholesky solve stalled at relative residual {np.linalg.norm(r) / bnorm:.3e}",
            best=x, residual=float(np.linalg.norm(r) / bnorm))
    if method == "cg":
        n = op.n
        lin = scipy.sparse.linalg.LinearOperator(
            (n, n), matvec=lambda x: op.matvec(x) + shift * x, dtype=float)
        cap = maxiter if maxiter is not None else 10 * n
        x, info = scipy.sparse.linalg.cg(lin, rhs, rtol=0.5 * tol, atol=0.0, maxiter=cap)
        rel = np.linalg.norm(residual(x)) / bnorm
        if info != 0 or rel > tol:
            raise NonConvergenceError(
                f"CG did not reach relative residual {tol:.1e} in {cap} iterations "
                f"(best {rel:.3e})", best=x, residual=float(rel))
        return x
    raise UsageError(f"unknown linear solver {method!r}")


def solve_linear(op: DiscreteFracLap, shift: float, rhs: FieldFunction, tol: float = 1e-12,
                 method: str = "cholesky", maxiter: int | None = None) -> FieldFunction:
    """Solve (A + shift*I) u = rhs to relative 2-norm residual ``tol``.

    ``method`` is ``"cholesky"`` (cached factorization plus iterative
    refinement) or ``"cg"`` (conjugate gradients with the FFT product).
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if shift < 0:
        raise DomainError(f"shift must be nonnegative, got {shift}")
    if rhs.grid != op.grid:
        raise UsageError("rhs grid does not match the operator grid")
    x = _solve_raw(op, shift, rhs.values, tol, method=method, maxiter=maxiter)
    return FieldFunction(op.grid, x)


def principal_eigenpair(op: DiscreteFracLap, rtol: float = 1e-10, start=None,
                        maxiter: int = 1000) -> Eigenpair:
    """Smallest eigenvalue and positive, sup-normalized eigenvector of A.

    Inverse power iteration on the cached Cholesky factor, stopped once the
    eigen-residual ||A phi - lambda phi||_inf drops below rtol * lambda.
    """
    if not rtol > 0:
        raise DomainError(f"rtol must be positive, got {rtol}")
    factor = op.cholesky(0.0)
    x = np.ones(op.n) if start is None else np.array(start, dtype=float)
    if x.shape != (op.n,) or not np.any(x):
        raise UsageError("start vector must be a nonzero array of length n")
    x = x / np.abs(x).max()
    trace = []
    for it in range(1, maxiter + 1):
        y = scipy.linalg.cho_solve(factor, x, check_finite=False)
        y /= y[np.argmax(np.abs(y))]
        ay = op.matvec_direct(y)
        lam = float(y @ ay) / float(y @ y)
        res = float(np.abs(ay - lam * y).max())
        trace.append((lam, res))
        x = y
        if res <= rtol * lam:
            break
    else:
        raise NonConvergenceError(
            f"inverse iteration did not reach rtol {rtol:.1e} in {maxiter} steps",
            best=x, residual=trace[-1][1], trace=trace)
    if np.any(x <= 0):
        raise DiagnosticError("principal eigenvector is not strictly positive; "
                              "the operator has lost its M-matrix structure")
    return Eigenpair(lam, FieldFunction(op.grid, x), res, it)


@dataclass(frozen=True)
class EmbeddingResult:
    constant: float
    maximizer: FieldFunction
    iterations: int
    step_norm: float


def _ratio_and_direction(op, u, p, h):
    # u is A-normalized; returns ||u||_p and the A-Riesz gradient of the log-ratio
    a = np.abs(u)
    top = a.max()
    g = np.sign(u) * (a / top) ** (p - 1)
    norm_p = lp_norm(FieldFunction(op.grid, u), p)
    # Euclidean gradient of log||u||_p is h|u|^(p-2)u/||u||_p^p; the Riesz map divides by h*A
    riesz = scipy.linalg.cho_solve(op.cholesky(0.0), g, check_finite=False)
    grad_log_p = riesz / (top * h * np.sum((a / top) ** p))
    return norm_p, grad_log_p - u


def embedding_ascent(op: DiscreteFracLap, p: float, tol: float = 1e-7, seed: int = 0,
                     starts: int = 5, eta: float = 0.1, maxiter: int = 5000) -> EmbeddingResult:
    """Maximize ||u||_p / ||u||_A by normalized gradient ascent.

    Steps follow the gradient of the log-ratio in the A-inner product,
    ``u <- u + eta * d`` followed by rescaling to ||u||_A = 1; ``eta`` is
    halved whenever the ratio fails to increase.  Each of ``starts`` seeded
    positive random fields is run until ||d||_A < tol and the best ratio
    wins.  The result under-estimates the discrete supremum.
    """
    if not p >= 1:
        raise DomainError(f"embedding exponent must satisfy p >= 1, got {p}")
    if not np.isfinite(p):
        raise DomainError("p = inf is not supported")
    h = op.grid.h
    rng = np.random.default_rng(seed)
    best = None
    factor = op.cholesky(0.0)

    def anorm(x):
        return np.sqrt(h * float(x @ op.matvec_direct(x)))

    for _ in range(starts):
        u = scipy.linalg.cho_solve(factor, rng.random(op.n), check_finite=False)
        u /= anorm(u)
        ratio, d = _ratio_and_direction(op, u, p, h)
        step = eta
        it = 0
        dn = anorm(d)
        while it < maxiter and dn >= tol:
            it += 1
            cand = u + step * d
            cand /= anorm(cand)
            c_ratio, c_d = _ratio_and_direction(op, cand, p, h)
            if c_ratio >= ratio:
                u, ratio, d = cand, c_ratio, c_d
                dn = anorm(d)
            else:
                step *= 0.5
                if step < 1e-12:
                    break
        log.debug("embedding start: p=%g ratio=%.12g iters=%d |d|=%.2e", p, ratio, it, dn)
        if best is None or ratio > best.constant:
            best = EmbeddingResult(ratio, FieldFunction(op.grid, u), it, dn)
    return best


def embedding_constant(op: DiscreteFracLap, p: float, tol: float = 1e-7, seed: int = 0) -> float:
    """Discrete best constant sup ||u||_p / ||u||_A (ascent estimate)."""
    return embedding_ascent(op, p, tol=tol, seed=seed).constant
