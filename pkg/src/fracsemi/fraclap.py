"""Discrete integral fractional Laplacian on a uniform interval grid.

Row ``i`` of the matrix approximates

    c(s) * P.V. int (u(x_i) - u(y)) / |x_i - y|^(1+2s) dy

with ``u = 0`` outside the interval.  On ``|y - x_i| < h`` the integrand is
replaced by its second-difference Taylor model, which integrates in closed
form against ``|z|^(1-2s)``; beyond ``h`` the kernel is integrated exactly
against the piecewise-linear interpolant of the nodal values (zero at and
beyond the endpoints).  The result is a symmetric Toeplitz matrix with
negative off-diagonals plus a constant diagonal, strictly diagonally dominant
in every row by the exterior contribution (an M-matrix).

All entries carry the factor ``h^(-2s)``; the remaining weights depend only
on ``s`` and the node offset, which makes the dilation law exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.special import gamma

from .errors import DomainError, UsageError
from .mesh import FieldFunction, Grid, make_grid

__all__ = [
    "DiscreteFracLap",
    "normalization_constant",
    "unscaled_prefactor",
    "assemble",
    "apply",
    "apply_direct",
    "quadratic_form",
    "a_norm",
    "save_operator",
    "load_operator",
]

_SERIES_FROM = 16
_MAGIC = b"FRACLAP1"


def _check_order(s):
    if not (0.0 < s < 1.0):
        raise DomainError(f"fractional order s must lie in (0, 1), got {s}")


def normalization_constant(s: float) -> float:
    """1-D constant c(s) = 4^s s Gamma(s + 1/2) / (sqrt(pi) Gamma(1 - s))."""
    _check_order(s)
    return float(4.0**s * s * gamma(s + 0.5) / (np.sqrt(np.pi) * gamma(1.0 - s)))


def unscaled_prefactor(s: float) -> float:
    """The same expression without the factor s, i.e. normalization_constant(s)/s.

    Kept for comparison only; the operator never uses it.
    """
    _check_order(s)
    return float(4.0**s * gamma(s + 0.5) / (np.sqrt(np.pi) * gamma(1.0 - s)))


def _tail_sums(s, m):
    """T(m) = int_{t >= max(1, m-1)} chi_m(t) t^(-1-2s) dt for integer m >= 1.

    chi_m is the partition-of-unity mass carried by hats k >= m, i.e. the
    far-field kernel mass of every node at offset >= m.
    """
    m = np.asarray(m, dtype=float)
    out = np.empty_like(m)
    one = m == 1
    out[one] = 1.0 / (2.0 * s)
    mm = m[~one]
    eps = 1.0 - 2.0 * s
    log_ratio = np.log1p(-1.0 / mm)
    if eps == 0.0:
        out[~one] = -log_ratio
    else:
        out[~one] = -(mm**eps) * np.expm1(eps * log_ratio) / (2.0 * s * eps)
    return out


def _hat_weights(s, kmax):
    """v_k = int_{t >= 1} hat(t - k) t^(-1-2s) dt for k = 1..kmax."""
    k = np.arange(1, kmax + 1, dtype=float)
    v = np.empty(kmax)
    small = k < _SERIES_FROM
    ks = k[small]
    v[small] = _tail_sums(s, ks) - _tail_sums(s, ks + 1)
    kl = k[~small]
    if kl.size:
        # hat average of (k + tau)^(-1-2s): even Taylor terms only
        a = -1.0 - 2.0 * s
        acc = np.zeros_like(kl)
        inv2 = kl**-2.0
        powk = np.ones_like(kl)
        coef = 1.0  # binomial(a, 2j)
        for j in range(40):
            term = coef * 2.0 / ((2 * j + 1) * (2 * j + 2)) * powk
            acc += term
            if np.all(np.abs(term) <= 1e-18 * np.abs(acc)):
                break
            coef *= (a - 2 * j) * (a - 2 * j - 1) / ((2 * j + 1) * (2 * j + 2))
            powk = powk * inv2
        v[~small] = kl ** (-1.0 - 2.0 * s) * acc
    return v


@dataclass(frozen=True, eq=False)
class DiscreteFracLap:
    """Symmetric matrix A with A_ij = -weights[|i-j|-1] (i != j), A_ii = diag[i]."""

    grid: Grid
    s: float
    c_ns: float
    weights: np.ndarray
    diag: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def row_excess(self) -> np.ndarray:
        """diag_i - sum_{j != i} |A_ij|: the exterior contribution of row i."""
        n = self.n
        i = np.arange(1, n + 1)
        ex = _tail_sums(self.s, i) + _tail_sums(self.s, n + 1 - i)
        # the end rows also lose the near-field coupling to the boundary node
        near = 1.0 / (2.0 - 2.0 * self.s)
        ex[0] += near
        ex[-1] += near
        return self.c_ns * self.grid.h ** (-2.0 * self.s) * ex

    def dense(self) -> np.ndarray:
        if "dense" not in self._cache:
            col = np.concatenate(([0.0], -self.weights))
            mat = scipy.linalg.toeplitz(col)
            mat[np.diag_indices_from(mat)] = self.diag
            mat.flags.writeable = False
            self._cache["dense"] = mat
        return self._cache["dense"]

    def cholesky(self, shift: float = 0.0):
        key = ("chol", float(shift))
        if key not in self._cache:
            mat = self.dense() + shift * np.eye(self.n)
            self._cache[key] = scipy.linalg.cho_factor(mat, lower=True)
        return self._cache[key]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Fast product on raw arrays (FFT Toeplitz part plus diagonal)."""
        x = np.asarray(x, dtype=float)
        col = np.concatenate(([0.0], self.weights))
        return self.diag * x - scipy.linalg.matmul_toeplitz(col, x, check_finite=False)

    def matvec_direct(self, x: np.ndarray) -> np.ndarray:
        return self.dense() @ np.asarray(x, dtype=float)


def assemble(grid: Grid, s: float) -> DiscreteFracLap:
    """Assemble the discrete operator on ``grid`` for order ``s``."""
    _check_order(s)
    s = float(s)
    n = grid.n
    c = normalization_constant(s)
    scale = c * grid.h ** (-2.0 * s)
    near = 1.0 / (2.0 - 2.0 * s)
    v = _hat_weights(s, n - 1)
    v[0] += near
    weights = scale * v
    diag = np.full(n, scale * (2.0 * near + 2.0 * _tail_sums(s, [1])[0]))
    weights.flags.writeable = False
    diag.flags.writeable = False
    return DiscreteFracLap(grid, s, c, weights, diag)


def _check_grid(op, *fields):
    for f in fields:
        if f.grid != op.grid:
            raise UsageError("field grid does not match the operator grid")


def apply(op: DiscreteFracLap, u: FieldFunction) -> FieldFunction:
    _check_grid(op, u)
    return FieldFunction(op.grid, op.matvec(u.values))


def apply_direct(op: DiscreteFracLap, u: FieldFunction) -> FieldFunction:
    """Dense O(n^2) product; the reference for :func:`apply`."""
    _check_grid(op, u)
    return FieldFunction(op.grid, op.matvec_direct(u.values))


def quadratic_form(op: DiscreteFracLap, u: FieldFunction, v: FieldFunction) -> float:
    """h * v^T A u, the discrete Dirichlet form."""
    _check_grid(op, u, v)
    return float(op.grid.h * (v.values @ op.matvec_direct(u.values)))


def a_norm(op: DiscreteFracLap, u: FieldFunction) -> float:
    return float(np.sqrt(max(quadratic_form(op, u, u), 0.0)))


def save_operator(op: DiscreteFracLap, path) -> None:
    """Write the operator in the FRACLAP1 little-endian binary layout."""
    g = op.grid
    head = np.array([op.s, g.x_left, g.x_right, g.h, float(g.n)], dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(head.tobytes())
        fh.write(np.asarray(op.weights, dtype="<f8").tobytes())
        fh.write(np.asarray(op.diag, dtype="<f8").tobytes())


def load_operator(path) -> DiscreteFracLap:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise UsageError(f"{path}: not a FRACLAP1 file")
    body = np.frombuffer(data[8:], dtype="<f8")
    s, xl, xr, h, n = body[:5]
    n = int(n)
    if body.size != 5 + (n - 1) + n:
        raise UsageError(f"{path}: truncated or oversized payload")
    grid = make_grid(xl, xr, n)
    if grid.h != h:
        raise UsageError(f"{path}: stored spacing does not match the grid")
    weights = body[5:5 + n - 1].copy()
    diag = body[5 + n - 1:].copy()
    weights.flags.writeable = False
    diag.flags.writeable = False
    return DiscreteFracLap(grid, float(s), normalization_constant(float(s)), weights, diag)


# struct is kept for callers that want to peek at the header without numpy
HEADER = struct.Struct("<8s5d")
