"""Uniform interval grids, grid functions and discrete quadrature.

A :class:`FieldFunction` holds the values of ``u`` at the interior nodes of a
:class:`Grid`; outside the open interval ``u`` is identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DiagnosticError, DomainError, UsageError

__all__ = [
    "Grid",
    "FieldFunction",
    "make_grid",
    "lp_norm",
    "boundary_decay_exponent",
]


@dataclass(frozen=True)
class Grid:
    x_left: float
    x_right: float
    n: int
    h: float

    def __post_init__(self):
        if not (np.isfinite(self.x_left) and np.isfinite(self.x_right)):
            raise ConfigurationError("interval bounds must be finite")
        if not self.x_left < self.x_right:
            raise ConfigurationError(
                f"need x_left < x_right, got ({self.x_left}, {self.x_right})")
        if int(self.n) != self.n or self.n < 4:
            raise ConfigurationError(f"need n >= 4 interior nodes, got {self.n}")
        if self.h != (self.x_right - self.x_left) / (self.n + 1):
            raise ConfigurationError("h must equal (x_right - x_left)/(n + 1)")

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates x_i = x_left + i*h, i = 1..n."""
        return self.x_left + np.arange(1, self.n + 1) * self.h

    @property
    def length(self) -> float:
        return self.x_right - self.x_left

    @property
    def measure(self) -> float:
        """Discrete measure of the domain, h*n (quadrature of the constant 1)."""
        return self.h * self.n

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.x_left + self.x_right)

    def distance_to_boundary(self) -> np.ndarray:
        x = self.nodes
        return np.minimum(x - self.x_left, self.x_right - x)

    def field(self, values) -> "FieldFunction":
        return FieldFunction(self, values)

    def sample(self, func) -> "FieldFunction":
        """Evaluate ``func`` at the interior nodes."""
        return FieldFunction(self, func(self.nodes))

    def zeros(self) -> "FieldFunction":
        return FieldFunction(self, np.zeros(self.n))

    def ones(self) -> "FieldFunction":
        return FieldFunction(self, np.ones(self.n))


def make_grid(x_left: float, x_right: float, n: int) -> Grid:
    """Uniform grid with ``n`` interior nodes on ``(x_left, x_right)``."""
    if isinstance(n, bool) or int(n) != n:
        raise ConfigurationError(f"n must be an integer, got {n!r}")
    n = int(n)
    if n < 4:
        raise ConfigurationError(f"need n >= 4 interior nodes, got {n}")
    x_left = float(x_left)
    x_right = float(x_right)
    if not x_left < x_right:
        raise ConfigurationError(f"need x_left < x_right, got ({x_left}, {x_right})")
    return Grid(x_left, x_right, n, (x_right - x_left) / (n + 1))


class FieldFunction:
    """Values of a function at the interior nodes of a grid.

    Arithmetic with scalars, arrays and other fields on the same grid returns
    new fields; the stored array is read-only.
    """

    __slots__ = ("grid", "values")
    __array_priority__ = 1000

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=float)
        if arr.shape != (grid.n,):
            raise UsageError(f"expected {grid.n} values, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise DomainError(f"non-finite value at interior node {bad + 1}")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("FieldFunction is immutable")

    def __len__(self):
        return self.grid.n

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __repr__(self):
        return f"FieldFunction(n={self.grid.n}, max={self.values.max():.6g}, min={self.values.min():.6g})"

    def _other(self, other):
        if isinstance(other, FieldFunction):
            if other.grid != self.grid:
                raise UsageError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return FieldFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return FieldFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return FieldFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return FieldFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return FieldFunction(self.grid, self.values / self._other(other))

    def __neg__(self):
        return FieldFunction(self.grid, -self.values)

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


def _check_same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise UsageError("fields live on different grids")
    return grid


def lp_norm(u: FieldFunction, p: float) -> float:
    """Discrete L^p norm (h * sum |u_i|^p)^(1/p)."""
    if not p >= 1:
        raise DomainError(f"lp_norm needs p >= 1, got {p}")
    a = np.abs(u.values)
    scale = a.max()
    if scale == 0.0:
        return 0.0
    # scaled to avoid overflow of |u|^p for large amplitudes
    return float(scale * (u.grid.h * np.sum((a / scale) ** p)) ** (1.0 / p))


def boundary_decay_exponent(u: FieldFunction, fraction: float = 0.1) -> float:
    """Least-squares slope of log u against log d(x) near both endpoints.

    The fit window holds the nodes with distance to the boundary below
    ``fraction`` times the half-width, minus the node adjacent to each
    endpoint.
    """
    if not 0 < fraction <= 0.2:
        raise DomainError(f"fraction must lie in (0, 0.2], got {fraction}")
    grid = u.grid
    d = grid.distance_to_boundary()
    half = 0.5 * grid.length
    idx = np.flatnonzero((d < fraction * half) & (d > 1.5 * grid.h))
    if idx.size < 2:
        raise DomainError("fit window holds fewer than two nodes; refine the grid")
    vals = u.values[idx]
    bad = np.flatnonzero(vals <= 0)
    if bad.size:
        node = int(idx[bad[0]]) + 1
        raise DiagnosticError(
            f"nonpositive value {vals[bad[0]]:.3e} at node {node} inside the decay fit window")
    slope, _ = np.polyfit(np.log(d[idx]), np.log(vals), 1)
    return float(slope)
