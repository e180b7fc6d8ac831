"""Uniform space-time grids, sampled fields and finite-difference machinery.

All derivatives are fourth-order accurate: central stencils in the interior,
one-sided stencils of ``order + 4`` nodes near the ends.  Fields are stored
``[time, space]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Union

import numpy as np

__all__ = [
    "Grid",
    "Slice",
    "SampledField",
    "StencilError",
    "fd_weights",
    "differentiate",
    "deriv_x",
    "deriv_t",
    "cumulative_integral",
    "integrate_x",
    "kdv_residual",
    "mkdv_residual",
    "interior",
    "interior_max",
    "write_field_csv",
    "read_slice_csv",
]

# nodes per side computed with a non-central stencil, by derivative order
CENTRAL_HALF_WIDTH = {1: 2, 2: 2, 3: 3, 4: 3}
X_BAND = 3
T_BAND = 2


class StencilError(ValueError):
    """Raised when a grid is too small for the requested stencil."""


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on ``[t0, t_max] x [x_min, x_max]``.

    When the spatial interval straddles the origin the grid is shifted by
    less than half a spacing so that ``x = 0`` is a node.
    """

    x_min: float
    x_max: float
    nx: int
    t0: float = 0.0
    t_max: float = 1.0
    nt: int = 2

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"need x_min < x_max, got {self.x_min} >= {self.x_max}")
        if int(self.nx) != self.nx or self.nx < 16:
            raise ValueError(f"nx must be an integer >= 16, got {self.nx}")
        if int(self.nt) != self.nt or self.nt < 2:
            raise ValueError(f"nt must be an integer >= 2, got {self.nt}")
        if self.t_max < self.t0:
            raise ValueError("t_max must not precede t0")
        h = (self.x_max - self.x_min) / (self.nx - 1)
        if self.x_min < 0.0 < self.x_max:
            k = round(-self.x_min / h)
            x_min = -k * h
            object.__setattr__(self, "x_min", float(x_min))
            object.__setattr__(self, "x_max", float(x_min + (self.nx - 1) * h))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nt", int(self.nt))

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return (self.t_max - self.t0) / (self.nt - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.nx)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.nt)

    @property
    def zero_index(self) -> int:
        idx = int(round(-self.x_min / self.h))
        if not 0 <= idx < self.nx or abs(self.x_min + idx * self.h) > 1e-12:
            raise ValueError("x = 0 is not a node of this grid")
        return idx

    def with_time(self, t0: float, t_max: float, nt: int) -> "Grid":
        return Grid(self.x_min, self.x_max, self.nx, t0, t_max, nt)

    def refined(self, factor: int = 2) -> "Grid":
        """Grid with both spacings divided by ``factor`` (same extent)."""
        return Grid(self.x_min, self.x_max, factor * (self.nx - 1) + 1,
                    self.t0, self.t_max, factor * (self.nt - 1) + 1)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Slice:
    """Real samples on a uniform x-axis (one time level or initial data)."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = _frozen(self.x)
        v = _frozen(self.values)
        if x.ndim != 1 or v.shape != x.shape:
            raise ValueError(f"values shape {v.shape} does not match axis {x.shape}")
        if x.size < 2:
            raise ValueError("a slice needs at least two nodes")
        steps = np.diff(x)
        h = (x[-1] - x[0]) / (x.size - 1)
        if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * max(1.0, abs(h)) + 1e-12:
            raise ValueError("nonuniform or decreasing x-axis")
        if not np.all(np.isfinite(v)):
            raise ValueError("slice contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, x, f: Callable[[np.ndarray], np.ndarray]) -> "Slice":
        x = np.asarray(x, dtype=float)
        return cls(x, np.broadcast_to(f(x), x.shape))

    @property
    def h(self) -> float:
        return (self.x[-1] - self.x[0]) / (self.x.size - 1)

    @property
    def zero_index(self) -> int:
        idx = int(round(-self.x[0] / self.h))
        if not 0 <= idx < self.x.size or abs(self.x[idx]) > 1e-12:
            raise ValueError("x = 0 is not a node of this slice")
        return idx

    def with_values(self, values) -> "Slice":
        return Slice(self.x, values)


@dataclass(frozen=True)
class SampledField:
    """Real samples ``values[i, j] = f(t_i, x_j)`` on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.nt, self.grid.nx):
            raise ValueError(
                f"values shape {v.shape} != grid shape {(self.grid.nt, self.grid.nx)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable) -> "SampledField":
        t = grid.t[:, None]
        x = grid.x[None, :]
        return cls(grid, np.broadcast_to(f(t, x), (grid.nt, grid.nx)))

    def at(self, i: int) -> Slice:
        return Slice(self.grid.x, self.values[i])

    def with_values(self, values) -> "SampledField":
        return SampledField(self.grid, values)


Sampled = Union[Slice, SampledField]


@lru_cache(maxsize=None)
def fd_weights(order: int, offsets: tuple) -> np.ndarray:
    """Finite-difference weights for ``d^order/dx^order`` at 0 (unit spacing).

    Fornberg's recursion on the given integer offsets.
    """
    z = np.asarray(offsets, dtype=float)
    n = z.size
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, z[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order].copy()


def differentiate(values: np.ndarray, spacing: float, order: int, axis: int = -1) -> np.ndarray:
    """Fourth-order finite difference of ``values`` along ``axis``."""
    if order not in CENTRAL_HALF_WIDTH:
        raise ValueError(f"derivative order must be 1..4, got {order}")
    f = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    n = f.shape[-1]
    if n < order + 5:
        raise StencilError(f"{n} nodes too few for a derivative of order {order} "
                           f"(need {order + 5})")
    m = CENTRAL_HALF_WIDTH[order]
    scale = spacing ** order
    out = np.empty_like(f)
    w = fd_weights(order, tuple(range(-m, m + 1)))
    acc = np.zeros(f.shape[:-1] + (n - 2 * m,))
    for k, wk in zip(range(-m, m + 1), w):
        if wk != 0.0:
            acc += wk * f[..., m + k:n - m + k]
    out[..., m:n - m] = acc / scale
    width = order + 4
    for i in range(m):
        wl = fd_weights(order, tuple(range(-i, width - i)))
        out[..., i] = f[..., :width] @ wl / scale
        wr = fd_weights(order, tuple(range(-(width - 1 - i), i + 1)))
        out[..., n - 1 - i] = f[..., n - width:] @ wr / scale
    return np.moveaxis(out, -1, axis)


def deriv_x(f: Sampled, order: int = 1) -> Sampled:
    """Spatial derivative of a slice or field, same shape as the input."""
    if isinstance(f, Slice):
        return f.with_values(differentiate(f.values, f.h, order))
    return f.with_values(differentiate(f.values, f.grid.h, order, axis=1))


def deriv_t(f: SampledField, order: int = 1) -> SampledField:
    if f.grid.nt < 5:
        raise StencilError("time derivatives need at least 5 time levels")
    return f.with_values(differentiate(f.values, f.grid.dt, order, axis=0))


def cumulative_integral(values: np.ndarray, spacing: float, base_index: int,
                        axis: int = -1) -> np.ndarray:
    """Primitive ``F`` with ``F[base_index] = 0`` along ``axis``.

    Each cell uses the four-point cubic rule (exact for cubics), so the
    primitive is fourth-order accurate at every node.
    """
    f = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    n = f.shape[-1]
    if n < 4:
        raise StencilError("need at least 4 nodes to integrate")
    if not 0 <= base_index < n:
        raise IndexError(f"base index {base_index} outside 0..{n - 1}")
    cells = np.empty(f.shape[:-1] + (n - 1,))
    cells[..., 0] = 9 * f[..., 0] + 19 * f[..., 1] - 5 * f[..., 2] + f[..., 3]
    cells[..., 1:n - 2] = (-f[..., 0:n - 3] + 13 * f[..., 1:n - 2]
                           + 13 * f[..., 2:n - 1] - f[..., 3:n])
    cells[..., n - 2] = (f[..., n - 4] - 5 * f[..., n - 3]
                         + 19 * f[..., n - 2] + 9 * f[..., n - 1])
    cells *= spacing / 24.0
    prim = np.concatenate([np.zeros(f.shape[:-1] + (1,)), np.cumsum(cells, axis=-1)], axis=-1)
    prim -= prim[..., base_index:base_index + 1]
    return np.moveaxis(prim, -1, axis)


def integrate_x(s: Slice, base_index: int | None = None) -> Slice:
    """Primitive of a slice normalised to vanish at ``x = 0``."""
    if base_index is None:
        base_index = s.zero_index
    return s.with_values(cumulative_integral(s.values, s.h, base_index))


def interior(values: np.ndarray, x_band: int = X_BAND, t_band: int = T_BAND) -> np.ndarray:
    """Drop the boundary bands where one-sided stencils were used."""
    v = np.asarray(values)
    if v.ndim == 1:
        return v[x_band:v.size - x_band]
    return v[t_band:v.shape[0] - t_band, x_band:v.shape[1] - x_band]


def interior_max(f: Sampled, x_band: int = X_BAND, t_band: int = T_BAND) -> float:
    return float(np.max(np.abs(interior(f.values, x_band, t_band))))


def kdv_residual(q: SampledField) -> SampledField:
    """Pointwise ``q_t - 6 q q_x + q_xxx``."""
    v = q.values
    qt = differentiate(v, q.grid.dt, 1, axis=0) if q.grid.nt >= 5 else _too_few_levels()
    qx = differentiate(v, q.grid.h, 1, axis=1)
    qxxx = differentiate(v, q.grid.h, 3, axis=1)
    return q.with_values(qt - 6.0 * v * qx + qxxx)


def mkdv_residual(r: SampledField) -> SampledField:
    """Pointwise ``r_t - 6 r^2 r_x + r_xxx``."""
    v = r.values
    rt = differentiate(v, r.grid.dt, 1, axis=0) if r.grid.nt >= 5 else _too_few_levels()
    rx = differentiate(v, r.grid.h, 1, axis=1)
    rxxx = differentiate(v, r.grid.h, 3, axis=1)
    return r.with_values(rt - 6.0 * v * v * rx + rxxx)


def _too_few_levels():
    raise StencilError("residuals need at least 5 time levels")


def write_field_csv(f: SampledField, path) -> None:
    """Write ``t,x,value`` rows, row-major over (t, x)."""
    tt, xx = np.meshgrid(f.grid.t, f.grid.x, indexing="ij")
    rows = np.column_stack([tt.ravel(), xx.ravel(), f.values.ravel()])
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header="t,x,value", comments="")


def read_slice_csv(path) -> Slice:
    """Read ``x,value`` rows (header required) into a :class:`Slice`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Slice(data[:, 0], data[:, 1])
