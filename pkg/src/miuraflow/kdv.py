"""KdV solutions ``q_t - 6 q q_x + q_xxx = 0``: closed-form catalog and a
pseudo-spectral integrator for decaying initial data."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .fft import fft, fftfreq, ifft, is_power_of_two
from .field import Grid, SampledField, Slice, read_slice_csv
from .specparse import SpecNode, parse_spec

__all__ = [
    "KdvSolution",
    "Zero",
    "Constant",
    "Soliton",
    "Boosted",
    "Numeric",
    "NumericalFailure",
    "WindowError",
    "evaluate",
    "galilean_boost",
    "solve_numeric",
    "solution_from_spec",
    "spectral_upsample",
]

EDGE_DECAY = 1e-12
# RK4 stability limit on the imaginary axis is 2*sqrt(2); keep a margin.
RK4_IMAG_LIMIT = 2.5


class NumericalFailure(RuntimeError):
    pass


class WindowError(ValueError):
    pass


def _sech2(z):
    # 1/cosh^2 without overflow for large |z|
    e = np.exp(-2.0 * np.abs(z))
    return 4.0 * e / (1.0 + e) ** 2


class KdvSolution:
    """Base class: a KdV solution evaluable at arbitrary (t, x) arrays."""

    closed_form = True

    def q(self, t, x):
        raise NotImplementedError

    def q_x(self, t, x):
        raise NotImplementedError

    def q_and_qx(self, t, x):
        return self.q(t, x), self.q_x(t, x)

    def field(self, grid: Grid) -> SampledField:
        return SampledField.from_function(grid, self.q)


@dataclass(frozen=True)
class Zero(KdvSolution):
    def q(self, t, x):
        return np.zeros(np.broadcast(t, x).shape)

    def q_x(self, t, x):
        return np.zeros(np.broadcast(t, x).shape)

    def __str__(self):
        return "zero"


@dataclass(frozen=True)
class Constant(KdvSolution):
    c: float

    def q(self, t, x):
        return np.full(np.broadcast(t, x).shape, float(self.c))

    def q_x(self, t, x):
        return np.zeros(np.broadcast(t, x).shape)

    def __str__(self):
        return f"const:c={self.c:g}"


@dataclass(frozen=True)
class Soliton(KdvSolution):
    """``q = -2 kappa^2 sech^2(kappa (x - x0 - 4 kappa^2 t))``."""

    kappa: float
    x0: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("soliton needs kappa > 0")

    def _z(self, t, x):
        k = self.kappa
        return k * (np.asarray(x) - self.x0 - 4.0 * k * k * np.asarray(t))

    def q(self, t, x):
        return -2.0 * self.kappa ** 2 * _sech2(self._z(t, x))

    def q_x(self, t, x):
        z = self._z(t, x)
        return 4.0 * self.kappa ** 3 * _sech2(z) * np.tanh(z)

    def q_and_qx(self, t, x):
        z = self._z(t, x)
        e = np.exp(-2.0 * np.abs(z))
        d = 1.0 / (1.0 + e)
        s2 = 4.0 * e * d * d
        th = np.copysign((1.0 - e) * d, z)
        k2 = self.kappa ** 2
        return -2.0 * k2 * s2, 4.0 * k2 * self.kappa * s2 * th

    def __str__(self):
        return f"soliton:kappa={self.kappa:g},x0={self.x0:g}"


@dataclass(frozen=True)
class Boosted(KdvSolution):
    """Galilean image ``q~(t, x) = q(t, x + 6 c t) + c``."""

    inner: KdvSolution
    c: float

    @property
    def closed_form(self):
        return self.inner.closed_form

    def q(self, t, x):
        return self.inner.q(t, np.asarray(x) + 6.0 * self.c * np.asarray(t)) + self.c

    def q_x(self, t, x):
        return self.inner.q_x(t, np.asarray(x) + 6.0 * self.c * np.asarray(t))

    def q_and_qx(self, t, x):
        q, qx = self.inner.q_and_qx(t, np.asarray(x) + 6.0 * self.c * np.asarray(t))
        return q + self.c, qx

    def __str__(self):
        return f"boost:c={self.c:g}({self.inner})"


@dataclass(frozen=True)
class Numeric(KdvSolution):
    """Decaying initial data to be integrated by :func:`solve_numeric`."""

    q0: Slice
    source: str = "<slice>"
    closed_form = False

    def q(self, t, x):
        raise TypeError("numeric solutions are only available through evaluate()")

    q_x = q

    def field(self, grid: Grid) -> SampledField:
        return evaluate(self, grid)

    def __str__(self):
        return f"numeric:file={self.source}"


def evaluate(spec: KdvSolution | str, grid: Grid) -> SampledField:
    """Sample a KdV solution on ``grid``."""
    if isinstance(spec, str):
        spec = solution_from_spec(spec)
    if isinstance(spec, Numeric):
        if not np.allclose(spec.q0.x, grid.x, rtol=0, atol=1e-9 * grid.h):
            raise WindowError("numeric KdV data must be given on the grid's x-axis")
        if abs(grid.t0) > 0:
            raise WindowError("numeric KdV solutions start at t0 = 0")
        return solve_numeric(spec.q0, grid.t_max, grid.nt)
    if isinstance(spec, Boosted) and not spec.closed_form:
        base = evaluate(spec.inner, grid)
        return galilean_boost(base, spec.c)
    return SampledField.from_function(grid, spec.q)


def _boost_window(grid: Grid, c: float) -> np.ndarray:
    shift = 6.0 * c * grid.t
    lo = grid.x_min - shift.min()
    hi = grid.x_max - shift.max()
    x = grid.x
    tol = 1e-9 * grid.h
    return np.nonzero((x >= lo - tol) & (x <= hi + tol))[0]


def galilean_boost(q, c: float, grid: Grid | None = None):
    """Galilean boost of a spec (exact) or of a sampled field (cubic spline in x).

    For sampled fields the output lives on the largest sub-window of the
    source grid whose shifted points ``x + 6 c t`` stay inside the source.
    """
    if isinstance(q, (KdvSolution, str)):
        if isinstance(q, str):
            q = solution_from_spec(q)
        return q if c == 0 else Boosted(q, float(c))
    if not isinstance(q, SampledField):
        raise TypeError("galilean_boost expects a KdvSolution, spec string or SampledField")
    if c == 0 and grid is None:
        return q
    src = q.grid
    if grid is None:
        idx = _boost_window(src, c)
        if idx.size < 16:
            raise WindowError(f"boost by c={c} leaves only {idx.size} usable nodes "
                              f"on [{src.x_min}, {src.x_max}]")
        grid = Grid(src.x[idx[0]], src.x[idx[-1]], idx.size, src.t0, src.t_max, src.nt)
    if not np.allclose(grid.t, src.t):
        raise WindowError("target grid must share the source time levels")
    out = np.empty((grid.nt, grid.nx))
    for i, ti in enumerate(grid.t):
        xs = grid.x + 6.0 * c * ti
        if xs.min() < src.x_min - 1e-9 * src.h or xs.max() > src.x_max + 1e-9 * src.h:
            raise WindowError(f"shifted window [{xs.min():.6g}, {xs.max():.6g}] at t={ti:.6g} "
                              f"leaves the source window [{src.x_min:.6g}, {src.x_max:.6g}]")
        out[i] = CubicSpline(src.x, q.values[i])(xs) + c
    return SampledField(grid, out)


def solve_numeric(q0: Slice, t_max: float, nt: int, substeps: int = 1,
                  full_box: bool = False) -> SampledField:
    """Integrate KdV from decaying data with a Fourier pseudo-spectral method.

    The dispersive term is treated exactly by an integrating factor, the
    nonlinear term ``3 (q^2)_x`` by classical RK4 with 2/3-rule dealiasing.
    The data are zero-padded to a periodic box twice as wide.  Only the
    original window is returned unless ``full_box`` is set, in which case
    the whole periodic box is returned (radiation that leaves the window
    is then still accounted for, e.g. in conservation checks).
    """
    n = q0.x.size
    if not is_power_of_two(n):
        raise ValueError(f"numeric KdV needs a power-of-two number of nodes, got {n}")
    edge = max(abs(q0.values[0]), abs(q0.values[-1]))
    if edge >= EDGE_DECAY:
        raise ValueError(f"initial data not decaying at the window edges (|q0| = {edge:.3g})")
    if nt < 2 or t_max <= 0:
        raise ValueError("need t_max > 0 and nt >= 2")
    grid = Grid(q0.x[0], q0.x[-1], n, 0.0, t_max, nt)
    if not np.allclose(grid.x, q0.x, rtol=0, atol=1e-9 * grid.h):
        raise ValueError("initial data axis must contain x = 0 as a node")
    h = q0.h
    m = 2 * n
    pad = n // 2
    u = np.zeros(m)
    u[pad:pad + n] = q0.values
    k = 2.0 * np.pi * fftfreq(m, h)
    kmax = np.abs(k).max()
    dealias = np.abs(k) <= (2.0 / 3.0) * kmax
    steps = (nt - 1) * substeps
    dt = t_max / steps
    lin = 1j * k ** 3
    e_half = np.exp(lin * dt / 2.0)
    e_full = e_half ** 2
    g = 3j * k * dt * dealias

    def nonlinear(vhat):
        w = ifft(vhat).real
        return g * fft(w * w)

    def check(vhat, step):
        amp = np.abs(ifft(vhat).real).max()
        if not np.isfinite(amp) or dt * 6.0 * amp * kmax * (2.0 / 3.0) > RK4_IMAG_LIMIT:
            need = int(math.ceil(t_max * 6.0 * max(amp, 1e-300) * kmax * (2.0 / 3.0)
                                 / RK4_IMAG_LIMIT)) + 1
            if not np.isfinite(need):
                need = 10 * (nt - 1) + 1
            raise NumericalFailure(
                f"time step {dt:.3g} unstable at step {step} (max|q|={amp:.3g}); "
                f"try nt >= {need // substeps + 1}")

    keep = slice(0, m) if full_box else slice(pad, pad + n)
    if full_box:
        grid = Grid(q0.x[0] - pad * h, q0.x[0] + (m - pad - 1) * h, m, 0.0, t_max, nt)
    v = fft(u)
    out = np.empty((nt, grid.nx))
    out[0] = u[keep]
    check(v, 0)
    for s in range(1, steps + 1):
        a = nonlinear(v)
        b = nonlinear(e_half * (v + a / 2.0))
        c = nonlinear(e_half * v + b / 2.0)
        d = nonlinear(e_full * v + e_half * c)
        v = e_full * v + (e_full * a + 2.0 * e_half * (b + c) + d) / 6.0
        if s % substeps == 0:
            out[s // substeps] = ifft(v).real[keep]
            if (s // substeps) % 50 == 0:
                check(v, s)
    check(v, steps)
    return SampledField(grid, out)


def spectral_upsample(s: Slice, factor: int) -> Slice:
    """Trigonometric interpolation of decaying data onto a ``factor``-times finer axis.

    The data are zero-padded periodically (as in :func:`solve_numeric`), so
    the output axis spans the same window with ``factor * n`` nodes per
    period; the final ``factor - 1`` nodes past the right end are dropped.
    """
    n = s.x.size
    if not is_power_of_two(n) or not is_power_of_two(factor):
        raise ValueError("spectral upsampling needs power-of-two sizes")
    m = 2 * n
    pad = n // 2
    u = np.zeros(m)
    u[pad:pad + n] = s.values
    uh = fft(u)
    big = np.zeros(m * factor, dtype=complex)
    half = m // 2
    big[:half] = uh[:half]
    big[-half:] = uh[-half:]
    big[half] *= 0.5
    big[-half] = big[half]
    fine = ifft(big).real * factor
    start = pad * factor
    values = fine[start:start + (n - 1) * factor + 1]
    x = s.x[0] + s.h / factor * np.arange(values.size)
    return Slice(x, values)


def solution_from_spec(spec: str | SpecNode) -> KdvSolution:
    """Build a :class:`KdvSolution` from the CLI mini-language."""
    node = parse_spec(spec) if isinstance(spec, str) else spec
    name = node.name
    if name == "zero":
        node.check_keys(())
        return Zero()
    if name == "const":
        node.check_keys(("c",))
        return Constant(node.number("c"))
    if name == "soliton":
        node.check_keys(("kappa", "x0"))
        return Soliton(node.number("kappa"), node.number("x0", 0.0))
    if name == "boost":
        node.check_keys(("c",))
        if node.inner is None:
            raise ValueError("boost needs an inner spec, e.g. boost:c=1(soliton:kappa=1)")
        return Boosted(solution_from_spec(node.inner), node.number("c"))
    if name == "numeric":
        node.check_keys(("file",))
        path = node.params.get("file")
        if not path:
            raise KeyError("numeric spec needs file=<csv>")
        return Numeric(read_slice_csv(path), path)
    raise ValueError(f"unknown KdV spec {name!r}")
