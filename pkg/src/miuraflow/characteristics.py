"""First-order linear transport ``u_t = a u_x + b u`` solved along characteristics.

Characteristic curves solve ``dx/dt = -a(t, x)``; along them
``d/dt u(t, x(t)) = b u``.  Every output node is traced backward to the
initial time with classical RK4, the path integral of ``b`` being carried as
an extra RK4 component so no second pass is needed.  Nodes are processed as a
``(time level, x)`` array, each time level with its own step size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .field import Grid, SampledField, Slice, deriv_x, differentiate, fd_weights

__all__ = [
    "DomainEscape",
    "PaddingError",
    "GrowthError",
    "InconsistentTrace",
    "Coefficient",
    "ClosedForm",
    "Interpolated",
    "CoefficientPair",
    "CharacteristicTable",
    "Footprint",
    "JacobianReport",
    "GrowthReport",
    "as_coefficient",
    "trace",
    "march",
    "backward_footprint",
    "characteristic_table",
    "jacobian",
    "solve_first_order",
    "solve_inhomogeneous",
    "check_growth_bounds",
    "linear_growth_check",
    "initial_data",
    "MAX_STEP",
]

MAX_STEP = 1e-3
TRACE_TOL = 1e-9
BLOCK_ELEMENTS = 16384


class DomainEscape(RuntimeError):
    """A characteristic left the region where a coefficient is known."""

    def __init__(self, msg: str, exit_time: float, nodes: Sequence[tuple]):
        super().__init__(msg)
        self.exit_time = exit_time
        self.nodes = list(nodes)


class PaddingError(ValueError):
    pass


class GrowthError(ValueError):
    pass


class InconsistentTrace(RuntimeError):
    pass


class Coefficient:
    """A real function of ``(t, x)``, broadcasting over array arguments.

    ``x_range``/``t_range`` are ``None`` for globally defined functions.
    """

    x_range: Optional[tuple] = None
    t_range: Optional[tuple] = None

    def __call__(self, t, x):
        raise NotImplementedError


class ClosedForm(Coefficient):
    def __init__(self, fn: Callable, name: str = "closed form"):
        self.fn = fn
        self.name = name

    def __call__(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        return np.broadcast_to(self.fn(t, x), x.shape)

    def __repr__(self):
        return f"ClosedForm({self.name})"


class Interpolated(Coefficient):
    """Bicubic spline through the samples of a :class:`SampledField`."""

    def __init__(self, f: SampledField):
        g = f.grid
        kt = min(3, g.nt - 1)
        self.spline = RectBivariateSpline(g.t, g.x, f.values, kx=kt, ky=3, s=0)
        self.x_range = (g.x_min, g.x_max)
        self.t_range = (g.t0, g.t_max)
        self.field = f

    def __call__(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        return self.spline.ev(t.ravel(), x.ravel()).reshape(x.shape)


def as_coefficient(c) -> Coefficient:
    if isinstance(c, Coefficient):
        return c
    if isinstance(c, SampledField):
        return Interpolated(c)
    if callable(c):
        return ClosedForm(c)
    value = float(c)
    return ClosedForm(lambda t, x: np.full(np.shape(x), value), f"{value:g}")


def _intersect(r1, r2):
    if r1 is None:
        return r2
    if r2 is None:
        return r1
    return (max(r1[0], r2[0]), min(r1[1], r2[1]))


class CoefficientPair:
    """Coefficients ``(a, b)`` of ``u_t = a u_x + b u``."""

    def __init__(self, a, b=0.0, fused: Optional[Callable] = None):
        self.a = as_coefficient(a)
        self.b = as_coefficient(b)
        self._fused = fused

    def __call__(self, t, x):
        if self._fused is not None:
            return self._fused(t, x)
        return self.a(t, x), self.b(t, x)

    @property
    def x_range(self):
        return _intersect(self.a.x_range, self.b.x_range)

    @property
    def t_range(self):
        return _intersect(self.a.t_range, self.b.t_range)

    @classmethod
    def q_lambda(cls, q, lam: float = 0.0) -> "CoefficientPair":
        """Coefficients ``a = 4 lam + 2 q``, ``b = -q_x`` of the transport
        ``psi_t = (4 lam + 2 q) psi_x - q_x psi``.

        ``q`` is a closed-form KDV solution (anything with ``q_and_qx``) or a
        :class:`SampledField`, whose x-derivative is taken by finite
        differences before interpolation.
        """
        lam = float(lam)
        if isinstance(q, SampledField):
            a = q.with_values(4.0 * lam + 2.0 * q.values)
            b = deriv_x(q).with_values(-deriv_x(q).values)
            return cls(Interpolated(a), Interpolated(b))
        if not getattr(q, "closed_form", True):
            raise TypeError("numeric KdV solutions must be sampled first")

        def fused(t, x):
            qq, qx = q.q_and_qx(t, x)
            return 4.0 * lam + 2.0 * qq, -qx

        return cls(ClosedForm(lambda t, x: 4.0 * lam + 2.0 * q.q(t, x), "4lam+2q"),
                   ClosedForm(lambda t, x: -q.q_x(t, x), "-q_x"), fused)


def _step_counts(span: np.ndarray, max_step: float, substeps: Optional[int]) -> np.ndarray:
    if substeps is not None:
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        n = np.full(span.shape, int(substeps))
    else:
        n = np.ceil(np.abs(span) / max_step - 1e-9).astype(int)
        n = np.maximum(n, 1)
    n[span == 0] = 0
    return n


def march(pair: CoefficientPair, t_start, x, t_end, max_step: float = MAX_STEP,
          substeps: Optional[int] = None, node_labels=None):
    """RK4 march of ``dx/dt = -a``, ``dG/dt = b`` from ``t_start`` to ``t_end``.

    ``x`` has shape ``(rows, cols)``; ``t_start`` and ``t_end`` are scalars or
    length-``rows`` vectors, each row using its own uniform step.  Returns the
    end positions and ``G = int_{t_start}^{t_end} b(s, x(s)) ds``.
    """
    x = np.array(x, dtype=float, ndmin=2)
    rows = x.shape[0]
    t_start = np.broadcast_to(np.asarray(t_start, float), (rows,))
    t_end = np.broadcast_to(np.asarray(t_end, float), (rows,))
    span = t_end - t_start
    n = _step_counts(span, max_step, substeps)
    dt = np.where(n > 0, span / np.maximum(n, 1), 0.0)

    order = np.argsort(-n, kind="stable")
    X = x[order].copy()
    G = np.zeros_like(X)
    T0 = t_start[order][:, None]
    DT = dt[order][:, None]
    N = n[order]
    xr = pair.x_range
    tr = pair.t_range
    if tr is not None:
        lo = np.minimum(t_start, t_end).min() if rows else 0.0
        hi = np.maximum(t_start, t_end).max() if rows else 0.0
        if lo < tr[0] - 1e-12 or hi > tr[1] + 1e-12:
            raise DomainEscape(f"time interval [{lo:g}, {hi:g}] outside the coefficient "
                               f"range [{tr[0]:g}, {tr[1]:g}]", lo, [])
    if xr is not None:
        _check_inside(X, xr, T0[:, 0], order, node_labels)

    cols = X.shape[1]
    # column blocks small enough for the temporaries to stay in cache
    width = max(1, BLOCK_ELEMENTS // max(rows, 1))
    for c0 in range(0, cols, width):
        blk = slice(c0, min(cols, c0 + width))
        Xs = X[:, blk].copy()
        # track the displacement, which is small, to keep rounding noise
        # in x0 well below the node-to-node scale seen by differences
        Db = np.zeros_like(Xs)
        Gb = G[:, blk]
        steps = int(N.max()) if rows else 0
        m = rows
        for s in range(steps):
            while m > 0 and N[m - 1] <= s:
                m -= 1
            Da = Db[:m]
            Xa = Xs[:m]
            h = DT[:m]
            t = T0[:m] + s * h
            a1, b1 = pair(t, Xa + Da)
            a2, b2 = pair(t + 0.5 * h, Xa + (Da - 0.5 * h * a1))
            a3, b3 = pair(t + 0.5 * h, Xa + (Da - 0.5 * h * a2))
            a4, b4 = pair(t + h, Xa + (Da - h * a3))
            Db[:m] = Da - h / 6.0 * (a1 + 2.0 * (a2 + a3) + a4)
            Gb[:m] += h / 6.0 * (b1 + 2.0 * (b2 + b3) + b4)
            if xr is not None:
                _check_inside(Xa + Db[:m], xr, (t + h)[:, 0], order[:m], node_labels, c0)
        X[:, blk] = Xs + Db

    inv = np.empty_like(order)
    inv[order] = np.arange(rows)
    return X[inv], G[inv]


def _check_inside(X, xr, times, order, labels, col0=0):
    bad = (X < xr[0] - 1e-12) | (X > xr[1] + 1e-12)
    if not bad.any():
        return
    r, c = np.nonzero(bad)
    exit_time = float(times[r[0]])
    nodes = []
    for ri, ci in zip(order[r], c + col0):
        nodes.append(labels(ri, ci) if labels is not None else (int(ri), int(ci)))
    shown = ", ".join(str(nd) for nd in nodes[:5])
    more = f" and {len(nodes) - 5} more" if len(nodes) > 5 else ""
    raise DomainEscape(f"characteristic left the coefficient window "
                       f"[{xr[0]:g}, {xr[1]:g}] at t={exit_time:.6g}; "
                       f"nodes {shown}{more}", exit_time, nodes)


def trace(a, t_from: float, x0, t_to: float, substeps: Optional[int] = None,
          max_step: float = MAX_STEP):
    """Position at ``t_to`` of the characteristic ``dx/dt = -a(t, x)``
    through ``(t_from, x0)``.  ``x0`` may be an array."""
    pair = a if isinstance(a, CoefficientPair) else CoefficientPair(a, 0.0)
    x0a = np.asarray(x0, dtype=float)
    X, _ = march(pair, t_from, x0a.reshape(1, -1), t_to, max_step, substeps)
    out = X.reshape(x0a.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Footprint:
    """Departure points ``x0 = xi(t0; t_i, x_j)`` of all output nodes and the
    path integrals ``G = int_{t0}^{t_i} b``."""

    grid: Grid
    t_start: float
    x0: np.ndarray
    growth: np.ndarray

    def departure_range(self):
        return float(self.x0.min()), float(self.x0.max())

    def transport(self, u0) -> SampledField:
        u0 = initial_data(u0)
        return SampledField(self.grid, u0(self.x0) * np.exp(self.growth))

    def transport_log(self, p0) -> SampledField:
        """Same transport for ``p = log u``: ``p = p0(x0) + G``."""
        p0 = initial_data(p0)
        return SampledField(self.grid, p0(self.x0) + self.growth)

    def transport_plain(self, s0) -> SampledField:
        """Pure transport ``s0(x0)`` ignoring ``b``."""
        s0 = initial_data(s0)
        return SampledField(self.grid, s0(self.x0))


def initial_data(u0) -> Callable:
    """Turn a callable or a :class:`Slice` into a callable of ``x``.

    Slices are interpolated by a not-a-knot cubic spline; evaluation outside
    the slice axis raises :class:`DomainEscape`.
    """
    if isinstance(u0, Slice):
        spline = CubicSpline(u0.x, u0.values)
        lo, hi = u0.x[0], u0.x[-1]
        tol = 1e-9 * u0.h

        def f(x):
            x = np.asarray(x, float)
            bad = (x < lo - tol) | (x > hi + tol)
            if bad.any():
                idx = [tuple(int(v) for v in i) for i in np.argwhere(bad)[:5]]
                raise DomainEscape(
                    f"{int(bad.sum())} departure points fall outside the initial-data axis "
                    f"[{lo:g}, {hi:g}] (range {x.min():.6g}..{x.max():.6g}); first nodes {idx}",
                    float("nan"), [tuple(i) for i in np.argwhere(bad)])
            return spline(x)

        return f
    if callable(u0):
        return lambda x: np.broadcast_to(u0(np.asarray(x, float)), np.shape(x))
    raise TypeError("initial data must be a Slice or a callable of x")


def _padding_check(pair: CoefficientPair, grid: Grid, t_start: float):
    """For interpolated coefficients, require a window wide enough that no
    characteristic started in the output window can reach its edge."""
    xr = pair.x_range
    if xr is None:
        return
    T = max(abs(grid.t_max - t_start), abs(grid.t0 - t_start))
    X = max(abs(grid.x_min), abs(grid.x_max))
    fields = [c.field for c in (pair.a,) if isinstance(c, Interpolated)]
    if not fields:
        return
    a = np.abs(fields[0].values)
    xs = fields[0].grid.x
    sup = float(a.max())
    C = float((a / (1.0 + np.abs(xs))[None, :]).max())
    margin = min(grid.x_min - xr[0], xr[1] - grid.x_max)
    # bounded speed: displacement <= sup|a| T
    if margin >= sup * T:
        return
    # linear growth (Gronwall): |x(t)| <= (1 + |x0|) e^{C T} - 1
    need = (1.0 + X) * math.exp(C * T) - 1.0
    if min(-xr[0], xr[1]) >= need:
        return
    raise PaddingError(
        f"coefficient window [{xr[0]:g}, {xr[1]:g}] too narrow for output window "
        f"[{grid.x_min:g}, {grid.x_max:g}] over time {T:g}: need a margin of "
        f"{sup * T:.4g} (sup|a|={sup:.4g}) or half-width {need:.4g}")


def backward_footprint(pair: CoefficientPair, grid: Grid, t_start: Optional[float] = None,
                       max_step: float = MAX_STEP, substeps: Optional[int] = None,
                       check_padding: bool = True) -> Footprint:
    """Trace every node of ``grid`` back to ``t_start`` (default ``grid.t0``)."""
    t_start = grid.t0 if t_start is None else float(t_start)
    if check_padding:
        _padding_check(pair, grid, t_start)
    x = np.broadcast_to(grid.x, (grid.nt, grid.nx))
    t = grid.t

    def label(i, j):
        return (float(t[i]), float(grid.x[j]))

    X, G = march(pair, t, x, t_start, max_step, substeps, node_labels=label)
    # G integrates from t_i down to t_start; flip to the forward orientation
    return Footprint(grid, t_start, X, -G)


def solve_first_order(pair: CoefficientPair, u0, grid: Grid, max_step: float = MAX_STEP,
                      substeps: Optional[int] = None, log: bool = False) -> SampledField:
    """Solve ``u_t = a u_x + b u`` with ``u(t0) = u0`` on ``grid``.

    With ``log=True`` the data and the result are ``log u``.
    """
    fp = backward_footprint(pair, grid, max_step=max_step, substeps=substeps)
    return fp.transport_log(u0) if log else fp.transport(u0)


def solve_inhomogeneous(a, eta, s0, grid: Grid, max_step: float = MAX_STEP,
                        substeps: Optional[int] = None) -> SampledField:
    """Solve ``s_t = a s_x + eta`` with ``s(t0) = s0``:
    ``s(t, x) = s0(xi(t0; t, x)) + int_{t0}^t eta(tau, xi(tau; t, x)) dtau``."""
    pair = CoefficientPair(a, eta)
    fp = backward_footprint(pair, grid, max_step=max_step, substeps=substeps)
    s0 = initial_data(s0)
    return SampledField(grid, s0(fp.x0) + fp.growth)


@dataclass(frozen=True)
class CharacteristicTable:
    """Forward flow ``xi[i, j] = xi(times[i]; t_origin, x[j])`` and its x-Jacobian
    (centred sixth-order differences of ``xi`` in ``x``)."""

    t_origin: float
    times: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    xi_x: np.ndarray

    def write_csv(self, path) -> None:
        tt = np.broadcast_to(self.times[:, None], self.xi.shape)
        xx = np.broadcast_to(self.x[None, :], self.xi.shape)
        rows = np.column_stack([tt.ravel(), xx.ravel(), self.xi.ravel(), self.xi_x.ravel()])
        np.savetxt(path, rows, fmt="%.17g", delimiter=",", header="t,x0,xi,xi_x", comments="")


def characteristic_table(a, x, t_origin: float, times, max_step: float = MAX_STEP,
                         substeps: Optional[int] = None) -> CharacteristicTable:
    pair = a if isinstance(a, CoefficientPair) else CoefficientPair(a, 0.0)
    x = np.asarray(x, float)
    times = np.asarray(times, float)
    h = (x[-1] - x[0]) / (x.size - 1)
    X, _ = march(pair, t_origin, np.broadcast_to(x, (times.size, x.size)), times,
                 max_step, substeps)
    if np.any(np.diff(X, axis=1) <= 0):
        raise InconsistentTrace("traced flow is not increasing in x")
    return CharacteristicTable(t_origin, times, x, X, _flow_gradient(X, h))


def _flow_gradient(X: np.ndarray, h: float) -> np.ndarray:
    """Sixth-order central ``d/dx`` in the interior, fourth-order one-sided
    stencils within three nodes of the ends."""
    out = differentiate(X, h, 1, axis=1)
    n = X.shape[1]
    if n >= 7:
        w = fd_weights(1, tuple(range(-3, 4)))
        out[:, 3:n - 3] = sum(wk * X[:, 3 + k:n - 3 + k] for k, wk in zip(range(-3, 4), w)
                              if wk != 0.0) / h
    return out


@dataclass(frozen=True)
class JacobianReport:
    formula: np.ndarray
    finite_difference: np.ndarray
    max_dev: float
    tol: float

    @property
    def consistent(self) -> bool:
        return self.max_dev <= self.tol


def jacobian(q, lam: float, table: CharacteristicTable, tol: float = 1e-6,
             max_step: float = MAX_STEP) -> JacobianReport:
    """``xi_x`` for the field ``a = 4 lam + 2 q`` two ways: the exponential
    formula ``exp(-2 int q_x)`` along the traced paths, and differences of
    the tabulated flow.  Raises if they disagree by more than ``100 tol``."""
    pair = CoefficientPair.q_lambda(q, lam)
    x = np.broadcast_to(table.x, table.xi.shape)
    X, G = march(pair, table.t_origin, x, table.times, max_step)
    if np.max(np.abs(X - table.xi)) > 100 * TRACE_TOL:
        raise InconsistentTrace("table was not traced with the Q-form field of this q")
    # G = int (-q_x) along the path, and xi_x = exp(-int a_x) = exp(2 G)
    formula = np.exp(2.0 * G)
    dev = float(np.max(np.abs(formula - table.xi_x)))
    if dev > 100 * tol:
        raise InconsistentTrace(f"jacobian formula and finite differences differ by {dev:.3g}")
    return JacobianReport(formula, table.xi_x, dev, tol)


@dataclass(frozen=True)
class GrowthReport:
    C1: float
    C2: float
    passed: bool
    violations: int
    n_samples: int

    def as_dict(self):
        return {"C1": self.C1, "C2": self.C2, "pass": self.passed,
                "violations": self.violations, "n_samples": self.n_samples}


def check_growth_bounds(a, window: tuple, N_floor: float, t_range: tuple = (0.0, 1.0),
                        n_x: int = 41, n_t: int = 6, max_step: float = MAX_STEP) -> GrowthReport:
    """Fit ``C1 |x| <= |xi(t; t', x)| <= C2 |x|`` over sampled ``|x| >= N_floor``
    and forward pairs ``t >= t'``.

    The constants are fitted on a coarse sample; a second sample at the
    midpoints is then checked against the fitted bounds (with factor 2
    slack) and against ``|xi| >= C1 N_floor / 2``.
    """
    x_lo, x_hi = window
    if N_floor <= 0:
        raise ValueError("N_floor must be positive")
    pair = a if isinstance(a, CoefficientPair) else CoefficientPair(a, 0.0)

    def sample(nx, shift):
        pts = []
        for lo, hi in ((x_lo, -N_floor), (N_floor, x_hi)):
            if hi > lo:
                g = np.linspace(lo, hi, nx)
                if shift:
                    g = 0.5 * (g[1:] + g[:-1])
                pts.append(g)
        if not pts:
            raise ValueError("window contains no points with |x| >= N_floor")
        return np.concatenate(pts)

    ts = np.linspace(t_range[0], t_range[1], n_t)

    def ratios(x):
        out = []
        for k, tp in enumerate(ts):
            later = ts[k:]
            X, _ = march(pair, tp, np.broadcast_to(x, (later.size, x.size)), later, max_step)
            out.append(X)
        return np.concatenate(out, axis=0)

    x_fit = sample(n_x, False)
    X = ratios(x_fit)
    r = np.abs(X) / np.abs(x_fit)[None, :]
    C1, C2 = float(r.min()), float(r.max())
    x_chk = sample(n_x, True)
    Xc = ratios(x_chk)
    rc = np.abs(Xc) / np.abs(x_chk)[None, :]
    viol = int(np.count_nonzero((rc < C1 / 2) | (rc > 2 * C2)
                                | (np.abs(Xc) < C1 * N_floor / 2)))
    passed = bool(0 < C1 <= C2 < np.inf and viol == 0)
    return GrowthReport(C1, C2, passed, viol, int(X.size + Xc.size))


def linear_growth_check(a, x_range: tuple, t_range: tuple, n_x: int = 401, n_t: int = 11,
                        ratio_limit: float = 1.5) -> float:
    """Sampled check of ``|a(t, x)| <= C |x|`` for ``|x| >= 1``.

    Returns the fitted ``C``.  Raises :class:`GrowthError` when ``|a|/|x|``
    on the outer quarter of the window exceeds ``ratio_limit`` times its
    value on the inner part, the sampled signature of superlinear growth.
    This cannot prove linear growth; it only rejects evident violations.
    """
    a = as_coefficient(a)
    x = np.linspace(x_range[0], x_range[1], n_x)
    t = np.linspace(t_range[0], t_range[1], n_t)
    vals = np.abs(a(t[:, None], x[None, :]))
    ratio = vals / np.maximum(1.0, np.abs(x))[None, :]
    C = float(ratio.max())
    X = max(abs(x_range[0]), abs(x_range[1]))
    outer = np.abs(x) >= 0.75 * X
    inner = (np.abs(x) < 0.5 * X)
    if X > 2.0 and inner.any() and outer.any():
        r_out = ratio[:, outer].max()
        r_in = ratio[:, inner].max()
        if r_out > ratio_limit * max(r_in, 1e-300) and r_out > 1e-12:
            raise GrowthError(f"coefficient grows superlinearly on the sampled window "
                              f"(|a|/|x| = {r_out:.3g} near the edges vs {r_in:.3g} inside)")
    return C
