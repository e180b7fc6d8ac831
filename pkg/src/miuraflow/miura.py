"""Miura map ``B(r) = r_x + r^2`` and its inversion along a KdV flow.

Given ``r0`` and a KdV solution ``q`` with ``B(r0) = q(t0)``, the positive
kernel element ``psi0 = exp(int_0^x r0)`` of ``-d^2/dx^2 + q(t0)`` is carried
by ``psi_t = 2 q psi_x - q_x psi``; then ``r = psi_x / psi`` solves mKdV.
Everything is done with ``p = log psi`` so growing data never overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .characteristics import (CoefficientPair, DomainEscape, Footprint, backward_footprint,
                              linear_growth_check)
from .field import (Grid, SampledField, Slice, X_BAND, cumulative_integral, deriv_t, deriv_x,
                    differentiate, integrate_x, interior, interior_max, kdv_residual,
                    mkdv_residual, read_slice_csv)
from .kdv import KdvSolution, evaluate
from .specparse import SpecNode, parse_spec

__all__ = [
    "GateError",
    "Profile",
    "SliceProfile",
    "PipelineResult",
    "profile_from_spec",
    "miura_map",
    "psi_initial",
    "log_psi_initial",
    "transport_psi",
    "transport_log_psi",
    "invert_miura_flow",
    "rho_crosscheck",
    "wronskian",
    "commutator_check",
    "factorization_check",
    "GATE_TOL",
    "LAMBDA_SWEEP",
]

GATE_TOL = 1e-6
LAMBDA_SWEEP = (0.0, 0.7, -0.7, 1.0)
LOG_MAX = 700.0


class GateError(ValueError):
    """Initial data not on the Miura fiber of the given KdV solution."""


# ---------------------------------------------------------------- profiles

class Profile:
    """Initial mKdV data ``r0`` together with its primitive ``P(x) = int_0^x r0``."""

    name = "profile"

    def r(self, x):
        raise NotImplementedError

    def primitive(self, x):
        raise NotImplementedError

    # exact derivative, when the profile has one
    r_x = None

    def slice(self, x) -> Slice:
        return Slice(x, self.r(np.asarray(x, float)))


@dataclass(frozen=True)
class Kink(Profile):
    """``r0 = -kappa tanh(kappa (x - x0))``; ``B(r0)`` is a boosted soliton."""

    kappa: float = 1.0
    x0: float = 0.0

    @property
    def name(self):
        return f"kink:kappa={self.kappa:g},x0={self.x0:g}"

    def r(self, x):
        return -self.kappa * np.tanh(self.kappa * (np.asarray(x) - self.x0))

    def r_x(self, x):
        k = self.kappa
        return -k * k / np.cosh(k * (np.asarray(x) - self.x0)) ** 2

    def primitive(self, x):
        k = self.kappa
        return -(_logcosh(k * (np.asarray(x) - self.x0)) - _logcosh(-k * self.x0))

    def kdv_spec(self) -> str:
        k2 = self.kappa ** 2
        return f"boost:c={k2:.17g}(soliton:kappa={self.kappa:.17g},x0={self.x0:.17g})"


def _logcosh(z):
    a = np.abs(z)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


@dataclass(frozen=True)
class Const(Profile):
    c: float = 0.0

    @property
    def name(self):
        return f"const:c={self.c:g}"

    def r(self, x):
        return np.full(np.shape(x), float(self.c))

    def r_x(self, x):
        return np.zeros(np.shape(x))

    def primitive(self, x):
        return self.c * np.asarray(x, float)


class SliceProfile(Profile):
    """Sampled ``r0``; the primitive is integrated on the slice axis and both
    are interpolated by cubic splines."""

    def __init__(self, r0: Slice, name: str = "slice"):
        self.r0 = r0
        self.name = name
        self._r = CubicSpline(r0.x, r0.values)
        self._p = CubicSpline(r0.x, integrate_x(r0).values)
        self.x_range = (float(r0.x[0]), float(r0.x[-1]))

    def _check(self, x):
        lo, hi = self.x_range
        tol = 1e-9 * self.r0.h
        if np.any(x < lo - tol) or np.any(x > hi + tol):
            raise DomainEscape(f"points {np.min(x):.6g}..{np.max(x):.6g} outside the r0 axis "
                               f"[{lo:g}, {hi:g}]; supply r0 on a wider window",
                               float("nan"), [])

    def r(self, x):
        x = np.asarray(x, float)
        self._check(x)
        return self._r(x)

    def primitive(self, x):
        x = np.asarray(x, float)
        self._check(x)
        return self._p(x)


def profile_from_spec(spec) -> Profile:
    """``kink``, ``kink:kappa=..,x0=..``, ``const:c=..``, ``zero`` or ``csv:file=path``
    (a bare ``csv:path`` is accepted too)."""
    if isinstance(spec, str) and spec.startswith("csv:") and "=" not in spec:
        path = spec[4:]
        return SliceProfile(read_slice_csv(path), f"csv:file={path}")
    node = parse_spec(spec) if isinstance(spec, str) else spec
    if node.name == "kink":
        node.check_keys(("kappa", "x0"))
        kappa = node.number("kappa", 1.0)
        if kappa <= 0:
            raise ValueError("kink needs kappa > 0")
        return Kink(kappa, node.number("x0", 0.0))
    if node.name == "const":
        node.check_keys(("c",))
        return Const(node.number("c"))
    if node.name == "zero":
        node.check_keys(())
        return Const(0.0)
    if node.name == "csv":
        node.check_keys(("file",))
        path = node.params.get("file")
        if not path:
            raise KeyError("csv preset needs file=<path>")
        return SliceProfile(read_slice_csv(path), f"csv:file={path}")
    raise ValueError(f"unknown r0 preset {node.name!r}")


def _as_profile(r0) -> Profile:
    if isinstance(r0, Profile):
        return r0
    if isinstance(r0, Slice):
        return SliceProfile(r0)
    if isinstance(r0, str):
        return profile_from_spec(r0)
    raise TypeError("r0 must be a Profile, Slice or preset string")


# ------------------------------------------------------------- Miura map

def miura_map(r):
    """``r_x + r^2`` for a slice or a field."""
    rx = deriv_x(r)
    return rx.with_values(rx.values + r.values ** 2)


def log_psi_initial(r0: Slice) -> Slice:
    """``log psi0 = int_0^x r0``."""
    return integrate_x(r0)


def psi_initial(r0: Slice) -> Slice:
    """``psi0 = exp(int_0^x r0)``, strictly positive with ``psi0(0) = 1``."""
    p = log_psi_initial(r0)
    if p.values.max() > LOG_MAX:
        raise OverflowError("psi0 overflows; use log_psi_initial")
    return p.with_values(np.exp(p.values))


# ------------------------------------------------------------- transport

def _pair_and_grid(q, grid: Optional[Grid], lam: float):
    """Coefficient pair for the Q_lam transport and the output grid."""
    if isinstance(q, SampledField):
        pair = CoefficientPair.q_lambda(q, lam)
        if grid is None or grid == q.grid:
            return pair, q.grid, q
        return pair, grid, _restrict(q, grid)
    if isinstance(q, str):
        from .kdv import solution_from_spec
        q = solution_from_spec(q)
    if grid is None:
        raise ValueError("a grid is needed with a closed-form q")
    if not q.closed_form:
        qf = evaluate(q, grid)
        return CoefficientPair.q_lambda(qf, lam), grid, qf
    return CoefficientPair.q_lambda(q, lam), grid, evaluate(q, grid)


def _restrict(q: SampledField, grid: Grid) -> SampledField:
    """``q`` on a sub-window of its own grid (same spacing and time levels)."""
    g = q.grid
    i0 = int(round((grid.x_min - g.x_min) / g.h))
    same_t = grid.nt == g.nt and np.allclose(grid.t, g.t, rtol=0, atol=1e-12)
    ok = (same_t and abs(grid.h - g.h) <= 1e-9 * g.h and 0 <= i0
          and i0 + grid.nx <= g.nx and abs(g.x[i0] - grid.x_min) <= 1e-9 * g.h)
    if not ok:
        raise ValueError("output grid must be a node-aligned sub-window of the sampled q grid")
    return SampledField(grid, q.values[:, i0:i0 + grid.nx])


def _growth_gate(pair: CoefficientPair, grid: Grid):
    xr = pair.x_range or (grid.x_min, grid.x_max)
    linear_growth_check(pair.a, xr, (grid.t0, grid.t_max))


def _log_data(psi0):
    """Callable ``log psi0`` from a positive slice/callable."""
    if isinstance(psi0, Slice):
        if np.any(psi0.values <= 0):
            raise ValueError("psi0 must be strictly positive")
        return psi0.with_values(np.log(psi0.values))
    return lambda x: np.log(psi0(x))


def transport_log_psi(q, p0, lam: float = 0.0, grid: Optional[Grid] = None,
                      max_step: float = 1e-3, substeps=None) -> SampledField:
    """Carry ``p = log psi`` by ``p_t = (4 lam + 2 q) p_x - q_x``."""
    pair, grid, _ = _pair_and_grid(q, grid, lam)
    _growth_gate(pair, grid)
    fp = backward_footprint(pair, grid, max_step=max_step, substeps=substeps)
    return fp.transport_log(p0)


def transport_psi(q, psi0, lam: float = 0.0, grid: Optional[Grid] = None,
                  max_step: float = 1e-3, substeps=None) -> SampledField:
    """Carry a positive ``psi0`` by ``psi_t = (4 lam + 2 q) psi_x - q_x psi``."""
    p = transport_log_psi(q, _log_data(psi0), lam, grid, max_step, substeps)
    if p.values.max() > LOG_MAX:
        raise OverflowError("transported psi overflows; use transport_log_psi")
    return p.with_values(np.exp(p.values))


# -------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class PipelineResult:
    q: SampledField
    log_psi: SampledField
    r: SampledField
    diagnostics: dict = field(default_factory=dict)
    lam: float = 0.0

    @property
    def psi(self) -> SampledField:
        if self.log_psi.values.max() > LOG_MAX:
            raise OverflowError("psi overflows in double precision; use log_psi")
        return self.log_psi.with_values(np.exp(self.log_psi.values))


def _gl_cumulative(f: Callable, points: np.ndarray, order: int = 6) -> np.ndarray:
    """``int_0^x f`` at every entry of ``points`` by Gauss-Legendre on the
    gaps between consecutive sorted points.

    Sums run outward from 0 on each side so that rounding stays relative.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    flat = points.ravel()
    out = np.empty_like(flat)
    for sign in (1.0, -1.0):
        sel = np.nonzero(sign * flat >= 0)[0] if sign > 0 else np.nonzero(flat < 0)[0]
        if sel.size == 0:
            continue
        idx = sel[np.argsort(sign * flat[sel], kind="stable")]
        s = np.concatenate([[0.0], flat[idx]])
        a, b = s[:-1], s[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        vals = f(mid[:, None] + half[:, None] * nodes[None, :]) @ weights * half
        out[idx] = np.cumsum(vals)
    return out.reshape(points.shape)


def _wronskian_drift(profile: Profile, fp: Footprint, p: SampledField) -> float:
    """Drift of ``W(phi, psi)`` for the second kernel element
    ``phi = psi * w`` with ``w0 = int_0^x psi0^-2``.

    Both solve the same linear transport, so ``w`` is carried unchanged
    along characteristics and ``W = -psi^2 w_x``.
    """
    x0 = fp.x0
    lo, hi = float(x0.min()), float(x0.max())
    probe = np.linspace(min(lo, 0.0), max(hi, 0.0), 2001)
    if np.max(-2.0 * profile.primitive(probe)) > LOG_MAX:
        return float("nan")
    w = _gl_cumulative(lambda s: np.exp(-2.0 * profile.primitive(s)), x0)
    wx = differentiate(w, fp.grid.h, 1, axis=1)
    if np.any(wx <= 0):
        return float("inf")
    logW = 2.0 * p.values + np.log(wx)
    W = -np.exp(logW)
    ref = -1.0  # psi0(0)^2 * w0'(0)
    return float(np.max(np.abs(interior(W - ref, X_BAND, 0))) / max(1.0, abs(ref)))


def invert_miura_flow(r0, q, grid: Optional[Grid] = None, gate_tol: float = GATE_TOL,
                      max_step: float = 1e-3, substeps=None, lam: float = 0.0) -> PipelineResult:
    """Recover the mKdV solution ``r`` with ``r(t0) = r0`` and ``B(r) = q``.

    ``r0`` is a :class:`Profile`, preset string or :class:`Slice` (which must
    cover every departure point of the backward characteristics).  ``q`` is a
    KdV solution spec/object or a sampled field.
    """
    profile = _as_profile(r0)
    pair, grid, qf = _pair_and_grid(q, grid, lam)

    if profile.r_x is not None:
        b0 = profile.r_x(grid.x) + profile.r(grid.x) ** 2
    else:
        b0 = miura_map(Slice(grid.x, profile.r(grid.x))).values
    gate = interior(b0 + lam - qf.values[0], X_BAND, 0)
    gate_dev = float(np.max(np.abs(gate)))
    if not gate_dev <= gate_tol:
        raise GateError(f"initial data not Miura-compatible with q: "
                        f"max |B(r0) - q(t0)| = {gate_dev:.3g} > {gate_tol:g}")

    _growth_gate(pair, grid)
    fp = backward_footprint(pair, grid, max_step=max_step, substeps=substeps)
    p = fp.transport_log(profile.primitive)
    r = deriv_x(p)

    rx = deriv_x(r)
    kernel = interior(qf.values - lam - rx.values - r.values ** 2, X_BAND, 0)
    diag = {
        "min_psi": float(np.exp(p.values.min())),
        "kernel_residual": float(np.max(np.abs(kernel))),
        "mkdv_residual": interior_max(mkdv_residual(r)) if grid.nt >= 6 else float("nan"),
        "wronskian_drift": _wronskian_drift(profile, fp, p),
    }
    return PipelineResult(qf, p, r, diag, lam)


# ------------------------------------------------------------ cross checks

def rho_crosscheck(r, log_psi: Optional[SampledField] = None) -> dict:
    """``rho(t, x) = rho0(t) exp(int_0^x r)`` with
    ``rho0(t) = exp(int_0^t (2 r^3 - r_xx)(tau, 0) dtau)``.

    ``rho`` solves the same transport problem as ``psi``; with ``log_psi``
    given, ``max |rho - psi| / psi`` is returned as ``max_dev``.
    """
    if isinstance(r, PipelineResult):
        log_psi = r.log_psi if log_psi is None else log_psi
        r = r.r
    g = r.grid
    j0 = g.zero_index
    rxx = differentiate(r.values, g.h, 2, axis=1)[:, j0]
    rate = 2.0 * r.values[:, j0] ** 3 - rxx
    log_rho0 = cumulative_integral(rate, g.dt, 0) if g.nt >= 4 else \
        np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * g.dt)])
    log_rho = log_rho0[:, None] + cumulative_integral(r.values, g.h, j0, axis=1)
    out = {"log_rho": r.with_values(log_rho), "log_rho0": log_rho0, "max_dev": None}
    if log_rho.max() <= LOG_MAX:
        out["rho"] = r.with_values(np.exp(log_rho))
    if log_psi is not None:
        out["max_dev"] = float(np.max(np.abs(np.expm1(log_rho - log_psi.values))))
    return out


def wronskian(phi: SampledField, psi: SampledField) -> tuple:
    """``W = phi psi_x - psi phi_x`` and its drift relative to ``W(t0, 0)``."""
    if phi.grid != psi.grid:
        raise ValueError("phi and psi must share a grid")
    W = phi.values * deriv_x(psi).values - psi.values * deriv_x(phi).values
    ref = W[0, phi.grid.zero_index]
    drift = float(np.max(np.abs(interior(W - ref, X_BAND, 0))) / max(1.0, abs(ref)))
    return phi.with_values(W), drift


def _apply_L(phi, q, lam, h):
    return -differentiate(phi, h, 2) + (q - lam) * phi


def _apply_Q(phi, q, qx, lam, h):
    return (4.0 * lam + 2.0 * q) * differentiate(phi, h, 1) - qx * phi


def _norm(v, h):
    return math.sqrt(float(np.sum(v * v)) * h)


def commutator_check(q: SampledField, testfn, lams=LAMBDA_SWEEP, levels=None,
                     kdv: Optional[SampledField] = None) -> dict:
    """Check ``q_t phi = ([Q_lam, L_lam] + 4 q_x L_lam + KdV(q)) phi`` with
    ``Q_lam = (4 lam + 2 q) d/dx - q_x`` and ``L_lam = -d^2/dx^2 + q - lam``.

    Per ``lam`` the report holds relative L2 norms (over the interior, maximised
    over time levels) of

    * ``residual``: ``q_t phi - [Q, L] phi - 4 q_x L phi``, zero along KdV flows;
    * ``kdv_term``: ``KdV(q) phi``;
    * ``identity_residual``: the full identity including ``KdV(q) phi``,
      zero for any smooth ``q`` up to discretisation error.

    ``kdv`` supplies ``q_t - 6 q q_x + q_xxx`` explicitly; by default it is
    formed from the samples by finite differences.
    """
    g = q.grid
    phi = testfn.values if isinstance(testfn, Slice) else np.asarray(testfn(g.x), float)
    if phi.shape != (g.nx,):
        raise ValueError("test function must live on the x-axis of q")
    h = g.h
    qt = deriv_t(q).values
    qx = differentiate(q.values, h, 1, axis=1)
    kdv = kdv_residual(q).values if kdv is None else kdv.values
    if levels is None:
        levels = range(2, g.nt - 2) if g.nt > 4 else range(g.nt)
    band = 2 * X_BAND
    inner = slice(band, g.nx - band)
    phin = _norm(phi[inner], h)
    out = {}
    for lam in lams:
        res = kdv_res = full = 0.0
        for i in levels:
            qi, qxi = q.values[i], qx[i]
            Lphi = _apply_L(phi, qi, lam, h)
            Qphi = _apply_Q(phi, qi, qxi, lam, h)
            comm = _apply_Q(Lphi, qi, qxi, lam, h) - _apply_L(Qphi, qi, lam, h)
            lhs = qt[i] * phi
            d = (lhs - comm - 4.0 * qxi * Lphi)[inner]
            k = (kdv[i] * phi)[inner]
            res = max(res, _norm(d, h) / phin)
            kdv_res = max(kdv_res, _norm(k, h) / phin)
            full = max(full, _norm(d - k, h) / phin)
        out[float(lam)] = {"residual": res, "kdv_term": kdv_res, "identity_residual": full}
    return out


def factorization_check(q, lam: float, testfn, level: int = 0) -> float:
    """Relative L2 difference between ``A phi = -4 phi_xxx + 6 q phi_x + 3 q_x phi``
    and ``(Q_lam + 4 d/dx L_lam) phi`` at one time level."""
    s = q.at(level) if isinstance(q, SampledField) else q
    h = s.h
    qv = s.values
    phi = testfn.values if isinstance(testfn, Slice) else np.asarray(testfn(s.x), float)
    qx = differentiate(qv, h, 1)
    A = (-4.0 * differentiate(phi, h, 3) + 6.0 * qv * differentiate(phi, h, 1)
         + 3.0 * qx * phi)
    fact = _apply_Q(phi, qv, qx, lam, h) + 4.0 * differentiate(_apply_L(phi, qv, lam, h), h, 1)
    band = 2 * X_BAND
    inner = slice(band, s.x.size - band)
    return _norm((A - fact)[inner], h) / _norm(phi[inner], h)
