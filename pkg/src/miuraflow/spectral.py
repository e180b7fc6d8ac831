"""Discrete spectra of Schrodinger and impedance operators, eigenfunction
transport and the Lax evolution.

Operators are Dirichlet three-point discretizations on the interior nodes
of a window.  The impedance operator ``T u = -(rho^2 u')'/rho^2`` is stored
in its symmetrized form ``rho T rho^{-1}`` built from ``log rho`` so that
exponentially large densities never appear as matrix entries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal, solve_banded

from .characteristics import CoefficientPair, solve_first_order
from .fft import fft, fftfreq, ifft, is_power_of_two
from .field import Grid, SampledField, Slice, cumulative_integral, deriv_x
from .kdv import spectral_upsample

__all__ = [
    "WindowEdgeError",
    "InvarianceViolation",
    "TridiagonalOperator",
    "SpectrumResult",
    "InvarianceReport",
    "discretize_schrodinger",
    "sturm_count",
    "eigen_bisect",
    "match_spectra",
    "spectrum_invariance",
    "bound_state",
    "scattering_state",
    "transport_eigenfunction",
    "impedance_operator",
    "impedance_conjugation",
    "impedance_invariance",
    "lax_evolution_free",
    "narrowband_comparison",
    "lax_conjugation_check",
    "RHO2_RANGE",
]

RHO2_RANGE = (1e-8, 1e8)
EDGE_AMPLITUDE = 1e-10
FREE_EDGE_DECAY = 1e-12


class WindowEdgeError(ValueError):
    """An eigenvalue sits within the bisection tolerance of a window edge."""


class InvarianceViolation(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


# ---------------------------------------------------------------- operators

@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric tridiagonal matrix acting on the interior nodes ``x``.

    With ``weight = rho^2`` the represented operator is
    ``T = rho^{-1} S rho`` where ``S`` is the stored symmetric matrix; ``T``
    is then self-adjoint in the ``rho^2``-weighted inner product.
    """

    diagonal: np.ndarray
    off_diagonal: np.ndarray
    h: float
    x: np.ndarray
    weight: Optional[np.ndarray] = None
    log_rho: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.diagonal)
        if len(self.off_diagonal) != n - 1 or len(self.x) != n:
            raise ValueError("inconsistent tridiagonal dimensions")
        if self.weight is not None and len(self.weight) != n:
            raise ValueError("weight must match the diagonal")

    @property
    def size(self) -> int:
        return len(self.diagonal)

    def symmetric_apply(self, v):
        d, e = self.diagonal, self.off_diagonal
        out = d * v
        out[:-1] += e * v[1:]
        out[1:] += e * v[:-1]
        return out

    @property
    def rho(self) -> Optional[np.ndarray]:
        if self.log_rho is None:
            return None if self.weight is None else np.sqrt(self.weight)
        return np.exp(self.log_rho)

    def apply(self, u):
        """Apply the represented operator to interior samples ``u``."""
        u = np.asarray(u, float)
        if self.weight is None:
            return self.symmetric_apply(u)
        rho = self.rho
        return self.symmetric_apply(rho * u) / rho

    def inner(self, u, v) -> float:
        """``h sum w u v`` (weighted when a density is attached)."""
        w = 1.0 if self.weight is None else self.weight
        return float(self.h * np.sum(w * u * v))


def discretize_schrodinger(q: Slice) -> TridiagonalOperator:
    """``-d^2/dx^2 + q`` with Dirichlet ends at the first and last node of ``q``."""
    h = q.h
    n = q.x.size - 2
    return TridiagonalOperator(2.0 / h**2 + q.values[1:-1], np.full(n - 1, -1.0 / h**2), h,
                               q.x[1:-1].copy())


def sturm_count(op: TridiagonalOperator, mu) -> np.ndarray:
    """Number of eigenvalues strictly below each probe ``mu`` (vectorized).

    Counts the negative pivots of the LDL^T factorization of ``S - mu``.
    """
    mu = np.atleast_1d(np.asarray(mu, float))
    d, e2 = op.diagonal, op.off_diagonal**2
    tiny = np.finfo(float).tiny * 1e4
    piv = d[0] - mu
    count = (piv < 0).astype(int)
    for i in range(1, op.size):
        piv = np.where(piv == 0.0, tiny, piv)
        piv = d[i] - mu - e2[i - 1] / piv
        count += piv < 0
    return count


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    window: tuple
    tol: float
    multiplicities: list
    edge_amplitude: float = float("nan")

    @property
    def edge_ok(self) -> bool:
        return not self.edge_amplitude > EDGE_AMPLITUDE

    def as_dict(self):
        return {"eigenvalues": [float(v) for v in self.eigenvalues],
                "window": list(self.window), "tol": self.tol,
                "multiplicities": list(self.multiplicities),
                "edge_amplitude": self.edge_amplitude}


def eigen_bisect(op: TridiagonalOperator, window, tol: float = 1e-10,
                 vectors: bool = False):
    """All eigenvalues in ``[lo, hi]`` to ``+-tol``.

    Eigenvalues come from LAPACK's Sturm bisection (``stebz``); the
    in-house Sturm counts cross-check the number found and supply the
    multiplicities.  With ``vectors`` the eigenvectors are returned too.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = map(float, window)
    if not lo < hi:
        raise ValueError("empty spectral window")
    scale = float(np.max(np.abs(op.diagonal)) + 2 * np.max(np.abs(op.off_diagonal), initial=0.0))
    probe = max(tol, 64 * np.finfo(float).eps * scale)
    c = sturm_count(op, [lo - probe, lo + probe, hi - probe, hi + probe])
    if c[0] != c[1] or c[2] != c[3]:
        edge = lo if c[0] != c[1] else hi
        raise WindowEdgeError(f"an eigenvalue lies within {probe:g} of the window edge {edge:g}; "
                              "widen or shift the window")
    expected = int(c[2] - c[1])
    if expected == 0:
        res = SpectrumResult(np.empty(0), (lo, hi), tol, [], 0.0)
        return (res, np.empty((op.size, 0))) if vectors else res
    w, v = eigh_tridiagonal(op.diagonal, op.off_diagonal, select="v", select_range=(lo, hi),
                            lapack_driver="stebz", tol=tol / 4)
    if w.size != expected:
        raise RuntimeError(f"Sturm count {expected} disagrees with {w.size} eigenvalues found")
    # cluster eigenvalues closer than the probe margin (tol, or the rounding
    # level of the pivots) and count each cluster by Sturm
    groups, mult = [], []
    start = 0
    for i in range(1, w.size + 1):
        if i == w.size or w[i] - w[i - 1] > probe:
            cl = w[start:i]
            m = sturm_count(op, [cl[-1] + probe])[0] - sturm_count(op, [cl[0] - probe])[0]
            groups.append(cl.mean())
            mult.append(int(m))
            start = i
    vv = np.abs(v)
    edge = float(np.max(np.maximum(vv[0], vv[-1]) / vv.max(axis=0)))
    res = SpectrumResult(np.array(groups), (lo, hi), tol, mult, edge)
    return (res, v) if vectors else res


# --------------------------------------------------------------- invariance

@dataclass
class InvarianceReport:
    times: list
    spectra: list
    max_pair_dev: float
    multiplicities_agree: bool
    unpaired: list
    tol: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(not self.unpaired and self.multiplicities_agree
                    and self.max_pair_dev <= self.tol)

    def as_dict(self):
        d = {"times": [float(t) for t in self.times],
             "eigenvalues": [[float(v) for v in s.eigenvalues] for s in self.spectra],
             "max_pair_dev": float(self.max_pair_dev),
             "multiplicities": [list(s.multiplicities) for s in self.spectra],
             "multiplicities_agree": self.multiplicities_agree,
             "unpaired": self.unpaired, "tol": self.tol, "pass": self.passed}
        d.update(self.extra)
        return d


def match_spectra(spectra: Sequence[SpectrumResult], tol: float):
    """Greedy nearest-neighbour pairing of each spectrum against the first.

    Pairs farther apart than ``10 tol`` are rejected and listed as unpaired.
    Returns ``(max_dev, multiplicities_agree, unpaired)``.
    """
    ref = spectra[0]
    max_dev, agree, unpaired = 0.0, True, []
    for j, s in enumerate(spectra[1:], start=1):
        if len(s.eigenvalues) != len(ref.eigenvalues):
            agree = False
        cand = [(abs(a - b), i, k) for i, a in enumerate(ref.eigenvalues)
                for k, b in enumerate(s.eigenvalues)]
        used_i, used_k = set(), set()
        for dev, i, k in sorted(cand):
            if i in used_i or k in used_k:
                continue
            if dev > 10 * tol:
                continue
            used_i.add(i)
            used_k.add(k)
            max_dev = max(max_dev, dev)
            if ref.multiplicities[i] != s.multiplicities[k]:
                agree = False
        for i in set(range(len(ref.eigenvalues))) - used_i:
            unpaired.append({"time_index": 0, "against": j, "eigenvalue": float(ref.eigenvalues[i])})
        for k in set(range(len(s.eigenvalues))) - used_k:
            unpaired.append({"time_index": j, "eigenvalue": float(s.eigenvalues[k])})
    return max_dev, agree, unpaired


def _slices_at(q, times, x, factor: int = 1) -> list:
    """Slices of ``q`` at the requested times, optionally ``factor`` times finer.

    ``q`` is a :class:`SampledField` (times must be grid levels; refinement
    is trigonometric and needs power-of-two sizes), a KdV solution object or
    a callable ``q(t, x)`` (refinement re-samples it).
    """
    out = []
    if isinstance(q, SampledField):
        for t in times:
            i = int(round((t - q.grid.t0) / q.grid.dt)) if q.grid.dt > 0 else 0
            if not 0 <= i < q.grid.nt or abs(q.grid.t[i] - t) > 1e-9:
                raise ValueError(f"time {t} is not a level of the sampled field")
            s = q.at(i)
            out.append(s if factor == 1 else spectral_upsample(s, factor))
        return out
    fn = q.q if hasattr(q, "q") else q
    if x is None:
        raise ValueError("an x-axis is needed for closed-form input")
    x = np.asarray(x, float)
    if factor != 1:
        x = np.linspace(x[0], x[-1], factor * (x.size - 1) + 1)
    return [Slice(x, np.broadcast_to(fn(t, x), x.shape)) for t in times]


def _richardson(coarse: SpectrumResult, fine: SpectrumResult) -> SpectrumResult:
    """Second-order extrapolation ``(4 fine - coarse) / 3`` eigenvalue by eigenvalue."""
    if len(coarse.eigenvalues) != len(fine.eigenvalues):
        raise InvarianceViolation("eigenvalue counts change under refinement; "
                                  "the grid is too coarse for this window")
    ev = (4 * fine.eigenvalues - coarse.eigenvalues) / 3
    return SpectrumResult(ev, fine.window, fine.tol, fine.multiplicities,
                          max(coarse.edge_amplitude, fine.edge_amplitude))


def spectrum_invariance(q, times, window, x=None, tol: float = 1e-6,
                        bisect_tol: float = 1e-12, refine: int = 1,
                        richardson: bool = False, strict: bool = False) -> InvarianceReport:
    """Discrete spectra of ``L(t) = -d^2/dx^2 + q(t)`` at several times, paired.

    ``refine`` resamples each slice on a finer axis first.  With
    ``richardson`` the spectra at ``refine`` and ``2 refine`` are combined
    to cancel the leading ``h^2`` discretization error.
    """
    spectra = []
    coarse = _slices_at(q, times, x, refine)
    fine = _slices_at(q, times, x, 2 * refine) if richardson else [None] * len(coarse)
    for sc, sf in zip(coarse, fine):
        res = eigen_bisect(discretize_schrodinger(sc), window, bisect_tol)
        if sf is not None:
            res = _richardson(res, eigen_bisect(discretize_schrodinger(sf), window, bisect_tol))
        spectra.append(res)
    dev, agree, unpaired = match_spectra(spectra, tol)
    rep = InvarianceReport(list(times), spectra, dev, agree, unpaired, tol,
                           {"edge_amplitude": max(s.edge_amplitude for s in spectra),
                            "refine": refine, "richardson": richardson})
    if strict and not rep.passed:
        raise InvarianceViolation(f"spectra differ across times (max deviation {dev:.3g})", rep)
    return rep


# ----------------------------------------------------------- eigenfunctions

def bound_state(q: Slice, window=None, tol: float = 1e-12, iterations: int = 3):
    """Lowest eigenpair of ``L = -d^2/dx^2 + q`` in ``window``.

    The eigenvalue comes from bisection; the eigenvector from inverse
    iteration, re-smoothed by one weighted Jacobi sweep.  The vector is
    returned as a positive-leaning, unit-L2 slice with zero end values.
    """
    op = discretize_schrodinger(q)
    if window is None:
        window = (float(q.values.min()) - 1.0, 0.0)
    spec = eigen_bisect(op, window, tol)
    if spec.eigenvalues.size == 0:
        raise ValueError(f"no eigenvalue of L in {window}")
    lam = float(spec.eigenvalues[0])
    shift = lam - 1e-9 * max(1.0, abs(lam))
    n = op.size
    ab = np.zeros((3, n))
    ab[0, 1:] = op.off_diagonal
    ab[1] = op.diagonal - shift
    ab[2, :-1] = op.off_diagonal
    v = np.exp(-((op.x - op.x[np.argmin(q.values[1:-1])]) ** 2))
    for _ in range(iterations):
        v = solve_banded((1, 1), ab, v)
        v /= np.linalg.norm(v)
    # one weighted Jacobi sweep on (L - lam) v = 0
    res = op.symmetric_apply(v) - lam * v
    v = v - (2.0 / 3.0) * res / (op.diagonal - lam)
    full = np.zeros(q.x.size)
    full[1:-1] = v
    if full.sum() < 0:
        full = -full
    full /= math.sqrt(q.h * np.sum(full**2))
    return lam, Slice(q.x, full)


def scattering_state(q: Callable, lam: float, x, rtol: float = 1e-12) -> Slice:
    """Bounded solution of ``-psi'' + q psi = lam psi`` (``lam > 0``) by shooting.

    Starts from ``cos(k x)`` at the left end (where ``q`` is assumed to have
    decayed) and integrates rightwards with an adaptive Runge-Kutta method.
    """
    if lam <= 0:
        raise ValueError("scattering states need lam > 0")
    x = np.asarray(x, float)
    k = math.sqrt(lam)
    x0 = x[0]

    def rhs(s, y):
        return [y[1], (q(s) - lam) * y[0]]

    sol = solve_ivp(rhs, (x0, x[-1]), [math.cos(k * x0), -k * math.sin(k * x0)],
                    method="DOP853", t_eval=x, rtol=rtol, atol=rtol)
    if not sol.success:
        raise RuntimeError(f"shooting failed: {sol.message}")
    return Slice(x, sol.y[0])


def _l2(v, h) -> float:
    return math.sqrt(h * float(np.sum(v * v)))


def transport_eigenfunction(q, psi0, lam: float, grid: Grid, max_step: float = 1e-3,
                            substeps=None) -> dict:
    """Carry ``psi0`` by ``psi_t = (4 lam + 2 q) psi_x - q_x psi`` and report how
    well each level stays in the ``lam``-eigenspace of ``L(t)``.

    ``q`` is a closed-form KdV solution or a sampled field wide enough for
    the backward characteristics.
    """
    pair = CoefficientPair.q_lambda(q, lam)
    psi = solve_first_order(pair, psi0, grid, max_step=max_step, substeps=substeps)
    if isinstance(q, SampledField):
        qv = np.array([CubicSpline(q.grid.x, q.values[i])(grid.x) for i in
                       [int(round((t - q.grid.t0) / q.grid.dt)) for t in grid.t]])
    else:
        qv = SampledField.from_function(grid, q.q).values
    pxx = deriv_x(psi, 2).values
    res = -pxx + (qv - lam) * psi.values
    h = grid.h
    band = 3
    residuals, norms = [], []
    for i in range(grid.nt):
        p = psi.values[i, band:-band]
        residuals.append(_l2(res[i, band:-band], h) / _l2(p, h))
        norms.append(_l2(psi.values[i], h))
    norms = np.array(norms)
    return {"psi": psi, "eigen_residuals": np.array(residuals),
            "eigen_residual": float(max(residuals)),
            "norm_ratio": norms / norms[0],
            "norm_ratio_max": float(norms.max() / norms[0]),
            "norm_ratio_min": float(norms.min() / norms[0])}


# ---------------------------------------------------------------- impedance

def _rho_window(log_rho: np.ndarray, base: int, rho2_range=RHO2_RANGE) -> tuple:
    """Largest run of nodes around ``base`` with ``rho^2`` inside the range."""
    lo, hi = (math.log(v) / 2.0 for v in rho2_range)
    ok = (log_rho >= lo) & (log_rho <= hi)
    if not ok[base]:
        raise ValueError("density out of range at the base point")
    i0 = base
    while i0 > 0 and ok[i0 - 1]:
        i0 -= 1
    i1 = base
    while i1 < ok.size - 1 and ok[i1 + 1]:
        i1 += 1
    return i0, i1


def impedance_operator(r: Slice, rho2_range=RHO2_RANGE):
    """Symmetrized impedance operator for ``T u = -u'' - 2 r u'``.

    ``log rho = int_0^x r``.  The operator lives on the window where
    ``rho^2`` stays inside ``rho2_range``; midpoint densities are geometric
    means, so the symmetric form has off-diagonal ``-1/h^2``.  Returns the
    operator and the window slice of ``r.x``.
    """
    h = r.h
    P = cumulative_integral(r.values, h, r.zero_index)
    i0, i1 = _rho_window(P, r.zero_index, rho2_range)
    if i1 - i0 < 8:
        raise ValueError("impedance window too small")
    Pw = P[i0:i1 + 1]
    Pi = Pw[1:-1]
    diag = (np.exp(Pw[2:] - Pi) + np.exp(Pw[:-2] - Pi)) / h**2
    off = np.full(Pi.size - 1, -1.0 / h**2)
    op = TridiagonalOperator(diag, off, h, r.x[i0 + 1:i1].copy(), np.exp(2 * Pi), Pi.copy())
    return op, slice(i0, i1 + 1)


def _battery(x: np.ndarray, n: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    span = x[-1] - x[0]
    mid = 0.5 * (x[0] + x[-1])
    out = []
    for _ in range(n):
        c = mid + rng.uniform(-0.25, 0.25) * span
        w = rng.uniform(0.5, 2.0)
        k = rng.uniform(0.0, 3.0)
        ph = rng.uniform(0.0, 2 * np.pi)
        out.append(np.exp(-((x - c) / w) ** 2 / 2) * np.cos(k * x + ph))
    return out


def impedance_conjugation(r: Slice, n_tests: int = 20, seed: int = 0, window=(-2.0, 0.5),
                          tol: float = 1e-12, rho2_range=RHO2_RANGE) -> dict:
    """Check ``rho T_r u = L_q (rho u)`` with ``q = r_x + r^2`` and compare the
    discrete spectra of ``T_r`` and ``L_q`` on a common window."""
    op_t, win = impedance_operator(r, rho2_range)
    rw = Slice(r.x[win], r.values[win])
    rx = deriv_x(r).values[win]
    q = Slice(rw.x, rx + rw.values**2)
    op_l = discretize_schrodinger(q)
    rho = op_t.rho
    worst = 0.0
    for u in _battery(op_t.x, n_tests, seed):
        lhs = rho * op_t.apply(u)
        rhs = op_l.apply(rho * u)
        worst = max(worst, _l2(lhs - rhs, r.h) / _l2(rho * u, r.h))
    st = eigen_bisect(op_t, window, tol)
    sl = eigen_bisect(discretize_schrodinger(q), window, tol)
    dev, agree, unpaired = match_spectra([st, sl], 1.0)
    # Dirichlet truncation: same spectrum on a window trimmed by 5% per side
    cut = max(1, int(0.05 * op_t.size))
    trimmed = TridiagonalOperator(op_t.diagonal[cut:-cut], op_t.off_diagonal[cut:-cut], op_t.h,
                                  op_t.x[cut:-cut])
    try:
        s2 = eigen_bisect(trimmed, window, tol)
        tdev, _, _ = match_spectra([st, s2], 1.0)
        if len(s2.eigenvalues) != len(st.eigenvalues):
            tdev = float("inf")
    except WindowEdgeError:
        tdev = float("nan")
    return {"residual": worst, "n_tests": n_tests, "seed": seed,
            "spectrum_T": [float(v) for v in st.eigenvalues],
            "spectrum_L": [float(v) for v in sl.eigenvalues],
            "spectral_dev": dev if agree and not unpaired else float("inf"),
            "window_x": [float(op_t.x[0] - r.h), float(op_t.x[-1] + r.h)],
            "truncation_estimate": tdev, "h": r.h}


def impedance_invariance(r, times, window, x=None, tol: float = 1e-4,
                         bisect_tol: float = 1e-12, rho2_range=RHO2_RANGE) -> InvarianceReport:
    """Spectra of ``T(t)`` built from ``r(t, .)`` at several times, paired."""
    if isinstance(r, SampledField):
        slices = _slices_at(r, times, None)
    else:
        fn = r.r if hasattr(r, "r") else r
        slices = [Slice(np.asarray(x, float), fn(t, np.asarray(x, float))) for t in times]
    spectra, wins = [], []
    for s in slices:
        op, win = impedance_operator(s, rho2_range)
        spectra.append(eigen_bisect(op, window, bisect_tol))
        wins.append([float(s.x[win][0]), float(s.x[win][-1])])
    dev, agree, unpaired = match_spectra(spectra, tol)
    return InvarianceReport(list(times), spectra, dev, agree, unpaired, tol,
                            {"windows_x": wins})


# ---------------------------------------------------------------------- Lax

def _padded_box(psi0: Slice, pad_factor: int = 2):
    n = psi0.x.size
    m = 1
    while m < pad_factor * n:
        m *= 2
    left = (m - n) // 2
    u = np.zeros(m)
    u[left:left + n] = psi0.values
    return u, left


def lax_evolution_free(psi0: Slice, t: float):
    """Free evolution ``psi_t = -4 psi_xxx`` by the multiplier ``exp(4 i k^3 t)``.

    The data are zero-padded to a power-of-two periodic box at least twice
    the window.  Returns the evolved slice on the input axis and a report
    with the L2 norms on the whole box.
    """
    edge = max(abs(psi0.values[0]), abs(psi0.values[-1]))
    if edge >= FREE_EDGE_DECAY:
        raise ValueError(f"psi0 does not decay at the window edges (|psi0| = {edge:.3g})")
    u, left = _padded_box(psi0)
    k = 2 * np.pi * fftfreq(u.size, psi0.h)
    out = ifft(np.exp(4j * k**3 * t) * fft(u))
    n0 = _l2(u, psi0.h)
    n1 = math.sqrt(psi0.h * float(np.sum(np.abs(out) ** 2)))
    vals = out.real[left:left + psi0.x.size]
    report = {"norm_in": n0, "norm_out": n1, "unitarity_dev": abs(n1 / n0 - 1.0),
              "imag_max": float(np.abs(out.imag).max()),
              "window_fraction": _l2(vals, psi0.h) / n0}
    return Slice(psi0.x, vals), report


def narrowband_comparison(k0: float, bandwidth: float, t: float, x=None) -> dict:
    """Free A-evolution of ``exp(-(b x)^2/2) cos(k0 x)`` against the
    ``Q_{k0^2}`` transport ``psi0(x + 4 k0^2 t)``; relative L2 difference."""
    if x is None:
        half = 12.0 / bandwidth
        n = 1
        while n < 8 * half * max(k0, 1.0):
            n *= 2
        x = np.linspace(-half, half, n)
    x = np.asarray(x, float)

    def packet(s):
        return np.exp(-(bandwidth * s) ** 2 / 2) * np.cos(k0 * s)

    psi0 = Slice(x, packet(x))
    psi, rep = lax_evolution_free(psi0, t)
    ref = packet(x + 4 * k0**2 * t)
    diff = _l2(psi.values - ref, psi0.h) / _l2(psi0.values, psi0.h)
    return {"k0": k0, "bandwidth": bandwidth, "t": t, "relative_l2_diff": diff,
            "unitarity_dev": rep["unitarity_dev"]}


def _q_callables(q):
    """``(q(t, x), q_x(t, x))`` for closed forms, callables or sampled fields."""
    if hasattr(q, "q_and_qx"):
        return q.q, q.q_x
    if isinstance(q, SampledField):
        g = q.grid
        if g.nt < 4:
            raise ValueError("sampled q needs at least 4 time levels")
        sq = CubicSpline(g.t, q.values, axis=0)
        sqx = CubicSpline(g.t, deriv_x(q).values, axis=0)
        return (lambda t, x: sq(t)), (lambda t, x: sqx(t))
    if callable(q):
        return q, None
    raise TypeError("unsupported q")


def lax_conjugation_check(q, psi0: Slice, t: float, steps: int = 200) -> dict:
    """Evolve ``psi0`` and ``L(0) psi0`` by ``psi_t = A(t) psi``,
    ``A = -4 d^3 + 6 q d + 3 q_x``, and measure
    ``|Psi(t) L(0) psi0 - L(t) Psi(t) psi0| / |psi0|``.

    Pseudo-spectral on the periodic box given by the (power-of-two) axis of
    ``psi0``, integrating-factor RK4 in time.  A sampled ``q`` must live on
    the same axis.
    """
    n = psi0.x.size
    if not is_power_of_two(n):
        raise ValueError("the periodic box needs a power-of-two number of nodes")
    if steps < 1:
        raise ValueError("need at least one step")
    x, h = psi0.x, psi0.h
    k = 2 * np.pi * fftfreq(n, h)
    ik = 1j * k
    qf, qxf = _q_callables(q)

    def d(v, order=1):
        return ifft(ik**order * fft(v)).real

    def qq(s):
        qv = np.broadcast_to(np.asarray(qf(s, x), float), x.shape)
        qx = d(qv) if qxf is None else np.broadcast_to(np.asarray(qxf(s, x), float), x.shape)
        return qv, qx

    def L(s, v):
        qv, _ = qq(s)
        return -d(v, 2) + qv * v

    dt = t / steps
    e_half = np.exp(4j * k**3 * dt / 2)
    e_full = e_half**2

    def nonlinear(s, vh):
        v = ifft(vh).real
        qv, qx = qq(s)
        return dt * fft(6 * qv * ifft(ik * vh).real + 3 * qx * v)

    def evolve(v):
        vh = fft(v)
        s = 0.0
        for _ in range(steps):
            a = nonlinear(s, vh)
            b = nonlinear(s + dt / 2, e_half * (vh + a / 2))
            c = nonlinear(s + dt / 2, e_half * vh + b / 2)
            dd = nonlinear(s + dt, e_full * vh + e_half * c)
            vh = e_full * vh + (e_full * a + 2 * e_half * (b + c) + dd) / 6
            s += dt
        return ifft(vh).real

    p0 = psi0.values
    lhs = evolve(L(0.0, p0))
    psi_t = evolve(p0)
    rhs = L(t, psi_t)
    n0 = _l2(p0, h)
    return {"residual": _l2(lhs - rhs, h) / n0,
            "norm_dev": abs(_l2(psi_t, h) / n0 - 1.0),
            "t": t, "steps": steps, "nx": n}
