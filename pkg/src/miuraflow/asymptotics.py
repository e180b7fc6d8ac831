"""Asymptotic symbols ``sum_k a_k(t) (s x)^{e_k}`` (side ``s = +1`` or ``-1``)
with exact rational exponents, and the formal evolution of ``p = log psi``.

Exponent sets are finite: every set carries a floor below which terms are
dropped.  Coefficients are either exact constants (``Fraction``), floats,
or arrays of samples on a time grid shared by the whole symbol.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "AsymptoticsError",
    "NoFormalSolution",
    "InternalConsistencyError",
    "ExponentSet",
    "Symbol",
    "StarSymbol",
    "EvolutionSystem",
    "GateResult",
    "DEFAULT_FLOOR",
    "exponent",
    "closure_delta",
    "build_barB",
    "miura_symbol",
    "integrate_symbol",
    "derivative",
    "assemble_evolution",
    "formal_evolution",
    "kdv_symbol_flow",
    "beta_gate",
    "symbol_eval",
    "symbol_to_json",
    "symbol_from_json",
]

DEFAULT_FLOOR = Fraction(-6)


class AsymptoticsError(ValueError):
    pass


class NoFormalSolution(AsymptoticsError):
    """A right-hand-side exponent exceeds the top of the lattice."""

    def __init__(self, msg, witness: Fraction, bound: Fraction):
        super().__init__(msg)
        self.witness = witness
        self.bound = bound


class InternalConsistencyError(AssertionError):
    pass


def exponent(v) -> Fraction:
    """Exact exponent from an int, a Fraction, a ``"p/q"`` string or a
    ``{"num", "den"}`` mapping.  Floats are refused."""
    if isinstance(v, dict):
        return Fraction(int(v["num"]), int(v["den"]))
    if isinstance(v, (Rational, str)):
        return Fraction(v)
    raise TypeError(f"exponents must be exact rationals, got {v!r}")


def _frac_json(f: Fraction) -> dict:
    return {"num": f.numerator, "den": f.denominator}


# ----------------------------------------------------------------- sets

@dataclass(frozen=True)
class ExponentSet:
    """Finite strictly decreasing set of rationals, all ``>= floor``."""

    elements: tuple
    floor: Fraction = DEFAULT_FLOOR

    def __post_init__(self):
        fl = exponent(self.floor)
        els = sorted({exponent(e) for e in self.elements if exponent(e) >= fl}, reverse=True)
        object.__setattr__(self, "floor", fl)
        object.__setattr__(self, "elements", tuple(els))

    @property
    def max(self) -> Fraction:
        if not self.elements:
            raise AsymptoticsError("empty exponent set")
        return self.elements[0]

    def __contains__(self, e) -> bool:
        return exponent(e) in set(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __len__(self):
        return len(self.elements)

    def with_floor(self, floor) -> "ExponentSet":
        return ExponentSet(self.elements, floor)

    def __str__(self):
        return "{" + ", ".join(str(e) for e in self.elements) + f"}} (floor {self.floor})"


def closure_delta(delta: ExponentSet) -> ExponentSet:
    """Smallest superset, truncated at the floor, closed under
    ``(d1, d2) -> d1 + d2 - 1`` and ``d -> d - 1``.

    Both maps strictly lower exponents when ``max < 1``, so the truncated
    closure is reached by iterating to a fixed point.
    """
    if not delta.elements:
        return delta
    if delta.max >= 1:
        raise AsymptoticsError(f"closure needs max < 1, got {delta.max}")
    fl = delta.floor
    current = set(delta.elements)
    frontier = set(current)
    while frontier:
        new = set()
        for a in frontier:
            if a - 1 >= fl:
                new.add(a - 1)
            for b in current:
                s = a + b - 1
                if s >= fl:
                    new.add(s)
        frontier = new - current
        current |= frontier
    out = ExponentSet(tuple(current), fl)
    if out.max != delta.max:
        raise InternalConsistencyError("closure changed the maximum")
    return out


def build_barB(B: ExponentSet, dbar: ExponentSet, floor=None) -> ExponentSet:
    """Lattice ``{b + d} U dbar U {b + 1}`` (``b`` in ``B``, ``d`` in ``dbar``),
    truncated at ``floor`` (default: the floor of ``B``).

    ``dbar`` is re-closed internally down to ``floor - max(0, max B)`` so
    that sums ``b + d`` above the floor are never lost to truncation.
    Asserts: the maximum is ``max B + 1``; ``d + b' - 1`` lies in the result
    for ``d`` in ``dbar`` and ``b'`` in the result (above the floor); and
    ``{d - 1}`` is contained in the result.
    """
    fl = exponent(floor) if floor is not None else B.floor
    beta = B.max
    if beta >= Fraction(1, 2):
        raise AsymptoticsError(f"lattice needs max B < 1/2, got {beta}")
    if dbar.elements and dbar.max >= 1:
        raise AsymptoticsError("dbar must have max < 1")
    if dbar.elements and dbar.max > beta + 1:
        raise AsymptoticsError(f"max dbar = {dbar.max} exceeds max B + 1 = {beta + 1}")
    deep = closure_delta(dbar.with_floor(min(fl, dbar.floor) - max(Fraction(0), beta)))
    els = set(deep.elements) | {b + 1 for b in B}
    els |= {b + d for b in B for d in deep}
    out = ExponentSet(tuple(els), fl)
    dset = [d for d in closure_delta(dbar.with_floor(fl))]
    members = set(out.elements)
    if out.max != beta + 1:
        raise InternalConsistencyError(f"max of lattice is {out.max}, expected {beta + 1}")
    for d in dset:
        if d - 1 >= fl and d - 1 not in members:
            raise InternalConsistencyError(f"{d} - 1 missing from the lattice")
        for b in out:
            s = d + b - 1
            if s >= fl and s not in members:
                raise InternalConsistencyError(f"{d} + {b} - 1 missing from the lattice")
    return out


# -------------------------------------------------------------- symbols

def _is_exact(c) -> bool:
    return isinstance(c, Rational)


def _scale(c, f: Fraction):
    """``c * f`` keeping exact constants exact."""
    if _is_exact(c):
        return Fraction(c) * f
    return c * float(f)


def _mul(a, b):
    if _is_exact(a) and _is_exact(b):
        return Fraction(a) * Fraction(b)
    a = float(a) if _is_exact(a) else a
    b = float(b) if _is_exact(b) else b
    return a * b


def _add(a, b):
    if _is_exact(a) and _is_exact(b):
        return Fraction(a) + Fraction(b)
    a = float(a) if _is_exact(a) else a
    b = float(b) if _is_exact(b) else b
    return a + b


def _is_zero(c) -> bool:
    if _is_exact(c):
        return c == 0
    return bool(np.all(np.asarray(c) == 0))


def _as_float_array(c, n: Optional[int]):
    v = np.asarray(float(c) if _is_exact(c) else c, dtype=float)
    if n is not None and v.ndim == 0:
        v = np.full(n, float(v))
    return v


@dataclass(frozen=True)
class Symbol:
    """Truncated expansion ``sum a_k (side x)^{e_k}`` with ``e_k`` decreasing.

    ``times`` holds the sample times of array coefficients; it is ``None``
    when every coefficient is constant.
    """

    side: int
    terms: tuple = ()
    floor: Fraction = DEFAULT_FLOOR
    times: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.side not in (1, -1):
            raise ValueError("side must be +1 or -1")
        fl = exponent(self.floor)
        merged: dict = {}
        for e, c in self.terms:
            e = exponent(e)
            if e < fl:
                continue
            merged[e] = _add(merged[e], c) if e in merged else c
        terms = tuple((e, merged[e]) for e in sorted(merged, reverse=True))
        object.__setattr__(self, "floor", fl)
        object.__setattr__(self, "terms", terms)
        if self.times is not None:
            t = np.asarray(self.times, float)
            for _, c in terms:
                if not _is_exact(c) and np.ndim(c) == 1 and np.shape(c)[0] != t.size:
                    raise ValueError("coefficient samples do not match the time grid")
            object.__setattr__(self, "times", t)

    @property
    def exponents(self) -> tuple:
        return tuple(e for e, _ in self.terms)

    @property
    def beta(self) -> Fraction:
        nz = [e for e, c in self.terms if not _is_zero(c)]
        if not nz:
            raise AsymptoticsError("zero symbol has no leading exponent")
        return nz[0]

    def coefficient(self, e):
        e = exponent(e)
        for ee, c in self.terms:
            if ee == e:
                return c
        return Fraction(0)

    def nonzero(self) -> "Symbol":
        return replace(self, terms=tuple((e, c) for e, c in self.terms if not _is_zero(c)))

    def exponent_set(self) -> ExponentSet:
        return ExponentSet(self.exponents, self.floor)


@dataclass(frozen=True)
class StarSymbol(Symbol):
    """Antiderivative-class expansion: ``sum a_k (side x)^{e_k}
    + log_coeff * log(side x) + const``.  ``floor`` bounds the exponents of
    the underlying derivative, so terms here sit at ``>= floor + 1``."""

    log: object = Fraction(0)
    const: object = Fraction(0)

    def __post_init__(self):
        fl = exponent(self.floor)
        object.__setattr__(self, "floor", fl - 1)
        super().__post_init__()
        object.__setattr__(self, "floor", fl)


def _binary(r: Symbol, s: Symbol, fn):
    if r.side != s.side:
        raise ValueError("symbols live on different sides")
    return fn


def miura_symbol(r: Symbol) -> Symbol:
    """Symbol of ``r_x + r^2``: term-wise derivative plus the Cauchy square."""
    if r.terms and not all(_is_zero(c) for _, c in r.terms):
        beta = r.beta
        if beta >= Fraction(1, 2):
            raise AsymptoticsError(f"Miura symbol needs leading exponent < 1/2, got {beta}")
    s = r.side
    out = []
    for e, c in r.terms:
        if e != 0:
            out.append((e - 1, _scale(c, s * e)))
    for e1, c1 in r.terms:
        for e2, c2 in r.terms:
            out.append((e1 + e2, _mul(c1, c2)))
    return Symbol(s, tuple(out), r.floor, r.times).nonzero()


def integrate_symbol(f: Symbol) -> StarSymbol:
    """Term-wise antiderivative; the ``(side x)^{-1}`` term becomes a log term.
    The constant slot is left at zero."""
    s = f.side
    terms = []
    log = Fraction(0)
    for e, c in f.terms:
        if e == -1:
            log = _scale(c, Fraction(s))
        else:
            terms.append((e + 1, _scale(c, Fraction(s) / (e + 1))))
    return StarSymbol(s, tuple(terms), f.floor, f.times, log=log, const=Fraction(0))


def derivative(p: StarSymbol) -> Symbol:
    """Term-wise derivative of a :class:`StarSymbol` (the constant drops)."""
    s = p.side
    terms = [(e - 1, _scale(c, s * e)) for e, c in p.terms if e != 0]
    if not _is_zero(p.log):
        terms.append((Fraction(-1), _scale(p.log, Fraction(s))))
    return Symbol(s, tuple(terms), p.floor, p.times)


# ------------------------------------------------------------ beta gate

@dataclass(frozen=True)
class GateResult:
    passed: bool
    beta: Fraction
    witness: Optional[Fraction] = None
    bound: Optional[Fraction] = None
    message: str = ""

    def as_dict(self):
        d = {"pass": self.passed, "beta": str(self.beta), "message": self.message}
        if self.witness is not None:
            d["witness"] = str(self.witness)
            d["bound"] = str(self.bound)
        return d


def beta_gate(r0: Symbol, o_class: bool = False) -> GateResult:
    """Admissibility of the leading exponent ``beta`` of ``r0``.

    Passes for ``beta < 1/2``, and for ``beta = 1/2`` when ``o_class`` is set.
    Otherwise the obstruction witness is returned: with ``delta = 2 beta``
    the term ``2 q p_x`` carries the exponent ``3 beta``, above the top
    exponent ``beta + 1`` available to ``p_t``.
    """
    beta = r0.beta
    half = Fraction(1, 2)
    if beta < half or (beta == half and o_class):
        return GateResult(True, beta, message=f"beta = {beta} admissible")
    w, b = 3 * beta, beta + 1
    if beta == half:
        msg = (f"beta = 1/2 is admissible only for the o-class (flag not set); "
               f"3*beta = {w} meets beta + 1 = {b}")
    else:
        msg = (f"no formal solution: leading exponent beta = {beta} gives the "
               f"right-hand-side exponent 3*beta = {w} > beta + 1 = {b}")
    return GateResult(False, beta, w, b, msg)


# ------------------------------------------------------ formal evolution

@dataclass
class EvolutionSystem:
    """Assembled triangular system for the lattice coefficients.

    Rows are the lattice exponents (descending) followed by the log row.
    ``linear`` entries ``(row, col, q_index, factor)`` stand for
    ``factor * c_q(t) * a_col``; ``forcing`` entries ``(row, q_index, factor,
    uses_log)`` for ``factor * c_q(t)`` (times ``a_log`` when ``uses_log``).
    """

    side: int
    lattice: ExponentSet
    q_exponents: tuple
    linear: list
    forcing: list

    @property
    def n_rows(self) -> int:
        return len(self.lattice) + 1

    @property
    def log_row(self) -> int:
        return len(self.lattice)

    def row_sources(self, k: int) -> set:
        return {col for row, col, _, _ in self.linear if row == k}

    def is_strictly_lower_triangular(self) -> bool:
        return all(col < row for row, col, _, _ in self.linear)

    def row_is_empty(self, k: int) -> bool:
        return not any(r == k for r, *_ in self.linear) and not any(r == k for r, *_ in self.forcing)


def _closed_q(q: Symbol, floor: Fraction) -> tuple:
    dbar = closure_delta(ExponentSet(q.exponents, floor)) if q.terms else ExponentSet((), floor)
    return dbar


def assemble_evolution(p0: StarSymbol, q: Symbol, floor=None) -> EvolutionSystem:
    """Exact exponent matching of ``2 q p_x - q_x`` against ``p_t``.

    Raises :class:`NoFormalSolution` when some right-hand-side exponent
    exceeds the top of the lattice.
    """
    if p0.side != q.side:
        raise ValueError("p0 and q live on different sides")
    s = p0.side
    fl = exponent(floor) if floor is not None else p0.floor
    p_exps = [e for e, c in p0.terms if not _is_zero(c)]
    has_log = not _is_zero(p0.log)
    B = ExponentSet(tuple(e - 1 for e in p_exps) + ((Fraction(-1),) if has_log else ()),
                    fl - 1)
    if not B.elements:
        B = ExponentSet((Fraction(-1),), fl - 1)
    beta = B.max
    top = beta + 1
    q_nz = [e for e, c in q.terms if not _is_zero(c)]
    # obstruction test on the raw products, before any closure
    for d in q_nz:
        for e in p_exps:
            if e != 0 and d + e - 1 > top:
                raise NoFormalSolution(
                    f"no formal solution: 2 q p_x produces exponent {d + e - 1} "
                    f"> top exponent {top}", d + e - 1, top)
        if d - 1 > top:
            raise NoFormalSolution(f"no formal solution: q_x produces exponent {d - 1} "
                                   f"> top exponent {top}", d - 1, top)
    if beta >= Fraction(1, 2):
        raise NoFormalSolution(f"no formal solution: beta = {beta} >= 1/2 "
                               f"(3*beta = {3 * beta} vs beta + 1 = {top})", 3 * beta, top)
    dbar = _closed_q(Symbol(s, tuple((e, 1) for e in q_nz), fl), fl)
    lattice = build_barB(B, dbar, fl)
    index = {e: k for k, e in enumerate(lattice)}
    q_exps = tuple(dbar.elements)
    linear, forcing = [], []
    log_row = len(lattice)
    for i, d in enumerate(q_exps):
        for col, e in enumerate(lattice):
            if e == 0:
                continue
            target = d + e - 1
            if target < fl:
                continue
            if target not in index:
                raise InternalConsistencyError(f"exponent {target} not in the lattice")
            linear.append((index[target], col, i, Fraction(2 * s) * e))
        target = d - 1
        if target >= fl:
            if target not in index:
                raise InternalConsistencyError(f"exponent {target} not in the lattice")
            forcing.append((index[target], i, Fraction(2 * s), True))
            if d != 0:
                forcing.append((index[target], i, -Fraction(s) * d, False))
    sysm = EvolutionSystem(s, lattice, q_exps, linear, forcing)
    if not sysm.is_strictly_lower_triangular():
        raise InternalConsistencyError("assembled system is not strictly lower triangular")
    if not sysm.row_is_empty(0) or not sysm.row_is_empty(log_row):
        raise InternalConsistencyError("top row or log row has a right-hand side")
    return sysm


def _coeff_series(q: Symbol, e: Fraction, times: np.ndarray):
    """Callable ``t -> c_e(t)`` for the coefficient of ``q`` at exponent ``e``."""
    c = q.coefficient(e)
    if _is_exact(c) or np.ndim(c) == 0:
        v = float(c)
        return lambda t: np.full(np.shape(t), v)
    if q.times is None:
        raise ValueError("sampled coefficients need a time grid")
    if q.times.size < 2:
        v = float(np.asarray(c)[0])
        return lambda t: np.full(np.shape(t), v)
    spline = CubicSpline(q.times, np.asarray(c, float))
    return spline


def formal_evolution(p0: StarSymbol, q: Symbol, t_grid, floor=None,
                     return_system: bool = False):
    """Evolve the coefficients of ``p`` under ``p_t = 2 q p_x - q_x``.

    The lattice rows form a strictly lower-triangular linear system
    ``a' = M(t) a + F(t)``, integrated by classical RK4 on ``t_grid``.
    Coefficients of ``q`` sampled on another grid are interpolated by cubic
    splines.  Returns a :class:`StarSymbol` with sampled coefficients (and
    the assembled system when ``return_system`` is set).
    """
    t_grid = np.asarray(t_grid, float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing")
    sysm = assemble_evolution(p0, q, floor)
    lattice = sysm.lattice
    n = sysm.n_rows
    a0 = np.zeros(n)
    for k, e in enumerate(lattice):
        a0[k] = float(p0.coefficient(e))
    a0[sysm.log_row] = float(p0.log)
    if not _is_zero(p0.const) and 0 in lattice:
        a0[list(lattice).index(Fraction(0))] += float(p0.const)
    series = [_coeff_series(q, d, t_grid) for d in sysm.q_exponents]

    lin_rows = np.array([r for r, *_ in sysm.linear], dtype=int)
    lin_cols = np.array([c for _, c, _, _ in sysm.linear], dtype=int)
    lin_q = np.array([i for _, _, i, _ in sysm.linear], dtype=int)
    lin_f = np.array([float(f) for *_, f in sysm.linear])
    f_rows = np.array([r for r, *_ in sysm.forcing], dtype=int)
    f_q = np.array([i for _, i, _, _ in sysm.forcing], dtype=int)
    f_f = np.array([float(f) for _, _, f, _ in sysm.forcing])
    f_log = np.array([bool(u) for *_, u in sysm.forcing], dtype=bool)

    def rhs(t, a):
        c = np.array([sr(t) for sr in series], dtype=float).reshape(-1)
        out = np.zeros(n)
        if lin_rows.size:
            np.add.at(out, lin_rows, lin_f * c[lin_q] * a[lin_cols])
        if f_rows.size:
            w = f_f * c[f_q] * np.where(f_log, a[sysm.log_row], 1.0)
            np.add.at(out, f_rows, w)
        return out

    traj = np.empty((t_grid.size, n))
    traj[0] = a0
    a = a0.copy()
    for i in range(1, t_grid.size):
        t, h = t_grid[i - 1], t_grid[i] - t_grid[i - 1]
        k1 = rhs(t, a)
        k2 = rhs(t + h / 2, a + h / 2 * k1)
        k3 = rhs(t + h / 2, a + h / 2 * k2)
        k4 = rhs(t + h, a + h * k3)
        a = a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        traj[i] = a
    terms = []
    const = Fraction(0)
    for k, e in enumerate(lattice):
        if e == 0:
            const = traj[:, k].copy()
        else:
            terms.append((e, traj[:, k].copy()))
    out = StarSymbol(p0.side, tuple(terms), p0.floor, t_grid,
                     log=traj[:, sysm.log_row].copy(), const=const)
    return (out, sysm) if return_system else out


def kdv_symbol_flow(q0: Symbol, t_grid, floor=None) -> Symbol:
    """Formal KdV flow ``q_t = 6 q q_x - q_xxx`` of a symbol with top exponent < 1.

    On the closed exponent set the system is strictly lower triangular
    (quadratic in higher rows), so it is integrated row-coupled by RK4.
    """
    s = q0.side
    fl = exponent(floor) if floor is not None else q0.floor
    t_grid = np.asarray(t_grid, float)
    nz = [e for e, c in q0.terms if not _is_zero(c)]
    if not nz:
        return Symbol(s, (), fl, t_grid)
    dbar = closure_delta(ExponentSet(tuple(nz), fl))
    exps = list(dbar)
    index = {e: k for k, e in enumerate(exps)}
    quad, lin = [], []
    for i, di in enumerate(exps):
        for j, dj in enumerate(exps):
            if dj == 0:
                continue
            tgt = di + dj - 1
            if tgt >= fl:
                quad.append((index[tgt], i, j, 6.0 * s * float(dj)))
        if di not in (0, 1, 2):
            tgt = di - 3
            if tgt >= fl:
                lin.append((index[tgt], i, -float(s * di * (di - 1) * (di - 2))))
    for row, i, j, _ in quad:
        if not (i < row and j < row):
            raise InternalConsistencyError("KdV symbol system is not triangular")
    c0 = np.array([float(q0.coefficient(e)) for e in exps])
    qr = np.array([r for r, *_ in quad], dtype=int)
    qi = np.array([i for _, i, _, _ in quad], dtype=int)
    qj = np.array([j for _, _, j, _ in quad], dtype=int)
    qf = np.array([f for *_, f in quad])
    lr = np.array([r for r, *_ in lin], dtype=int)
    li = np.array([i for _, i, _ in lin], dtype=int)
    lf = np.array([f for *_, f in lin])

    def rhs(c):
        out = np.zeros_like(c)
        if qr.size:
            np.add.at(out, qr, qf * c[qi] * c[qj])
        if lr.size:
            np.add.at(out, lr, lf * c[li])
        return out

    traj = np.empty((t_grid.size, len(exps)))
    traj[0] = c0
    c = c0.copy()
    for i in range(1, t_grid.size):
        h = t_grid[i] - t_grid[i - 1]
        k1 = rhs(c)
        k2 = rhs(c + h / 2 * k1)
        k3 = rhs(c + h / 2 * k2)
        k4 = rhs(c + h * k3)
        c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        traj[i] = c
    return Symbol(s, tuple((e, traj[:, k].copy()) for k, e in enumerate(exps)), fl, t_grid)


# ----------------------------------------------------------- evaluation

def _coeff_at(sym: Symbol, c, t: float) -> float:
    if _is_exact(c) or np.ndim(c) == 0:
        return float(c)
    if sym.times is None:
        raise ValueError("sampled coefficient without a time grid")
    return float(np.interp(t, sym.times, c)) if sym.times.size < 4 else \
        float(CubicSpline(sym.times, c)(t))


def symbol_eval(sym: Symbol, t: float, x: float, n_terms: Optional[int] = None) -> float:
    """Partial sum of the first ``n_terms`` power terms (all by default),
    plus the log and constant terms of a :class:`StarSymbol`."""
    if abs(x) < 1:
        raise ValueError("symbols are evaluated only for |x| >= 1")
    if np.sign(x) != sym.side:
        raise ValueError(f"x = {x} lies on the wrong side for this symbol")
    y = sym.side * x
    terms = sym.terms if n_terms is None else sym.terms[:n_terms]
    total = sum(_coeff_at(sym, c, t) * y ** float(e) for e, c in terms)
    if isinstance(sym, StarSymbol):
        total += _coeff_at(sym, sym.log, t) * math.log(y) + _coeff_at(sym, sym.const, t)
    return float(total)


# ----------------------------------------------------------------- JSON

def _coeff_json(c):
    if _is_exact(c):
        return [float(c)]
    return [float(v) for v in np.atleast_1d(np.asarray(c, float))]


def _scalar_json(c):
    if _is_exact(c) or np.ndim(c) == 0:
        return float(c)
    return [float(v) for v in np.asarray(c, float)]


def symbol_to_json(sym: Symbol) -> dict:
    d = {
        "side": "+" if sym.side > 0 else "-",
        "floor": _frac_json(sym.floor),
        "terms": [{"exp": _frac_json(e), "coeff": _coeff_json(c)} for e, c in sym.terms],
        "log": 0.0,
        "const": 0.0,
    }
    if isinstance(sym, StarSymbol):
        d["star"] = True
        d["log"] = _scalar_json(sym.log)
        d["const"] = _scalar_json(sym.const)
    if sym.times is not None:
        d["times"] = [float(t) for t in sym.times]
    return d


def _coeff_from_json(v):
    if isinstance(v, dict):
        return exponent(v)
    if isinstance(v, (int, float)):
        return float(v)
    arr = np.asarray(v, float)
    return float(arr[0]) if arr.size == 1 else arr


def symbol_from_json(d) -> Symbol:
    """Parse the JSON layout produced by :func:`symbol_to_json`.

    A coefficient given as a one-element list (or a number) is constant in t.
    """
    if isinstance(d, str):
        d = json.loads(d)
    side = {"+": 1, "-": -1, 1: 1, -1: -1}.get(d.get("side", "+"))
    if side is None:
        raise ValueError(f"bad side {d.get('side')!r}")
    floor = exponent(d.get("floor", {"num": -6, "den": 1}))
    terms = tuple((exponent(t["exp"]), _coeff_from_json(t["coeff"])) for t in d.get("terms", []))
    times = d.get("times")
    times = None if times is None else np.asarray(times, float)
    if d.get("star"):
        return StarSymbol(side, terms, floor, times, log=_coeff_from_json(d.get("log", 0.0)),
                          const=_coeff_from_json(d.get("const", 0.0)))
    if d.get("log", 0.0) not in (0, 0.0) or d.get("const", 0.0) not in (0, 0.0):
        raise ValueError("log/const entries are only allowed for star symbols")
    return Symbol(side, terms, floor, times)
