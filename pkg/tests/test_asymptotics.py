from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.integrate import quad

from miuraflow import asymptotics as asy
from miuraflow.asymptotics import (AsymptoticsError, ExponentSet, NoFormalSolution, StarSymbol,
                                   Symbol, assemble_evolution, beta_gate, build_barB,
                                   closure_delta, derivative, exponent, formal_evolution,
                                   integrate_symbol, kdv_symbol_flow, miura_symbol, symbol_eval,
                                   symbol_from_json, symbol_to_json)


def naive_closure(delta, floor):
    """Apply both maps to every element and pair until nothing changes."""
    s = {F(d) for d in delta}
    while True:
        new = set(s)
        for a in s:
            new.add(a - 1)
            for b in s:
                new.add(a + b - 1)
        new = {e for e in new if e >= floor}
        if new == s:
            return sorted(s, reverse=True)
        s = new


rationals = st.builds(F, st.integers(-12, 5), st.integers(1, 6)).filter(lambda f: -3 <= f < 1)


class TestExponents:
    def test_exact_only(self):
        assert exponent("2/6") == F(1, 3)
        assert exponent({"num": -3, "den": 9}) == F(-1, 3)
        with pytest.raises(TypeError):
            exponent(0.5)

    def test_set_sorted_and_floored(self):
        s = ExponentSet((F(-1), F(1, 2), F(-10), F(1, 2)), -6)
        assert s.elements == (F(1, 2), F(-1))
        assert s.max == F(1, 2) and F(-1) in s


class TestClosure:
    def test_zero(self):
        assert list(closure_delta(ExponentSet((0,), -3))) == [0, -1, -2, -3]

    def test_minus_one(self):
        assert list(closure_delta(ExponentSet((-1,), -3))) == [-1, -2, -3]

    def test_max_preserved(self):
        d = closure_delta(ExponentSet((F(1, 3), F(-1, 2)), -6))
        assert d.max == F(1, 3)

    @pytest.mark.parametrize("delta,floor", [((0,), -3), ((F(1, 3), F(-1, 2)), -4),
                                             ((F(2, 5), F(-3, 7)), -3), ((F(3, 4),), -2)])
    def test_matches_naive(self, delta, floor):
        assert list(closure_delta(ExponentSet(delta, floor))) == naive_closure(delta, floor)

    def test_precondition(self):
        with pytest.raises(AsymptoticsError):
            closure_delta(ExponentSet((1,), -3))


@settings(max_examples=40, deadline=None)
@given(st.lists(rationals, min_size=1, max_size=3))
def test_closure_idempotent_and_exact(delta):
    d = closure_delta(ExponentSet(tuple(delta), -3))
    assert closure_delta(d) == d
    assert list(d) == naive_closure(delta, F(-3))


class TestLattice:
    def test_negative_half(self):
        dbar = closure_delta(ExponentSet((-1,), -6))
        out = build_barB(ExponentSet((F(-1, 2),), -6), dbar)
        assert out.max == F(1, 2)
        assert all(d - 1 in out for d in dbar if d - 1 >= -6)

    def test_zero(self):
        dbar = closure_delta(ExponentSet((0,), -6))
        out = build_barB(ExponentSet((0,), -6), dbar)
        assert list(out) == [1, 0, -1, -2, -3, -4, -5, -6]
        assert all(d - 1 in out for d in dbar if d - 1 >= -6)

    def test_delta_above_top_is_inconsistent(self):
        dbar = closure_delta(ExponentSet((0,), -6))
        with pytest.raises(AsymptoticsError):
            build_barB(ExponentSet((-2,), -6), dbar)

    def test_rejects_large_beta(self):
        with pytest.raises(AsymptoticsError):
            build_barB(ExponentSet((F(1, 2),), -6), ExponentSet((0,), -6))


@settings(max_examples=25, deadline=None)
@given(st.lists(rationals.filter(lambda f: -1 <= f < F(1, 2)), min_size=1, max_size=2),
       st.data())
def test_lattice_closed_under_shifted_sums(B, data):
    fl = F(-3)
    top = max(B) + 1
    delta = data.draw(st.lists(rationals.filter(lambda f: f <= top), min_size=1, max_size=2))
    dbar = closure_delta(ExponentSet(tuple(delta), fl))
    out = build_barB(ExponentSet(tuple(B), fl), dbar)
    assert out.max == max(B) + 1
    d = data.draw(st.sampled_from(list(dbar)))
    b = data.draw(st.sampled_from(list(out)))
    assume(d + b - 1 >= fl)
    assert d + b - 1 in out


class TestSymbols:
    def test_miura_zero(self):
        assert miura_symbol(Symbol(1, ())).terms == ()

    def test_miura_cube_root(self):
        q = miura_symbol(Symbol(1, ((F(1, 3), F(2)),)))
        assert q.terms == ((F(2, 3), F(4)), (F(-2, 3), F(2, 3)))

    def test_miura_inverse_power(self):
        c = F(5, 2)
        q = miura_symbol(Symbol(1, ((F(-1), c),)))
        assert q.terms == ((F(-2), c * c - c),)

    def test_miura_left_side(self):
        # r = (-x)^{1/3} on x < 0: d/dx (-x)^{1/3} = -(1/3)(-x)^{-2/3}
        q = miura_symbol(Symbol(-1, ((F(1, 3), F(1)),)))
        assert q.coefficient(F(-2, 3)) == F(-1, 3)

    def test_miura_gate(self):
        with pytest.raises(AsymptoticsError):
            miura_symbol(Symbol(1, ((F(3, 5), F(1)),)))

    def test_integrate(self):
        p = integrate_symbol(Symbol(1, ((F(1, 2), F(3)),)))
        assert p.terms == ((F(3, 2), F(2)),) and p.log == 0 and p.const == 0
        p = integrate_symbol(Symbol(1, ((F(-1), F(1)),)))
        assert p.terms == () and p.log == 1
        p = integrate_symbol(Symbol(1, ((F(-2), F(1)),)))
        assert p.terms == ((F(-1), F(-1)),) and p.const == 0

    def test_star_keeps_shifted_floor(self):
        p = integrate_symbol(Symbol(1, ((F(-6), F(1)),), -6))
        assert p.terms == ((F(-5), F(-1, 5)),)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(rationals, st.fractions(-5, 5, max_denominator=7)), max_size=4),
       st.sampled_from([1, -1]))
def test_derivative_inverts_integration(terms, side):
    f = Symbol(side, tuple(terms), -6)
    assert derivative(integrate_symbol(f)).nonzero() == f.nonzero()


class TestGate:
    def test_third(self):
        assert beta_gate(Symbol(1, ((F(1, 3), 1.0),))).passed

    def test_point_six(self):
        g = beta_gate(Symbol(1, ((F(3, 5), 1.0),)))
        assert not g.passed
        assert (g.witness, g.bound) == (F(9, 5), F(8, 5))
        assert "9/5" in g.message and "8/5" in g.message

    def test_half_needs_flag(self):
        r = Symbol(1, ((F(1, 2), 1.0),))
        assert not beta_gate(r).passed
        assert beta_gate(r, o_class=True).passed

    def test_leading_zero_coefficient_ignored(self):
        assert beta_gate(Symbol(1, ((F(3, 5), 0.0), (F(1, 4), 1.0)))).passed


class TestEvolution:
    t = np.linspace(0, 1, 101)

    def setup_cube_root(self):
        r0 = Symbol(1, ((F(1, 3), F(1)),))
        q = kdv_symbol_flow(miura_symbol(r0), self.t)
        return integrate_symbol(r0), q

    def test_zero_q(self):
        p0 = integrate_symbol(Symbol(1, ((F(1, 4), F(2)), (F(-1), F(1)))))
        p = formal_evolution(p0, Symbol(1, ()), self.t)
        for e, c in p.terms:
            assert np.all(np.asarray(c) == np.asarray(c)[0])
        assert np.all(p.log == 1)

    def test_kdv_symbol_flow_closed_form(self):
        _, q = self.setup_cube_root()
        assert np.max(np.abs(q.coefficient(F(1, 3)) - 4 * self.t)) < 1e-12
        assert np.all(q.coefficient(F(2, 3)) == 1)

    def test_leading_rows(self):
        p0, q = self.setup_cube_root()
        p, sysm = formal_evolution(p0, q, self.t, return_system=True)
        assert np.all(p.coefficient(F(4, 3)) == 0.75)
        assert np.max(np.abs(p.coefficient(1) - 2 * self.t)) < 1e-12
        assert np.max(np.abs(p.coefficient(F(2, 3)) - 6 * self.t**2)) < 1e-10
        assert sysm.row_is_empty(0) and sysm.row_is_empty(sysm.log_row)
        assert sysm.is_strictly_lower_triangular()

    def test_a1_against_quadrature(self):
        p0, q = self.setup_cube_root()
        p = formal_evolution(p0, q, self.t)
        # exponent-1 row: 2 c_{2/3} a_{4/3}^x-coefficient plus the q_x term from exponent 2
        rate = lambda s: 2 * 1.0 * 1.0
        ref = np.array([quad(rate, 0, t)[0] for t in self.t])
        assert np.max(np.abs(p.coefficient(1) - ref)) <= 1e-10

    def test_log_row_constant(self):
        r0 = Symbol(1, ((F(0), F(1)), (F(-1), F(1, 2))))
        p = formal_evolution(integrate_symbol(r0), miura_symbol(r0), self.t)
        assert np.all(p.log == p.log[0])

    def test_obstruction(self):
        p0 = integrate_symbol(Symbol(1, ((F(3, 5), F(1)),)))
        q = Symbol(1, ((F(6, 5), F(1)),))
        with pytest.raises(NoFormalSolution) as exc:
            assemble_evolution(p0, q)
        assert exc.value.witness > exc.value.bound

    @staticmethod
    def _miura_gap(n):
        t = np.linspace(0, 1, n)
        r0 = Symbol(1, ((F(1, 3), F(1)),))
        q = kdv_symbol_flow(miura_symbol(r0), t)
        p = formal_evolution(integrate_symbol(r0), q, t)
        rs = {e: np.asarray(c)[-1] for e, c in derivative(p).terms}
        back = miura_symbol(Symbol(1, tuple(rs.items()), -6))
        worst = 0.0
        for e, c in q.terms:
            if e >= F(-5):
                # each row is a cancellation between products; scale by their size
                scale = 1 + sum(abs(rs[a] * rs.get(e - a, 0)) for a in rs)
                worst = max(worst, abs(back.coefficient(e) - np.asarray(c)[-1]) / scale)
        return worst

    def test_miura_consistency(self):
        # the evolved p must keep mapping to the evolved q; the gap is quadrature error only
        g1, g2 = self._miura_gap(101), self._miura_gap(201)
        assert g2 < 1e-6
        assert np.log2(g1 / g2) > 3.5


@settings(max_examples=15, deadline=None)
@given(st.lists(st.tuples(rationals.filter(lambda f: f < F(1, 2)),
                          st.floats(-2, 2).filter(lambda v: abs(v) > 0.1)),
                min_size=1, max_size=2))
def test_assembled_system_is_triangular(terms):
    r0 = Symbol(1, tuple(terms), -4)
    assume(r0.terms and r0.beta < F(1, 2))
    sysm = assemble_evolution(integrate_symbol(r0), miura_symbol(r0))
    assert sysm.is_strictly_lower_triangular()
    assert sysm.row_is_empty(0) and sysm.row_is_empty(sysm.log_row)


class TestEvalAndJson:
    def test_zero(self):
        assert symbol_eval(Symbol(1, ()), 0.0, 3.0) == 0

    def test_single_term(self):
        assert symbol_eval(Symbol(1, ((F(1, 2), F(2)),)), 0.0, 4.0) == 4.0

    def test_side_and_range(self):
        s = Symbol(-1, ((F(1, 2), F(2)),))
        assert symbol_eval(s, 0.0, -4.0) == 4.0
        with pytest.raises(ValueError):
            symbol_eval(s, 0.0, 4.0)
        with pytest.raises(ValueError):
            symbol_eval(s, 0.0, -0.5)

    def test_star_terms(self):
        p = StarSymbol(1, ((F(1), F(1)),), log=F(2), const=F(3))
        assert symbol_eval(p, 0.0, np.e) == pytest.approx(np.e + 2 + 3)

    def test_kink_tail(self):
        from miuraflow.field import Grid
        from miuraflow.miura import Kink, invert_miura_flow
        g = Grid(-16, 16, 641, 0, 0.5, 11)
        res = invert_miura_flow(Kink(), Kink().kdv_spec(), g)
        lead = Symbol(1, ((F(0), F(-1)),))
        j = int(np.argmin(np.abs(g.x - 15)))
        for i, t in enumerate(g.t):
            assert abs(symbol_eval(lead, t, g.x[j]) - res.r.values[i, j]) <= 1e-4

    def test_json_roundtrip(self):
        t = np.linspace(0, 1, 5)
        s = Symbol(1, ((F(1, 3), t**2), (F(-1, 2), np.ones(5))), -6, t)
        back = symbol_from_json(symbol_to_json(s))
        assert back.exponents == s.exponents
        assert np.array_equal(back.coefficient(F(1, 3)), t**2)
        d = symbol_to_json(s)
        assert d["floor"] == {"num": -6, "den": 1}
        assert d["terms"][0]["exp"] == {"num": 1, "den": 3}

    def test_json_star(self):
        p = integrate_symbol(Symbol(1, ((F(-1), F(2)),)))
        back = symbol_from_json(symbol_to_json(p))
        assert isinstance(back, StarSymbol) and back.log == 2.0

    def test_json_rejects_log_on_plain(self):
        with pytest.raises(ValueError):
            symbol_from_json({"side": "+", "terms": [], "log": 1.0})
