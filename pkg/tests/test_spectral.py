import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from miuraflow.characteristics import CoefficientPair, solve_first_order
from miuraflow.field import Grid, Slice
from miuraflow.kdv import solution_from_spec, solve_numeric
from miuraflow.spectral import (InvarianceViolation, TridiagonalOperator, WindowEdgeError,
                                bound_state, discretize_schrodinger, eigen_bisect,
                                impedance_conjugation, impedance_invariance, impedance_operator,
                                lax_conjugation_check, lax_evolution_free, match_spectra,
                                narrowband_comparison, scattering_state, spectrum_invariance,
                                sturm_count, transport_eigenfunction)

SOL = solution_from_spec("soliton:kappa=1")


def dense(op):
    return np.diag(op.diagonal) + np.diag(op.off_diagonal, 1) + np.diag(op.off_diagonal, -1)


class TestOperators:
    def test_dimension_check(self):
        with pytest.raises(ValueError):
            TridiagonalOperator(np.ones(3), np.ones(3), 1.0, np.zeros(3))
        with pytest.raises(ValueError):
            TridiagonalOperator(np.ones(3), np.ones(2), 1.0, np.zeros(3), np.ones(2))

    def test_discrete_laplacian_closed_form(self):
        x = np.linspace(-5, 5, 101)
        h = x[1] - x[0]
        s = eigen_bisect(discretize_schrodinger(Slice(x, 0 * x)), (0, 50), 1e-12)
        k = np.arange(1, s.eigenvalues.size + 1)
        ref = 4 / h**2 * np.sin(k * np.pi * h / 20) ** 2
        assert s.eigenvalues.size == np.sum(ref < 50)
        assert np.max(np.abs(s.eigenvalues - ref)) <= 1e-10
        assert s.multiplicities == [1] * k.size

    def test_two_by_two(self):
        op = TridiagonalOperator(np.array([1.0, 3.0]), np.array([0.0]), 1.0, np.zeros(2))
        assert np.allclose(eigen_bisect(op, (0, 4)).eigenvalues, [1, 3], atol=1e-10)

    def test_double_eigenvalue_multiplicity(self):
        op = TridiagonalOperator(np.array([2.0, 2.0]), np.array([0.0]), 1.0, np.zeros(2))
        s = eigen_bisect(op, (0, 4))
        assert s.multiplicities == [2] and s.eigenvalues[0] == pytest.approx(2.0)

    def test_harmonic_ladder(self):
        x = np.linspace(-12, 12, 4000)
        ev = eigen_bisect(discretize_schrodinger(Slice(x, x**2)), (0, 6)).eigenvalues
        assert np.max(np.abs(ev - [1, 3, 5])) <= 1e-3

    def test_single_well(self):
        x = np.linspace(-30, 30, 2000)
        s = eigen_bisect(discretize_schrodinger(Slice(x, -2 / np.cosh(x) ** 2)), (-5, -0.01))
        assert s.eigenvalues.size == 1 and abs(s.eigenvalues[0] + 1) <= 1e-4
        assert s.edge_ok

    def test_two_level_well(self):
        x = np.linspace(-30, 30, 2000)
        ev = eigen_bisect(discretize_schrodinger(Slice(x, -6 / np.cosh(x) ** 2)), (-5, -0.01))
        assert np.max(np.abs(ev.eigenvalues - [-4, -1])) <= 1e-3

    def test_window_edge_error(self):
        op = TridiagonalOperator(np.array([1.0, 3.0]), np.array([0.0]), 1.0, np.zeros(2))
        with pytest.raises(WindowEdgeError):
            eigen_bisect(op, (1.0, 2.0), 1e-8)

    def test_bad_arguments(self):
        op = TridiagonalOperator(np.array([1.0]), np.array([]), 1.0, np.zeros(1))
        with pytest.raises(ValueError):
            eigen_bisect(op, (0, 2), 0.0)
        with pytest.raises(ValueError):
            eigen_bisect(op, (2, 0))

    def test_edge_amplitude_detects_small_box(self):
        x = np.linspace(-3, 3, 301)
        s = eigen_bisect(discretize_schrodinger(Slice(x, -2 / np.cosh(x) ** 2)), (-2, -0.01))
        assert not s.edge_ok


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**31 - 1))
def test_sturm_count_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    op = TridiagonalOperator(rng.normal(size=n), rng.normal(size=n - 1), 1.0, np.zeros(n))
    ev = np.linalg.eigvalsh(dense(op))
    probes = rng.uniform(ev.min() - 1, ev.max() + 1, 20)
    # avoid probes within roundoff of an eigenvalue
    probes = probes[np.min(np.abs(probes[:, None] - ev[None]), axis=1) > 1e-8]
    assert np.array_equal(sturm_count(op, probes), np.searchsorted(ev, probes))


class TestInvariance:
    def test_soliton(self):
        x = np.linspace(-30, 30, 2000)
        rep = spectrum_invariance(SOL, [0, 0.25, 0.5], (-2, -0.5), x=x)
        assert rep.passed and rep.multiplicities_agree
        ev = np.concatenate([s.eigenvalues for s in rep.spectra])
        assert ev.size == 3 and np.max(np.abs(ev + 1)) <= 1e-4
        assert rep.max_pair_dev <= 1e-6

    def test_static_zero(self):
        x = np.linspace(-5, 5, 101)
        rep = spectrum_invariance(lambda t, s: 0 * s, [0, 1], (0, 20), x=x)
        assert rep.max_pair_dev == 0 and rep.passed

    def test_report_json_shape(self):
        x = np.linspace(-30, 30, 500)
        d = spectrum_invariance(SOL, [0, 0.5], (-2, -0.5), x=x).as_dict()
        for key in ("times", "eigenvalues", "max_pair_dev", "multiplicities"):
            assert key in d
        assert len(d["eigenvalues"]) == 2 and d["multiplicities"] == [[1], [1]]

    def test_richardson_improves(self):
        x = np.linspace(-30, 30, 1001)
        plain = spectrum_invariance(SOL, [0], (-2, -0.5), x=x).spectra[0].eigenvalues[0]
        rich = spectrum_invariance(SOL, [0], (-2, -0.5), x=x, richardson=True).spectra[0].eigenvalues[0]
        assert abs(rich + 1) < abs(plain + 1) / 10

    def test_pair_deviation_converges(self):
        # the pair deviation of a moving soliton is a discretization artifact
        devs = []
        for n in (501, 1001):
            x = np.linspace(-30, 30, n)
            devs.append(abs(spectrum_invariance(SOL, [0.0], (-2, -0.5), x=x).spectra[0].eigenvalues[0] + 1))
        assert np.log2(devs[0] / devs[1]) > 1.8

    def test_numeric_kdv(self):
        xn = Grid(-30, 30, 1024).x
        qn = solve_numeric(Slice(xn, -3.5 / np.cosh(xn) ** 2), 0.5, 3, substeps=1000, full_box=True)
        rep = spectrum_invariance(qn, [0, 0.5], (-3, -0.01), tol=1e-5, refine=2, richardson=True)
        assert rep.passed and rep.max_pair_dev <= 1e-5
        assert len(rep.spectra[0].eigenvalues) == 2

    def test_violation(self):
        x = np.linspace(-20, 20, 801)
        fake = lambda t, s: -(2 + t) / np.cosh(s) ** 2
        rep = spectrum_invariance(fake, [0, 1], (-3, -0.1), x=x)
        assert not rep.passed
        with pytest.raises(InvarianceViolation):
            spectrum_invariance(fake, [0, 1], (-3, -0.1), x=x, strict=True)

    def test_sampled_time_must_be_level(self):
        xn = Grid(-30, 30, 256).x
        qn = solve_numeric(Slice(xn, -2 / np.cosh(xn) ** 2), 0.5, 3, substeps=200, full_box=True)
        with pytest.raises(ValueError):
            spectrum_invariance(qn, [0.3], (-3, -0.01))

    def test_match_spectra_rejects_far_pairs(self):
        a = eigen_bisect(TridiagonalOperator(np.array([1.0]), np.array([]), 1, np.zeros(1)), (0, 5))
        b = eigen_bisect(TridiagonalOperator(np.array([2.0]), np.array([]), 1, np.zeros(1)), (0, 5))
        dev, agree, unpaired = match_spectra([a, b], 0.01)
        assert len(unpaired) == 2 and dev == 0


class TestTransport:
    def test_free_cosine(self):
        k = 1.3
        lam = k * k
        g = Grid(-10, 10, 801, 0, 0.5, 6)
        pair = CoefficientPair.q_lambda(solution_from_spec("zero"), lam)
        psi = solve_first_order(pair, lambda x: np.cos(k * x), g)
        ref = np.cos(k * (g.x[None] + 4 * lam * g.t[:, None]))
        assert np.max(np.abs(psi.values - ref)) <= 1e-9

    def test_bound_state(self):
        g = Grid(-15, 15, 1501, 0, 0.5, 11)
        out = transport_eigenfunction(SOL, lambda x: 1 / np.cosh(x), -1.0, g)
        assert out["eigen_residual"] <= 1e-4
        assert 0.5 < out["norm_ratio_min"] <= out["norm_ratio_max"] < 2

    def test_scattering_state(self):
        xs = np.linspace(-40, 40, 8001)
        sc = scattering_state(lambda s: SOL.q(0.0, s), 0.25, xs)
        # the shooting oracle solves the eigen-equation
        res = -np.gradient(np.gradient(sc.values, xs), xs) + (SOL.q(0.0, xs) - 0.25) * sc.values
        assert np.max(np.abs(res[5:-5])) < 1e-3
        g = Grid(-15, 15, 1501, 0, 0.5, 11)
        assert transport_eigenfunction(SOL, sc, 0.25, g)["eigen_residual"] <= 1e-3

    def test_scattering_needs_positive(self):
        with pytest.raises(ValueError):
            scattering_state(lambda s: 0 * s, -1.0, np.linspace(0, 1, 5))

    def test_inverse_iteration(self):
        xb = Grid(-30, 30, 2001).x
        lam, v = bound_state(Slice(xb, SOL.q(0.0, xb)))
        assert abs(lam + 1) <= 1e-4
        ref = 1 / np.cosh(xb)
        ref /= np.sqrt(v.h * np.sum(ref**2))
        assert np.max(np.abs(v.values - ref)) < 1e-3


class TestImpedance:
    def test_symbolic_constant_conjugation(self):
        x, c = sp.symbols("x c")
        u = sp.Function("u")(x)
        lhs = sp.exp(c * x) * (-u.diff(x, 2) - 2 * c * u.diff(x))
        rhs = -sp.diff(sp.exp(c * x) * u, x, 2) + c**2 * sp.exp(c * x) * u
        assert sp.simplify(lhs - rhs) == 0

    def test_zero_r_is_schrodinger(self):
        x = Grid(-5, 5, 201).x
        z = impedance_conjugation(Slice(x, 0 * x), window=(0, 2))
        assert z["residual"] == 0.0
        op, _ = impedance_operator(Slice(x, 0 * x))
        lap = discretize_schrodinger(Slice(x, 0 * x))
        assert np.array_equal(op.diagonal, lap.diagonal)

    def test_constant_r(self):
        x = Grid(-5, 5, 4001).x
        c = impedance_conjugation(Slice(x, 1.0 + 0 * x), window=(-1, 1.5))
        assert c["residual"] <= 1e-6
        assert c["n_tests"] == 20

    def test_kink_order_and_spectra(self):
        res = {}
        for nx in (1001, 2001):
            xg = Grid(-10, 10, nx).x
            res[nx] = impedance_conjugation(Slice(xg, -np.tanh(xg)), window=(-0.5, 0.5))
        assert np.log2(res[1001]["residual"] / res[2001]["residual"]) >= 1.8
        assert res[2001]["spectral_dev"] <= 1e-5

    def test_window_respects_density_range(self):
        xg = Grid(-20, 20, 801).x
        op, win = impedance_operator(Slice(xg, -np.tanh(xg)))
        assert np.all(op.weight >= 1e-8) and np.all(op.weight <= 1e8)
        assert op.x[0] > xg[0] and op.x[-1] < xg[-1]

    def test_static_invariance(self):
        x = Grid(-10, 10, 401).x
        for c in (0.0, 0.5):
            rep = impedance_invariance(lambda t, s: c + 0 * s, [0, 1], (-1, 5), x=x)
            assert rep.max_pair_dev == 0 and rep.passed

    def test_kink_cross_time(self):
        x = Grid(-10, 10, 2001).x
        rep = impedance_invariance(lambda t, s: -np.tanh(s + 2 * t), [0.0, 0.3], (-0.5, 0.5), x=x)
        assert rep.passed and rep.max_pair_dev <= 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-1.5, 1.5))
def test_impedance_weighted_symmetry(seed, a):
    rng = np.random.default_rng(seed)
    xg = Grid(-4, 4, 161).x
    op, _ = impedance_operator(Slice(xg, a * np.tanh(xg) + 0.3 * np.sin(2 * xg)))
    u, v = rng.normal(size=op.size), rng.normal(size=op.size)
    lhs, rhs = op.inner(op.apply(u), v), op.inner(u, op.apply(v))
    assert abs(lhs - rhs) <= 1e-12 * (abs(op.inner(op.apply(u), op.apply(u))) ** 0.5
                                     * op.inner(v, v) ** 0.5 + 1)


class TestLax:
    def test_identity_at_zero(self):
        x = np.linspace(-20, 20, 512)
        psi, rep = lax_evolution_free(Slice(x, np.exp(-x**2)), 0.0)
        assert np.max(np.abs(psi.values - np.exp(-x**2))) < 1e-14

    def test_unitarity(self):
        x = np.linspace(-20, 20, 512)
        _, rep = lax_evolution_free(Slice(x, np.exp(-x**2)), 0.1)
        assert rep["unitarity_dev"] <= 1e-10

    def test_against_fourier_quadrature(self):
        # psi(x, t) = (1/2pi) int sqrt(pi) exp(-k^2/4) cos(k x + 4 k^3 t) dk for a Gaussian
        from scipy.integrate import quad
        x = np.linspace(-30, 30, 1024)
        psi, _ = lax_evolution_free(Slice(x, np.exp(-x**2)), 0.05)
        for j in (400, 512, 560, 620):
            f = lambda k: np.sqrt(np.pi) * np.exp(-k * k / 4) * np.cos(k * x[j] + 4 * k**3 * 0.05)
            ref = quad(f, 0, 40, limit=400, epsabs=1e-13)[0] / np.pi
            assert abs(psi.values[j] - ref) < 1e-8

    def test_rejects_non_decaying(self):
        x = np.linspace(-5, 5, 64)
        with pytest.raises(ValueError):
            lax_evolution_free(Slice(x, np.cos(x)), 0.1)

    def test_narrowband(self):
        nb = narrowband_comparison(1.0, 0.05, 0.1)
        assert nb["relative_l2_diff"] <= 0.05
        wide = narrowband_comparison(1.0, 0.2, 0.1)
        assert wide["relative_l2_diff"] > nb["relative_l2_diff"]

    def test_free_conjugation_exact(self):
        x = np.linspace(-20, 20, 257)[:-1]
        r = lax_conjugation_check(lambda t, s: 0 * s, Slice(x, np.exp(-x**2)), 0.2, 20)
        assert r["residual"] < 1e-12

    @pytest.mark.parametrize("kind", ["gauss", "dgauss"])
    def test_soliton_conjugation(self, kind):
        xp = np.linspace(-40, 40, 1025)[:-1]
        p0 = np.exp(-xp**2) if kind == "gauss" else -2 * xp * np.exp(-xp**2)
        r1 = lax_conjugation_check(SOL, Slice(xp, p0), 0.2, 100)["residual"]
        r2 = lax_conjugation_check(SOL, Slice(xp, p0), 0.2, 200)["residual"]
        assert r2 <= 1e-3
        assert np.log2(r1 / r2) >= 2.0

    def test_needs_power_of_two(self):
        x = np.linspace(-5, 5, 100)
        with pytest.raises(ValueError):
            lax_conjugation_check(SOL, Slice(x, np.exp(-x**2)), 0.1)
