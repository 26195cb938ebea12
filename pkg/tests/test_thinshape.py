import numpy as np
import pytest

from quasimodes.errors import DomainError, TruncationError
from quasimodes.numerics import anharmonic_eigs
from quasimodes.series import HalfPowerSeries
from quasimodes.thinshape import (ThicknessProfile, ellipse_profile,
                                  hermite_ladder, leading_quasieigenvalue,
                                  oscillator_model, quasimode_evaluate,
                                  taylor_inverse_square, variable_expansion)


def quadratic_profile():
    # symmetric strip of width 1 - x^2/2
    return ThicknessProfile("-(1-x**2/2)/2", "(1-x**2/2)/2", (-1.0, 1.0))


class TestProfile:
    def test_valid_quadratic(self):
        p = quadratic_profile()
        assert p.width(0.0) == pytest.approx(1.0)
        assert p.taylor_a(2) == pytest.approx([1.0, 0.0, -0.5])

    def test_width_must_be_positive(self):
        with pytest.raises(DomainError):
            ThicknessProfile("0", "1-2*x**2", (-1.0, 1.0))

    def test_maximum_must_be_at_zero(self):
        with pytest.raises(DomainError):
            ThicknessProfile("0", "1-(x-0.3)**2", (-0.5, 0.5))

    def test_minimum_rejected(self):
        with pytest.raises(DomainError):
            ThicknessProfile("0", "1+x**2", (-0.5, 0.5))

    def test_wrong_degeneracy_order(self):
        with pytest.raises(DomainError):
            ThicknessProfile("0", "1-x**2", (-0.5, 0.5), p=2)

    def test_non_unique_maximum(self):
        with pytest.raises(DomainError):
            ThicknessProfile("0", "1-sin(pi*x)**2", (-1.2, 1.2))

    def test_quartic_maximum(self):
        p = ThicknessProfile("0", "1-x**4/2", (-1.0, 1.0), p=2)
        assert p.p == 2


class TestInverseSquare:
    def test_quadratic(self):
        # (1 - x^2/2)^-2 = 1 + x^2 + (3/4) x^4 + ...
        c = taylor_inverse_square(quadratic_profile(), 4)
        np.testing.assert_allclose(c, [1.0, 0.0, 1.0, 0.0, 0.75], atol=1e-12)

    def test_ellipse(self):
        # width 2 sqrt(1-x^2): a^-2 = (1/4)(1 + x^2 + x^4 + ...)
        c = taylor_inverse_square(ellipse_profile(), 4)
        np.testing.assert_allclose(c, [0.25, 0.0, 0.25, 0.0, 0.25], atol=1e-12)


class TestOscillatorModel:
    def test_quadratic_constants(self):
        m = oscillator_model(quadratic_profile())
        assert m.c0 == pytest.approx(1.0)
        assert m.c2p == pytest.approx(1.0)
        assert m.omega == pytest.approx(np.pi)

    def test_ellipse_constants(self):
        # c0 = c2 = 1/4, so the oscillator frequency is pi/2; the closed
        # form pi*sqrt(c0*c2_closed) with c2_closed = -a''(0)/a(0) = 1
        # gives the same number
        m = oscillator_model(ellipse_profile())
        assert m.c0 == pytest.approx(0.25)
        assert m.omega == pytest.approx(np.pi / 2)
        assert m.omega == pytest.approx(np.pi * np.sqrt(m.c0 * m.c2_closed))

    def test_closed_form_identity(self):
        for prof in (quadratic_profile(), ellipse_profile()):
            m = oscillator_model(prof)
            assert m.c2p == pytest.approx(m.c0 * m.c2_closed, rel=1e-9)

    def test_scaling_covariance(self):
        # narrowing the bump by s multiplies c2 by s^2 and omega by s
        m1 = oscillator_model(ThicknessProfile("0", "1-x**2/2", (-1, 1)))
        m2 = oscillator_model(ThicknessProfile("0", "1-2*x**2", (-0.6, 0.6)))
        assert m2.c2p == pytest.approx(4 * m1.c2p)
        assert m2.omega == pytest.approx(2 * m1.omega)


class TestLeading:
    def test_quadratic_formula(self):
        m = oscillator_model(quadratic_profile())
        h = 0.05
        for mode in (0, 1, 2):
            expect = np.pi**2 / h**2 + np.pi * (2 * mode + 1) / h
            assert leading_quasieigenvalue(m, mode, h) == pytest.approx(expect)

    def test_invalid_arguments(self):
        m = oscillator_model(quadratic_profile())
        with pytest.raises(DomainError):
            leading_quasieigenvalue(m, 0, -0.1)
        with pytest.raises(DomainError):
            leading_quasieigenvalue(m, -1, 0.1)

    def test_quartic_exponent(self):
        # width 1 - x^4/2: a^-2 = 1 + x^4 + ..., so the correction rides
        # at h^{-2/3} with the quartic-oscillator levels
        prof = ThicknessProfile("0", "1-x**4/2", (-1.0, 1.0), p=2)
        m = oscillator_model(prof)
        assert m.omega == pytest.approx(np.pi)
        nu = anharmonic_eigs(2, np.pi, 1)[0]
        for h in (1e-2, 1e-3):
            got = leading_quasieigenvalue(m, 0, h)
            assert (got - np.pi**2 / h**2) * h ** (2.0 / 3.0) == pytest.approx(
                nu, rel=1e-9)


class TestHermiteLadder:
    def test_oscillator_is_diagonal(self):
        N, om = 20, 1.3
        X, D = hermite_ladder(N, om)
        H = -D @ D + om**2 * X @ X
        # exact away from the truncation corner
        for n in range(N - 1):
            assert H[n, n] == pytest.approx(om * (2 * n + 1))
        off = H - np.diag(np.diag(H))
        assert np.max(np.abs(off)) < 1e-12

    def test_commutator(self):
        X, D = hermite_ladder(30, 0.7)
        C = D @ X - X @ D
        # [d/dxi, xi] = 1 away from the last basis mode
        np.testing.assert_allclose(np.diag(C)[:-1], 1.0, atol=1e-12)


class TestVariableExpansion:
    def test_leading_terms_bitwise(self):
        prof = quadratic_profile()
        model = oscillator_model(prof)
        res = variable_expansion(prof, 0, 2, fibre_n=40, hermite_n=24)
        trunc = HalfPowerSeries(-4, res.lambda_series.coeffs[:3])
        for h in (0.5, 0.07, 0.01):
            assert trunc.evaluate(h) == leading_quasieigenvalue(model, 0, h)

    def test_parity_kills_half_powers(self):
        res = variable_expansion(quadratic_profile(), 0, 2, fibre_n=40,
                                 hermite_n=24)
        assert abs(res.lambda_series.coeff(-3)) < 1e-12
        assert abs(res.lambda_series.coeff(-1)) < 1e-9

    def test_quadratic_constant_term(self):
        # second-order coefficient by hand: (3/4) pi^2 <xi^4> + 1/2 - 1/2
        # with <xi^4> = 3(2m^2+2m+1)/(4 omega^2), omega = pi
        for m, expect in ((0, 9.0 / 16.0), (1, 45.0 / 16.0)):
            res = variable_expansion(quadratic_profile(), m, 2, fibre_n=90)
            assert res.lambda_series.coeff(0) == pytest.approx(expect, abs=5e-3)

    def test_ellipse_constant_term(self):
        # (1/4) pi^2 <xi^4> with omega = pi/2 gives 3/4; the transport
        # terms cancel as in the quadratic case
        res = variable_expansion(ellipse_profile(), 0, 2, fibre_n=90)
        assert res.lambda_series.coeff(0) == pytest.approx(0.75, abs=5e-3)

    def test_fibre_refinement_consistency(self):
        a = variable_expansion(quadratic_profile(), 0, 2, fibre_n=60)
        b = variable_expansion(quadratic_profile(), 0, 2, fibre_n=120)
        assert a.lambda_series.coeff(0) == pytest.approx(
            b.lambda_series.coeff(0), abs=2e-3)

    def test_degenerate_profile_rejected(self):
        prof = ThicknessProfile("0", "1-x**4/2", (-1.0, 1.0), p=2)
        with pytest.raises(DomainError):
            variable_expansion(prof, 0, 1)

    def test_hermite_instability_flagged(self):
        # with only 6 basis modes the order-4 coefficient for base mode 2
        # depends on the truncation, which the enlargement check must flag
        with pytest.raises(TruncationError):
            variable_expansion(ellipse_profile(), 2, 4, fibre_n=40,
                               hermite_n=6)


class TestQuasimodeEvaluate:
    def test_center_value(self):
        # at the peak: sin(pi/2) * (omega/pi)^{1/4} with omega = pi
        prof = quadratic_profile()
        assert quasimode_evaluate(prof, 0, 0.05, 0.0, 0.0) == pytest.approx(1.0)

    def test_transverse_node(self):
        prof = quadratic_profile()
        h = 0.05
        top = h * prof.a_plus(0.0)
        assert quasimode_evaluate(prof, 0, h, 0.0, top) == pytest.approx(0.0, abs=1e-12)

    def test_outside_strip(self):
        prof = quadratic_profile()
        with pytest.raises(DomainError):
            quasimode_evaluate(prof, 0, 0.05, 0.3, 0.2)
        with pytest.raises(DomainError):
            quasimode_evaluate(prof, 0, 0.05, 1.5, 0.0)

    def test_cutoff_vanishes_at_ends(self):
        prof = quadratic_profile()
        assert abs(quasimode_evaluate(prof, 0, 0.05, 0.999, 0.0)) < 1e-10

    def test_first_mode_odd(self):
        prof = quadratic_profile()
        v1 = quasimode_evaluate(prof, 1, 0.05, 0.02, 0.0)
        v2 = quasimode_evaluate(prof, 1, 0.05, -0.02, 0.0)
        assert v1 == pytest.approx(-v2)
        assert v1 != 0.0
