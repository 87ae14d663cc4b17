import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdehmm.amplitude import (
    AmplitudeCoeffs,
    AveragedCoeffs,
    CenteringError,
    amplitude_drift_diffusion,
    averaged_closed_form,
    averaged_coeffs,
    blow_up_time,
    burgers_homog_coeffs,
    homog_coeffs_general,
    limit_coeffs,
    ou_stationary_variance,
)
from spdehmm.spectral import burgers_model, custom_model, ks_model


def _series_exact(K):
    """Burgers series with q = 1 in exact rational arithmetic, k = 2..K."""
    lam = lambda k: Fraction(k * k - 1)  # noqa: E731
    A = Fraction(1, 8) / lam(2) ** 2
    C = Fraction(0)
    for k in range(2, K + 1):
        den = (lam(k) + lam(k + 1)) * lam(k) * lam(k + 1)
        A += (k * lam(k) - lam(k + 1) * (k + 1)) / den / 8
        C += 1 / den / 16
    return A, C


def test_series_matches_rationals():
    # oracle: exact fractions reproduce the float series
    for M in (1, 2, 5, 9):
        A, C = _series_exact(M + 1)
        c = burgers_homog_coeffs(1.0, 0.0, M)
        assert c.A == pytest.approx(float(A), abs=1e-15)
        assert c.c_reduced == pytest.approx(float(C), abs=1e-16)


def test_table_values_three_modes():
    # published three-mode table values
    c = burgers_homog_coeffs(1.0, 0.0, 2)
    assert abs(c.A - 0.003735726834) < 1e-9
    assert abs(c.c_reduced - 0.0002593873518) < 1e-9
    assert c.Bc == pytest.approx(1 / 12)
    assert c.D == pytest.approx(1 / 36)


def test_limit_values():
    c = burgers_homog_coeffs(1.0, 0.0)
    assert abs(c.A - 0.0026744369) < 1e-7
    assert abs(c.c_reduced - 0.00026592835) < 1e-7
    assert c.tail_bound < 1e-9


def test_general_formula_matches_series():
    # the series through k = M+1 involves mode M+2: general formula on M+1 fast modes
    for M in (1, 2, 3, 6):
        model = burgers_model(M + 1)
        g = homog_coeffs_general(model, M + 1)
        s = burgers_homog_coeffs(1.0, 0.0, M)
        assert g.A == pytest.approx(s.A, abs=1e-12)
        assert g.C == pytest.approx(s.C, abs=1e-12)
        assert g.Bc == pytest.approx(s.Bc, abs=1e-12)
        assert g.D == pytest.approx(s.D, abs=1e-12)


def test_single_fast_mode_by_hand():
    # fast mode 2 only, sin basis: B_211 = -1/4, B_112 = 1/2, lambda_2 = 3
    c = homog_coeffs_general(burgers_model(1), 1)
    assert c.A == pytest.approx(2 * (1 / 16) / 9, abs=1e-15)  # 1/72
    assert c.Bc == pytest.approx(-2 * (-0.25) * 0.5 / 3)  # 1/12
    assert c.D == pytest.approx(4 * (1 / 16) / 9)  # 1/36
    assert c.C == 0.0


def test_noise_free_gives_nu():
    c = burgers_homog_coeffs(0.0, 0.37, 4)
    assert (c.A, c.C, c.D) == (0.37, 0.0, 0.0)
    g = homog_coeffs_general(burgers_model(4, nu=0.37, q=0.0), 4)
    assert g.A == pytest.approx(0.37)
    assert g.C == 0.0


@settings(max_examples=25)
@given(st.floats(0.1, 3.0), st.integers(1, 8))
def test_noise_scaling(q, M):
    # A - nu scales like q^2, C like q^4
    base = burgers_homog_coeffs(1.0, 0.0, M)
    c = burgers_homog_coeffs(q, 0.0, M)
    assert c.A == pytest.approx(q**2 * base.A, rel=1e-10)
    assert c.C == pytest.approx(q**4 * base.C, rel=1e-10)


def test_cauchy_property():
    # truncated coefficients approach the limit monotonically in M
    lim = burgers_homog_coeffs(1.0)
    gaps = [abs(burgers_homog_coeffs(1.0, 0.0, M).A - lim.A) for M in range(1, 40)]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-5


def test_tail_bound_holds():
    lim = burgers_homog_coeffs(1.0, tol=1e-12)
    for K in (10, 30, 100):
        c = burgers_homog_coeffs(1.0, 0.0, K)
        assert abs(c.A - lim.A) <= 1.0 / (16 * K**3) * 2 + 1e-12


def test_callable_q_needs_bound():
    with pytest.raises(ValueError):
        burgers_homog_coeffs(lambda k: 1.0 / k)
    c = burgers_homog_coeffs(lambda k: np.ones_like(k, dtype=float), q_bound=1.0, tol=1e-8)
    assert abs(c.A - 0.0026744369) < 1e-7


def test_finite_q_sequence_is_exact():
    q = [0.0, 1.0, 1.0, 1.0]  # modes 1..4
    assert burgers_homog_coeffs(q).A == pytest.approx(burgers_homog_coeffs(q, 0.0, 10).A, abs=1e-15)


def test_centering_violation_raises():
    m = custom_model([2.0], [1.0], [(2, 2, 1, 1.0)])
    with pytest.raises(CenteringError, match="B\\[2,2,1\\]"):
        homog_coeffs_general(m, 1)


def test_ks_limit_converges():
    c = limit_coeffs(ks_model(2))
    assert c.tail_bound < 1e-6
    assert c.A > 0 and c.C > 0


def test_coeffs_validation():
    with pytest.raises(ValueError):
        AmplitudeCoeffs(0.0, 0.0, -1.0, 0.0)


@given(st.floats(-5, 5))
def test_drift_odd_diffusion_even(x):
    c = burgers_homog_coeffs(1.0, 0.1, 3)
    a, s = amplitude_drift_diffusion(c, x)
    a2, s2 = amplitude_drift_diffusion(c, -x)
    assert a == pytest.approx(-a2, abs=1e-15)
    assert s == pytest.approx(s2)
    assert amplitude_drift_diffusion(c, 0.0)[0] == 0.0


# -- averaged equation ---------------------------------------------------------


def test_tan_solution():
    c = AveragedCoeffs(1.0, 1.0)
    t = np.linspace(0, 1.5, 7)
    np.testing.assert_allclose(averaged_closed_form(c, 0.0, t), np.tan(t), rtol=1e-13)
    assert blow_up_time(c, 0.0) == pytest.approx(math.pi / 2)


@pytest.mark.parametrize(
    "D,E,nu,x0",
    [(1.0, 1.0, 0.0, 0.3), (1.0, -1.0, 0.0, 0.2), (1.0, 0.0, 0.0, 0.5), (-0.5, 2.0, 0.3, 0.1),
     (0.0, 0.5, 0.0, 1.0), (0.0, 0.5, -0.4, 1.0), (2.0, 0.5, -1.0, -0.2)],
)
def test_closed_form_solves_ode(D, E, nu, x0):
    # oracle: tight-tolerance Runge-Kutta integration
    from scipy.integrate import solve_ivp

    c = AveragedCoeffs(D, E, nu)
    T = min(1.0, 0.5 * blow_up_time(c, x0))
    sol = solve_ivp(lambda t, x: c.drift(x), (0, T), [x0], rtol=1e-11, atol=1e-12, dense_output=True)
    t = np.linspace(0, T, 9)
    np.testing.assert_allclose(averaged_closed_form(c, x0, t), sol.sol(t)[0], atol=1e-8)


def test_closed_form_past_blow_up():
    with pytest.raises(ValueError, match="blow-up"):
        averaged_closed_form(AveragedCoeffs(1.0, 1.0), 0.0, 2.0)


def test_averaged_coeffs_custom():
    m = custom_model([2.0, 5.0], [1.0, 1.0], [(1, 1, 1, 1.0), (2, 2, 1, 3.6), (3, 3, 1, 1.0)])
    c = averaged_coeffs(m, 2)
    assert c.D_adv == 1.0
    assert c.E_adv == pytest.approx(0.9 + 0.1)


def test_burgers_average_trivial():
    c = averaged_coeffs(burgers_model(3), 3)
    assert c.D_adv == 0.0 and c.E_adv == 0.0


@given(st.floats(0.1, 10), st.floats(0.1, 3), st.one_of(st.none(), st.floats(0.01, 0.9)))
def test_ou_variance(lam, q, frac):
    h = None if frac is None else frac * 2 / lam
    v = ou_stationary_variance(lam, q, h)
    if h is None:
        assert v == pytest.approx(q * q / (2 * lam))
    else:
        # fixed point of v = (1 - h lam)^2 v + h q^2
        assert v == pytest.approx((1 - h * lam) ** 2 * v + h * q * q, rel=1e-10)


def test_ou_variance_unstable():
    with pytest.raises(ValueError):
        ou_stationary_variance(8.0, 1.0, 0.25)
