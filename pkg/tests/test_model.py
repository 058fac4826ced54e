import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from cascade_spe.model import (DEVICE_PARAMS, GLASS_PARAMS, EnvironmentPair, RateParams,
                               UndefinedEnhancementError, brightness_enhancement, cascade_divdiff,
                               cw_photon_rate, enhancement_factors, exp_kernel, hz_to_per_ns,
                               intensity_model, photon_rate, photons_per_pulse, population_x,
                               population_x_peak_time, population_xx, purcell_factors,
                               radiative_split)

from oracles import convolved_numerically, ode_populations, rk4_populations

TABLE_ENV = EnvironmentPair(DEVICE_PARAMS, GLASS_PARAMS)


def rate_params():
    """Random valid parameters with rates spanning four decades."""
    return st.builds(
        lambda gx, ratio, qx, frac: RateParams(gx, gx * ratio, qx, (1 - qx) * frac),
        st.floats(0.01, 10.0), st.floats(0.05, 40.0), _fraction(), _fraction())


def _fraction():
    # exact zero or a non-denormal yield
    return st.one_of(st.just(0.0), st.floats(1e-12, 1.0))


# -- validation ------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(gamma_x=0.0, gamma_xx=1.0, qy_x=0.1, qy_xx=0.1),
    dict(gamma_x=1.0, gamma_xx=-1.0, qy_x=0.1, qy_xx=0.1),
    dict(gamma_x=1.0, gamma_xx=2.0, qy_x=1.1, qy_xx=0.0),
    dict(gamma_x=1.0, gamma_xx=2.0, qy_x=0.6, qy_xx=0.6),
    dict(gamma_x=math.inf, gamma_xx=2.0, qy_x=0.1, qy_xx=0.1),
])
def test_rate_params_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        RateParams(**kwargs)


def test_presets_match_tabulated_lifetimes():
    assert DEVICE_PARAMS.tau_x == pytest.approx(1.08, rel=1e-15)
    assert DEVICE_PARAMS.tau_xx == pytest.approx(0.159, rel=1e-15)
    assert GLASS_PARAMS.tau_x == pytest.approx(20.0, rel=1e-15)
    assert GLASS_PARAMS.tau_xx == pytest.approx(1.7, rel=1e-15)


# -- populations -----------------------------------------------------------------

def test_population_xx_examples():
    assert population_xx(0.0, DEVICE_PARAMS) == 1.0
    p = RateParams.from_lifetimes(1.0, 0.159, 0.2, 0.1)
    assert population_xx(0.159, p) == pytest.approx(math.exp(-1), rel=1e-14)
    q = RateParams(1.0, 6.2893, 0.2, 0.1)
    # direct evaluation of exp(-6.2893)
    assert population_xx(1.0, q) == pytest.approx(math.exp(-6.2893), rel=1e-14)
    assert population_xx(1.0, q) == pytest.approx(0.0018561, abs=5e-8)


def test_population_rejects_negative_time():
    with pytest.raises(ValueError):
        population_xx(-1e-3, DEVICE_PARAMS)
    with pytest.raises(ValueError):
        population_x(np.array([0.0, -1.0]), DEVICE_PARAMS)


def test_population_x_peak_device():
    t_star = population_x_peak_time(DEVICE_PARAMS)
    assert t_star == pytest.approx(0.357202, abs=5e-7)
    grid = np.linspace(0, 2, 2_000_001)
    assert grid[np.argmax(population_x(grid, DEVICE_PARAMS))] == pytest.approx(t_star, abs=2e-6)
    assert population_x(0.0, DEVICE_PARAMS) == 0.0


def test_population_x_peak_value_matches_rk4():
    t_star = population_x_peak_time(DEVICE_PARAMS)
    _, nx = rk4_populations(DEVICE_PARAMS.gamma_x, DEVICE_PARAMS.gamma_xx, t_star, 20_000)
    assert population_x(t_star, DEVICE_PARAMS) == pytest.approx(nx, rel=1e-10)
    assert nx == pytest.approx(0.71839, abs=5e-6)


def test_populations_match_ode_integration():
    rng = np.random.default_rng(11)
    gx = 10 ** rng.uniform(-2, 1, 200)
    gxx = gx * 10 ** rng.uniform(-1.3, 1.6, 200)
    s = np.linspace(0.01, 20, 400)
    nxx_ref, nx_ref = ode_populations(gx, gxx, s)
    for i in range(len(gx)):
        p = RateParams(gx[i], gxx[i], 0.3, 0.1)
        t = s / gx[i]
        # below 1e-200 the reference integrator is limited by its absolute floor
        for got, ref in ((population_xx(t, p), nxx_ref[i]), (population_x(t, p), nx_ref[i])):
            keep = ref > 1e-200
            np.testing.assert_allclose(got[keep], ref[keep], rtol=1e-6)


@pytest.mark.parametrize("gap", [0.0, 1e-12, 1e-10, 1e-8, 1e-6])
def test_population_x_continuous_through_degeneracy(gap):
    t = np.linspace(0, 15, 301)
    p = RateParams(1.0, 1.0 + gap, 0.3, 0.1)
    _, nx = rk4_populations(1.0, 1.0 + gap, 15.0, 30_000)
    assert population_x(15.0, p) == pytest.approx(nx, rel=1e-9)
    limit = t * np.exp(-t)
    np.testing.assert_allclose(population_x(t, p), limit, rtol=15 * gap + 1e-12, atol=1e-300)


@given(rate_params(), st.floats(0.05, 20.0))
@settings(max_examples=100, deadline=None)
def test_peak_time_scales_inversely(p, s):
    t1 = population_x_peak_time(p)
    q = p.scaled(s)
    assert population_x_peak_time(q) == pytest.approx(t1 / s, rel=1e-10)
    assert population_x(t1 / s, q) == pytest.approx(population_x(t1, p), rel=1e-10)


@given(rate_params())
@settings(max_examples=100, deadline=None)
def test_population_x_single_maximum(p):
    t_star = population_x_peak_time(p)
    t = np.linspace(0, 30 * max(p.tau_x, p.tau_xx), 4001)
    n = population_x(t, p)
    assert np.all(n >= 0)
    d = np.diff(n)
    rising = t[1:] <= t_star
    assert np.all(d[rising] >= -1e-15)
    assert np.all(d[~rising & (t[:-1] >= t_star)] <= 1e-15)


# -- intensity model -------------------------------------------------------------

def test_intensity_examples():
    assert intensity_model(0.0, DEVICE_PARAMS) == pytest.approx(0.097 / 0.159, rel=1e-12)
    assert intensity_model(0.0, DEVICE_PARAMS) == pytest.approx(0.610062893, rel=1e-8)
    assert intensity_model(3.0, DEVICE_PARAMS, amplitude=0.0, background=0.7) == 0.7
    # X term e^-9.259 * 0.25 * 0.9259 * 1.1726 dominates; XX term e^-62.9 is negligible
    gx, gxx = DEVICE_PARAMS.gamma_x, DEVICE_PARAMS.gamma_xx
    x_term = 0.25 * gx * gxx / (gxx - gx) * (math.exp(-gx * 10) - math.exp(-gxx * 10))
    assert intensity_model(10.0, DEVICE_PARAMS) == pytest.approx(x_term, rel=1e-12)
    assert intensity_model(10.0, DEVICE_PARAMS) == pytest.approx(2.58485e-5, rel=1e-5)


def test_intensity_late_slope_is_gamma_x():
    t = np.array([30.0, 31.0])
    i = intensity_model(t, DEVICE_PARAMS, amplitude=2.0)
    assert -np.diff(np.log(i))[0] == pytest.approx(DEVICE_PARAMS.gamma_x, rel=1e-9)


@given(rate_params())
@settings(max_examples=60, deadline=None)
def test_intensity_normalisation(p):
    f = lambda t: intensity_model(t, p)
    edge = 60 * max(p.tau_x, p.tau_xx)
    pts = [0.5 * p.tau_xx, p.tau_x, 5 * p.tau_x]
    total, _ = quad(f, 0, edge, epsabs=0, epsrel=1e-13, limit=400, points=sorted(set(pts)))
    assert total == pytest.approx(p.qy_total, rel=1e-9, abs=1e-15)


@given(rate_params())
@settings(max_examples=60, deadline=None)
def test_per_state_emission_integrates_to_qy(p):
    edge = 60 * max(p.tau_x, p.tau_xx)
    xx, _ = quad(lambda t: p.qy_xx * p.gamma_xx * population_xx(t, p), 0, edge, epsabs=0, epsrel=1e-13, limit=400)
    x, _ = quad(lambda t: p.qy_x * p.gamma_x * population_x(t, p), 0, edge, epsabs=0, epsrel=1e-13, limit=400)
    assert xx == pytest.approx(p.qy_xx, rel=1e-9, abs=1e-15)
    assert x == pytest.approx(p.qy_x, rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("sigma", [0.01, 0.05, 0.3])
@pytest.mark.parametrize("t", [0.0, 0.04, 0.2, 1.0, 4.0])
def test_irf_convolution_matches_quadrature(sigma, t):
    plain = lambda u: intensity_model(u, DEVICE_PARAMS) if u >= 0 else 0.0
    ref = convolved_numerically(plain, t, sigma)
    assert intensity_model(t, DEVICE_PARAMS, irf_sigma=sigma) == pytest.approx(ref, rel=1e-8, abs=1e-14)


def test_irf_to_zero_recovers_plain_model():
    t = np.linspace(0.1, 10, 50)
    np.testing.assert_allclose(intensity_model(t, DEVICE_PARAMS, irf_sigma=1e-6),
                               intensity_model(t, DEVICE_PARAMS), rtol=1e-5)


@pytest.mark.parametrize("sigma", [0.0, 0.05])
def test_kernel_gamma_derivatives(sigma):
    t = np.linspace(-0.2, 5, 40) if sigma else np.linspace(0, 5, 40)
    g, h = 1.7, 1e-4
    e = exp_kernel(t, g, sigma, order=3)
    for n in range(1, 4):
        fd = (exp_kernel(t, g + h, sigma, order=n - 1)[n - 1]
              - exp_kernel(t, g - h, sigma, order=n - 1)[n - 1]) / (2 * h)
        np.testing.assert_allclose(e[n], fd, rtol=1e-6, atol=1e-10)


@pytest.mark.parametrize("gap", [1e-9, 1e-6, 5e-5, 2e-4, 1e-2])
def test_divided_difference_near_degeneracy(gap):
    # exact reference by quadrature of E_x' over the rate interval: Q = -mean of dE/dgamma
    t = np.array([0.0, 0.3, 1.5, 4.0])
    gx, gxx, sigma = 1.0, 1.0 + gap, 0.05
    q = cascade_divdiff(t, gx, gxx, sigma)
    ref = [-quad(lambda g: exp_kernel(tt, g, sigma, order=1)[1], gx, gxx, epsrel=1e-13)[0] / (gxx - gx)
           for tt in t]
    np.testing.assert_allclose(q, ref, rtol=1e-9)


# -- enhancement algebra ---------------------------------------------------------

def test_purcell_table_values():
    f = purcell_factors(TABLE_ENV)
    assert f["X"] == pytest.approx(18.5185, rel=1e-5)
    assert f["XX"] == pytest.approx(10.6918, rel=1e-5)
    assert 17 <= f["X"] <= 21 and 10 <= f["XX"] <= 12
    same = purcell_factors(EnvironmentPair(DEVICE_PARAMS, DEVICE_PARAMS))
    assert same == {"X": 1.0, "XX": 1.0}


def test_radiative_split_examples():
    g_r, g_nr = radiative_split(DEVICE_PARAMS)["X"]
    assert g_r == pytest.approx(0.23148, rel=1e-4)
    assert g_nr == pytest.approx(0.69444, rel=1e-4)
    assert radiative_split(RateParams(2.0, 3.0, 1.0, 0.0))["X"] == (2.0, 0.0)
    assert radiative_split(RateParams(2.0, 3.0, 1.0, 0.0))["XX"] == (0.0, 3.0)


@given(rate_params())
@settings(max_examples=100, deadline=None)
def test_radiative_split_sums_to_total(p):
    for state, (g_r, g_nr) in radiative_split(p).items():
        assert g_r >= 0 and g_nr >= 0
        assert g_r + g_nr == pytest.approx(p.gamma(state), rel=1e-12)


def test_enhancement_table_values():
    rep = enhancement_factors(TABLE_ENV)
    assert rep["X"].radiative == pytest.approx(16.534, rel=1e-4)
    assert rep["X"].nonradiative == pytest.approx(19.290, rel=1e-4)
    assert 9 <= rep["X"].radiative <= 25 and 13 <= rep["X"].nonradiative <= 25
    same = enhancement_factors(EnvironmentPair(GLASS_PARAMS, GLASS_PARAMS))
    for s in ("X", "XX"):
        assert (same[s].purcell, same[s].radiative, same[s].nonradiative) == (1.0, 1.0, 1.0)


@given(rate_params(), st.builds(
    lambda gx, ratio, qx, qxx: RateParams(gx, gx * ratio, qx, qxx),
    st.floats(0.01, 10.0), st.floats(0.05, 40.0), st.floats(1e-4, 0.5), st.floats(1e-4, 0.5)))
@settings(max_examples=100, deadline=None)
def test_enhancement_recombines_to_total_rate(dev, ref):
    rep = enhancement_factors(EnvironmentPair(dev, ref))
    for s in ("X", "XX"):
        e = rep[s]
        total = e.radiative * e.gamma_r_ref + e.nonradiative * e.gamma_nr_ref
        assert total == pytest.approx(e.purcell * ref.gamma(s), rel=1e-12)
        assert e.gamma_r + e.gamma_nr == pytest.approx(dev.gamma(s), rel=1e-12)


@pytest.mark.parametrize("qy_x, channel", [(0.0, "radiative"), (1.0, "non-radiative")])
def test_enhancement_undefined_for_extreme_reference_qy(qy_x, channel):
    ref = RateParams(0.05, 0.6, qy_x, 0.0 if qy_x == 1.0 else 0.02)
    with pytest.raises(UndefinedEnhancementError, match=channel):
        enhancement_factors(EnvironmentPair(DEVICE_PARAMS, ref))


# -- photon rates ----------------------------------------------------------------

def test_photons_per_pulse_examples():
    assert photons_per_pulse(DEVICE_PARAMS, hz_to_per_ns(4e6)) == pytest.approx(0.25, rel=1e-12)
    matched = photons_per_pulse(DEVICE_PARAMS, DEVICE_PARAMS.gamma_x)
    assert matched == pytest.approx(0.25 * (1 - math.exp(-1)), rel=1e-12)
    assert matched == pytest.approx(0.15803, abs=5e-6)
    assert photons_per_pulse(DEVICE_PARAMS, np.inf) == 0.0
    with pytest.raises(ValueError):
        photons_per_pulse(DEVICE_PARAMS, 0.0)


def test_photon_rate_examples():
    assert photon_rate(DEVICE_PARAMS, DEVICE_PARAMS.gamma_x) == pytest.approx(1.46324e8, rel=1e-5)
    assert photon_rate(DEVICE_PARAMS, hz_to_per_ns(4e6)) == pytest.approx(1.0e6, rel=1e-9)
    assert photon_rate(DEVICE_PARAMS, 1e-12) == pytest.approx(0.25 * 1e-3, rel=1e-9)


def test_cw_photon_rate_examples():
    assert cw_photon_rate(DEVICE_PARAMS) == pytest.approx(0.25 / 1.08 * 1e9, rel=1e-12)
    assert cw_photon_rate(DEVICE_PARAMS) == pytest.approx(2.3148e8, rel=1e-4)
    assert cw_photon_rate(GLASS_PARAMS) == pytest.approx(1.4e7, rel=1e-12)
    assert cw_photon_rate(RateParams(1.0, 2.0, 0.0, 0.5)) == 0.0


@given(rate_params())
@settings(max_examples=100, deadline=None)
def test_photon_rate_monotone_and_bounded(p):
    rr = np.logspace(-4, 3, 50) * p.gamma_x
    ppp = photons_per_pulse(p, rr)
    pr = photon_rate(p, rr)
    assert np.all(np.diff(ppp) <= 1e-15) and np.all(ppp <= p.qy_x + 1e-15)
    assert np.all(np.diff(pr) >= -1e-6 * pr[1:]) and np.all(pr <= cw_photon_rate(p) * (1 + 1e-12))
    if p.qy_x > 0:
        assert photon_rate(p, 100 * p.gamma_x) / cw_photon_rate(p) > 0.99


def test_brightness_enhancement_examples():
    assert brightness_enhancement(TABLE_ENV, 0.1, 0.01) == pytest.approx(165.344, rel=1e-5)
    assert brightness_enhancement(TABLE_ENV, 0.88, 0.01) == pytest.approx(1455.03, rel=1e-5)
    same = EnvironmentPair(GLASS_PARAMS, GLASS_PARAMS)
    assert brightness_enhancement(same, 0.3, 0.3) == pytest.approx(1.0, rel=1e-15)
    assert brightness_enhancement(TABLE_ENV, 0.4, 0.02) == pytest.approx(
        2 * brightness_enhancement(TABLE_ENV, 0.2, 0.02), rel=1e-14)
    with pytest.raises(UndefinedEnhancementError):
        brightness_enhancement(TABLE_ENV, 0.5, 0.0)
