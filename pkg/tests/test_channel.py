import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crcap.analytic import prob_low_interference
from crcap.channel import (
    CALIBRATION_CHECK_STREAM,
    COMPOSITE,
    PATH_LOSS,
    SHADOWING,
    FadingSample,
    calibrate,
    cr_rate,
    interference_coefficient,
    power_loss_approx,
    power_loss_exact,
    pp_snr_db,
    sample_channel,
    sample_fading,
)
from crcap.geometry import SystemParams, make_drop, make_drops
from crcap.numerics import DomainError, RandomStream

PARAMS = SystemParams().with_gains(2e4)


def fading(f=1.0, c=1.0, p=1.0, g=1.0):
    return FadingSample(p_sq=np.asarray(p), g_sq=np.asarray(g), f_sq=np.asarray(f), c_sq=np.asarray(c))


def mirrored_drop(params):
    """A drop whose CP and CC links are identical."""
    d = make_drop(params, RandomStream(0, 0))
    return replace(d, r_cp=d.r_cc, X_cp=d.X_cc, G_cp=d.G_cc)


class TestCalibration:
    def test_cell_edge_ratio(self):
        A_p, A_c = calibrate(SystemParams(), 1, n=100_000)
        assert A_c / A_p == pytest.approx(10.0 ** -3.5, rel=1e-12)

    def test_doubling_pp_halves_ap(self):
        a1, _ = calibrate(SystemParams(), 5, n=100_000)
        a2, _ = calibrate(SystemParams(P_p=2.0), 5, n=100_000)
        assert a2 == pytest.approx(a1 / 2, rel=1e-14)

    def test_too_few_samples(self):
        with pytest.raises(DomainError):
            calibrate(SystemParams(), 1, n=99_999)

    def test_unknown_basis(self):
        with pytest.raises(DomainError):
            calibrate(SystemParams(), 1, n=100_000, basis="median")

    @pytest.mark.parametrize("basis", [PATH_LOSS, SHADOWING, COMPOSITE])
    def test_fresh_coverage(self, basis):
        A_p, A_c = calibrate(SystemParams(), 12, n=200_000, basis=basis)
        params = SystemParams().with_gains(A_p, A_c)
        snr = pp_snr_db(params, RandomStream(12, CALIBRATION_CHECK_STREAM), 200_000, basis)
        assert np.mean(snr >= 5.0) == pytest.approx(0.95, abs=0.003)

    def test_basis_ordering(self):
        # the more variability the criterion sees, the larger the required gain
        gains = [calibrate(SystemParams(), 3, n=200_000, basis=b)[0] for b in (PATH_LOSS, SHADOWING, COMPOSITE)]
        assert gains[0] < gains[1] < gains[2]


class TestInterferenceCoefficient:
    def test_identical_links(self):
        assert interference_coefficient(mirrored_drop(PARAMS), fading(), PARAMS) == pytest.approx(1.0)

    def test_noise_ratio(self):
        p = replace(PARAMS, N_p=4.0, N_c=1.0)
        assert interference_coefficient(mirrored_drop(p), fading(0.7, 0.7), p) == pytest.approx(0.5)

    def test_matches_gain_form(self):
        d = make_drops(PARAMS, RandomStream(2, 0), 1000)
        fd = sample_fading(RandomStream(2, 1), 1000)
        a = interference_coefficient(d, fd, PARAMS)
        ref = np.sqrt(PARAMS.N_c * d.G_cp * fd.f_sq) / np.sqrt(PARAMS.N_p * d.G_cc * fd.c_sq)
        assert np.allclose(a, ref, rtol=1e-12)

    @pytest.mark.parametrize("beta", [0.01, 3.0, 1e4])
    def test_independent_of_cr_power(self, beta):
        d = make_drops(PARAMS, RandomStream(2, 2), 100)
        fd = sample_fading(RandomStream(2, 3), 100)
        scaled = replace(PARAMS, P_c=beta, A_c=PARAMS.A_c * 7.0)
        assert np.array_equal(interference_coefficient(d, fd, PARAMS), interference_coefficient(d, fd, scaled))


class TestPowerLoss:
    def test_unit_pair(self):
        assert power_loss_exact(1.0, 1.0) == pytest.approx(((math.sqrt(3) - 1) / 2) ** 2, rel=1e-15)
        assert power_loss_exact(1.0, 1.0) == pytest.approx(0.13397459621556135, rel=1e-14)
        assert power_loss_approx(1.0, 1.0) == 0.25

    def test_strong_pu_signal(self):
        # reference value from 50-digit evaluation of the defining formula
        assert power_loss_exact(1e6, 1.0) == pytest.approx(0.998001001996999, rel=1e-13)
        assert power_loss_exact(1e6, 1.0) < 1.0

    def test_tiny_t_no_cancellation(self):
        assert power_loss_exact(3.0, 1e-12) == pytest.approx(7.4999999999850201763e-13, rel=1e-13)
        assert power_loss_exact(1.0, 1e-300) == pytest.approx(0.25e-300, rel=1e-12)

    def test_vanishing_pu_signal(self):
        assert power_loss_exact(1e-300, 1.0) < 1e-299

    @pytest.mark.parametrize("s,t", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0), (math.nan, 1.0)])
    def test_domain(self, s, t):
        with pytest.raises(DomainError):
            power_loss_exact(s, t)
        with pytest.raises(DomainError):
            power_loss_approx(s, t)

    def test_bounds_over_log_uniform_pairs(self):
        u = RandomStream(8, 0).uniform((2, 1_000_000))
        s, t = 10.0 ** (-8 + 16 * u[0]), 10.0 ** (-8 + 16 * u[1])
        alpha = power_loss_exact(s, t)
        assert np.all((alpha > 0) & (alpha < 1))
        assert np.all(alpha <= power_loss_approx(s, t))

    def test_taylor_regime(self):
        u = RandomStream(8, 1).uniform((2, 200_000))
        s = 10.0 ** (-4 + 8 * u[0])
        t = 0.01 * u[1] / (1 + s)
        rel = np.abs(power_loss_approx(s, t) - power_loss_exact(s, t)) / power_loss_exact(s, t)
        assert rel.max() < 0.01

    def test_monotone_grid(self):
        g = np.logspace(-4, 4, 200)
        a = power_loss_exact(g[:, None], g[None, :])
        assert np.all(np.diff(a, axis=0) >= 0)
        assert np.all(np.diff(a, axis=1) >= 0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-12, 1e12), st.floats(1e-12, 1e12))
    def test_property_bound(self, s, t):
        a = power_loss_exact(s, t)
        assert 0 < a < 1
        assert a <= power_loss_approx(s, t) * (1 + 1e-15)


class TestRate:
    def test_unit_snr(self):
        assert cr_rate(1.0, 1.0, 0.0, SystemParams()) == pytest.approx(1.0)

    def test_half_power(self):
        assert cr_rate(2.0, 1.0, 0.5, SystemParams()) == pytest.approx(1.0)

    def test_all_power_relayed(self):
        assert cr_rate(1.0, 1.0, 1 - 1e-15, SystemParams()) < 1e-14

    @pytest.mark.parametrize("alpha", [1.0, -0.1, 2.0])
    def test_domain(self, alpha):
        with pytest.raises(DomainError):
            cr_rate(1.0, 1.0, alpha, SystemParams())


class TestSampleChannel:
    def test_composition(self):
        d = make_drops(PARAMS, RandomStream(6, 0), 20_000)
        fd = sample_fading(RandomStream(6, 1), 20_000)
        ch = sample_channel(d, fd, PARAMS)
        low = ch.low_interference
        assert low.any() and (~low).any()
        assert np.array_equal(low, ch.a < 1)
        assert np.all(np.isnan(ch.alpha[~low])) and np.all(np.isnan(ch.rate_cr[~low]))
        s_sq = PARAMS.P_p * d.G_pp * fd.p_sq / PARAMS.N_p
        t_sq = PARAMS.P_c * d.G_cp * fd.f_sq / PARAMS.N_p
        assert np.array_equal(ch.alpha[low], power_loss_exact(s_sq[low], t_sq[low]))
        assert np.array_equal(ch.alpha_approx[low], power_loss_approx(s_sq[low], t_sq[low]))
        assert np.array_equal(ch.rate_cr[low], cr_rate(d.G_cc[low], fd.c_sq[low], ch.alpha[low], PARAMS))

    def test_fixed_drop_broadcast(self):
        d = make_drop(PARAMS, RandomStream(6, 2))
        ch = sample_channel(d, sample_fading(RandomStream(6, 3), 500), PARAMS)
        assert ch.a.shape == (500,)
        assert ch.s_sq.shape == (500,)

    def test_alpha_in_unit_interval_at_defaults(self, calibrated):
        n = 1_000_000
        ch = sample_channel(make_drops(calibrated, RandomStream(1, 0), n), sample_fading(RandomStream(1, 1), n),
                            calibrated)
        a = ch.alpha[ch.low_interference]
        assert a.size > 0.9 * n
        assert np.all((a > 0) & (a < 1))
        assert np.all(a <= ch.alpha_approx[ch.low_interference])
        assert np.all(ch.rate_cr[ch.low_interference] >= 0)


def test_acceptance_fraction_matches_analytic(calibrated):
    n = 1_000_000
    d = make_drops(calibrated, RandomStream(2, 10), n)
    ch = sample_channel(d, sample_fading(RandomStream(2, 11), n), calibrated)
    p = ch.low_interference.mean()
    assert abs(p - prob_low_interference(calibrated)) < 3 * math.sqrt(p * (1 - p) / n)
