"""Per-realisation link physics: calibration, interference coefficient,
power loss and CR rate.

All functions broadcast over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import area_uniform_radius
from .numerics import DomainError, RandomStream

SNR_TARGET_DB = 5.0
SNR_COVERAGE = 0.95
CALIBRATION_STREAM = 1 << 41
CALIBRATION_CHECK_STREAM = (1 << 41) | 1
MIN_CALIBRATION_SAMPLES = 100_000


@dataclass
class FadingSample:
    """Unit-mean exponential power draws for the PP, PC, CP and CC links."""

    p_sq: np.ndarray
    g_sq: np.ndarray
    f_sq: np.ndarray
    c_sq: np.ndarray

    def __getitem__(self, idx):
        return FadingSample(self.p_sq[idx], self.g_sq[idx], self.f_sq[idx], self.c_sq[idx])


def sample_fading(stream, n):
    e = stream.exponential((4, n))
    return FadingSample(p_sq=e[0], g_sq=e[1], f_sq=e[2], c_sq=e[3])


@dataclass
class ChannelSample:
    """Derived per-realisation quantities.

    ``alpha``, ``alpha_approx`` and ``rate_cr`` are NaN wherever
    ``low_interference`` is False.
    """

    a: np.ndarray
    s_sq: np.ndarray
    t_sq: np.ndarray
    alpha: np.ndarray
    alpha_approx: np.ndarray
    rate_cr: np.ndarray
    low_interference: np.ndarray


# ---------------------------------------------------------------------------
# calibration


PATH_LOSS = "path_loss"
SHADOWING = "shadowing"
COMPOSITE = "composite"
CALIBRATION_BASES = (PATH_LOSS, SHADOWING, COMPOSITE)


def pp_composite(params, stream, n, basis=PATH_LOSS):
    """n draws of the PP-link gain (without A_p) that the SNR criterion sees.

    ``path_loss``: r_pp^-gamma; ``shadowing``: e^X_pp r_pp^-gamma;
    ``composite``: e^X_pp r_pp^-gamma |p|^2.  The same three variates are
    consumed whatever the basis.
    """
    if basis not in CALIBRATION_BASES:
        raise DomainError(f"unknown calibration basis {basis!r}")
    u = stream.uniform(n)
    z = stream.normal(n)
    e = stream.exponential(n)
    gain = np.power(area_uniform_radius(u, params.R_0, params.R_p), -params.gamma)
    if basis != PATH_LOSS:
        gain = gain * np.exp(params.sigma_sf * z)
    if basis == COMPOSITE:
        gain = gain * e
    return gain


def calibrate(params, master_seed, n=1_000_000, basis=PATH_LOSS, stream_id=CALIBRATION_STREAM):
    """Return (A_p, A_c) such that the PP-link SNR is >= 5 dB 95% of the time.

    A_p comes from the empirical 5% quantile of the PP gain (see
    ``pp_composite`` for the bases) over ``n`` draws from the dedicated
    calibration stream; A_c follows the equal cell-edge power rule
    A_c = A_p (R_p/R_c)^-gamma.
    """
    if n < MIN_CALIBRATION_SAMPLES:
        raise DomainError(f"calibrate: need at least {MIN_CALIBRATION_SAMPLES} samples, got {n}")
    q = pp_composite(params, RandomStream(master_seed, stream_id), n, basis)
    q05 = float(np.quantile(q, 1.0 - SNR_COVERAGE))
    A_p = 10.0 ** (SNR_TARGET_DB / 10.0) * params.N_p / (params.P_p * q05)
    A_c = A_p * (params.R_p / params.R_c) ** (-params.gamma)
    return A_p, A_c


def pp_snr_db(params, stream, n, basis=PATH_LOSS):
    """Interference-free PP-link SNR in dB for fresh draws (needs A_p)."""
    params.require_gains()
    q = pp_composite(params, stream, n, basis)
    return 10.0 * np.log10(params.P_p * params.A_p * q / params.N_p)


# ---------------------------------------------------------------------------
# per-realisation quantities


def interference_coefficient(drop, fading, params):
    """Interference coefficient a; the low-interference regime is a < 1.

    Written without the A_c factors (they cancel), so a does not depend on
    A_c, P_c or P_p.
    """
    log_a = 0.5 * (
        math.log(params.N_c / params.N_p)
        + drop.X_cp - drop.X_cc
        - params.gamma * (np.log(drop.r_cp) - np.log(drop.r_cc))
        + np.log(fading.f_sq) - np.log(fading.c_sq)
    )
    return np.exp(log_a)


def _positive(name, *values):
    for v in values:
        arr = np.asarray(v, dtype=float)
        if np.isnan(arr).any() or (arr <= 0).any():
            raise DomainError(f"{name}: arguments must be > 0")


def power_loss_exact(s_sq, t_sq):
    """Fraction of CR power spent relaying the PU message.

    Uses sqrt(1+x) - 1 = x / (sqrt(1+x) + 1) to remove the cancellation at
    small t_sq; the result reduces to s_sq t_sq / (1 + sqrt(1 + t_sq(1+s_sq)))^2.
    """
    _positive("power_loss_exact", s_sq, t_sq)
    s_sq = np.asarray(s_sq, dtype=float)
    t_sq = np.asarray(t_sq, dtype=float)
    root = np.sqrt(1.0 + t_sq * (1.0 + s_sq))
    out = s_sq * t_sq / (1.0 + root) ** 2
    return float(out) if out.ndim == 0 else out


def power_loss_approx(s_sq, t_sq):
    """Small-signal approximation s_sq t_sq / 4 (unbounded)."""
    _positive("power_loss_approx", s_sq, t_sq)
    out = 0.25 * np.asarray(s_sq, dtype=float) * np.asarray(t_sq, dtype=float)
    return float(out) if out.ndim == 0 else out


def cr_rate(gamma_cc, c_sq, alpha, params):
    """CR rate in bits per channel use after diverting ``alpha`` of its power."""
    alpha = np.asarray(alpha, dtype=float)
    if np.isnan(alpha).any() or (alpha < 0).any() or (alpha >= 1).any():
        raise DomainError("cr_rate: alpha must lie in [0, 1)")
    snr = np.asarray(gamma_cc, dtype=float) * np.asarray(c_sq, dtype=float) * (1.0 - alpha) * params.P_c / params.N_c
    out = np.log1p(snr) / math.log(2.0)
    return float(out) if out.ndim == 0 else out


def snr_terms(drop, fading, params):
    """(|s|^2, |t|^2): PU and CR signal SNRs at the PU receiver."""
    s_sq = params.P_p * drop.G_pp * fading.p_sq / params.N_p
    t_sq = params.P_c * drop.G_cp * fading.f_sq / params.N_p
    return s_sq, t_sq


def sample_channel(drop, fading, params):
    a = np.asarray(interference_coefficient(drop, fading, params), dtype=float)
    s_sq, t_sq = (np.broadcast_to(np.asarray(v, dtype=float), a.shape)
                  for v in snr_terms(drop, fading, params))
    low = a < 1.0
    alpha = np.full(a.shape, np.nan)
    alpha_approx = np.full(a.shape, np.nan)
    rate = np.full(a.shape, np.nan)
    if low.any():
        alpha[low] = power_loss_exact(s_sq[low], t_sq[low])
        alpha_approx[low] = power_loss_approx(s_sq[low], t_sq[low])
        g_cc = np.broadcast_to(np.asarray(drop.G_cc, dtype=float), a.shape)
        c_sq = np.broadcast_to(np.asarray(fading.c_sq, dtype=float), a.shape)
        rate[low] = cr_rate(g_cc[low], c_sq[low], alpha[low], params)
    return ChannelSample(a=a, s_sq=s_sq, t_sq=t_sq, alpha=alpha, alpha_approx=alpha_approx,
                         rate_cr=rate, low_interference=low)
