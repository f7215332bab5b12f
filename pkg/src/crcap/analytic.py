"""Analytic statistics: probability of the low-interference regime, the
law of the small-signal power loss, and the fixed-gain CR rate CDF."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RatioCdfCoeffs, ratio_cdf_coeffs
from .numerics import DomainError, bessel_k, integrate, normal_cdf_diff, one_minus_x_k1

QUAD_TOL = 1e-9


@dataclass(frozen=True)
class LowInterferenceInputs:
    K: float
    gamma: float
    sigma_sf: float
    coeffs: RatioCdfCoeffs

    def __post_init__(self):
        if not self.K > 0:
            raise DomainError("K must be > 0")
        if not self.sigma_sf > 0:
            raise DomainError("sigma_sf must be > 0")

    @classmethod
    def from_params(cls, params):
        return cls(K=params.N_p / params.N_c, gamma=params.gamma,
                   sigma_sf=params.sigma_sf, coeffs=ratio_cdf_coeffs(params))


def weight_integral(m, theta, kappa, inputs, tol=QUAD_TOL):
    """Integral of w^(2m) f_W(w) over (theta, kappa), m in {-1, 0, 1}.

    W = K^(1/g) e^(X/g) Y^(-1/g) with X ~ N(0, 2 sigma_sf^2) and Y the ratio
    of two unit exponentials.  The Gaussian layer is integrated in closed
    form; the remaining integral over the ratio variable is taken in
    u = logit(v) = ln y, which keeps both ends of (0, 1) well resolved.
    """
    if m not in (-1, 0, 1):
        raise DomainError(f"weight_integral: m must be -1, 0 or 1, got {m!r}")
    if theta < 0 or not kappa > 0 or theta > kappa:
        raise DomainError("weight_integral: need 0 <= theta <= kappa")
    if theta == kappa:
        return 0.0
    g = inputs.gamma
    var = inputs.sigma_sf ** 2
    scale = math.sqrt(2.0) * inputs.sigma_sf
    shift = 4.0 * m * var / g
    log_k = math.log(inputs.K)
    log_theta = math.log(theta) if theta > 0 else -math.inf
    log_kappa = math.log(kappa) if math.isfinite(kappa) else math.inf
    gauss_factor = 4.0 * m * m * var / (g * g)

    def integrand(u):
        # log of v(1-v) dv/du weight times K^(2m/g) y^(-2m/g) times the
        # lognormal moment factor
        log_w = (2.0 * m / g) * (log_k - u) + gauss_factor - np.logaddexp(0.0, -u) - np.logaddexp(0.0, u)
        base = u - log_k
        a = (g * log_theta + base - shift) / scale
        b = (g * log_kappa + base - shift) / scale
        return np.exp(log_w) * normal_cdf_diff(a, b)

    return integrate(integrand, -math.inf, math.inf, abs_tol=tol, rel_tol=tol)


def prob_low_interference(params, tol=QUAD_TOL):
    """P(a < 1) as a finite sum of weight integrals over the ratio-CDF branches."""
    inputs = LowInterferenceInputs.from_params(params)
    total = 0.0
    for lo, hi, row in inputs.coeffs.breakpoints():
        for j in range(3):
            if row[j] != 0.0:
                total += row[j] * weight_integral(j - 1, lo, hi, inputs, tol=tol)
    if -1e-9 <= total < 0.0:
        total = 0.0
    elif 1.0 < total <= 1.0 + 1e-9:
        total = 1.0
    return total


@dataclass(frozen=True)
class AlphaApproxLaw:
    """Mean SNRs of the PP and CP links for one fixed drop."""

    mu_s: float
    mu_t: float

    def __post_init__(self):
        if not (self.mu_s > 0 and self.mu_t > 0):
            raise DomainError("AlphaApproxLaw: mu_s and mu_t must be > 0")

    @classmethod
    def from_drop(cls, drop, params):
        return cls(mu_s=float(params.P_p * drop.G_pp / params.N_p),
                   mu_t=float(params.P_c * drop.G_cp / params.N_p))

    def z(self, x):
        return np.sqrt(16.0 * np.asarray(x, dtype=float) / (self.mu_s * self.mu_t))


def alpha_approx_cdf(x, law):
    """P(alpha_approx < x) = 1 - z K1(z), z = sqrt(16 x / (mu_s mu_t))."""
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any() or (arr < 0).any():
        raise DomainError("alpha_approx_cdf: x must be >= 0")
    out = np.where(np.isinf(arr), 1.0, one_minus_x_k1(law.z(np.where(np.isinf(arr), 0.0, arr))))
    return float(out) if out.ndim == 0 else out


def alpha_hat_cdf(x, law):
    """CDF of alpha_approx conditioned on alpha_approx < 1."""
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any() or (arr < 0).any() or (arr > 1).any():
        raise DomainError("alpha_hat_cdf: x must lie in [0, 1]")
    out = alpha_approx_cdf(arr, law) / alpha_approx_cdf(1.0, law)
    out = np.minimum(out, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def alpha_hat_pdf(x, law):
    """Density of the truncated approximation on (0, 1)."""
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any() or (arr <= 0).any() or (arr >= 1).any():
        raise DomainError("alpha_hat_pdf: x must lie in (0, 1)")
    prod = law.mu_s * law.mu_t
    out = (8.0 / prod) * bessel_k(0, law.z(arr)) / alpha_approx_cdf(1.0, law)
    return float(out) if np.ndim(out) == 0 else out


def rate_cdf_fixed_gains(r, law, gamma_cc, params, tol=QUAD_TOL):
    """P(R_CR < r) for one drop, with |c|^2 a unit exponential independent of
    the truncated power-loss variable."""
    if not r >= 0:
        raise DomainError("rate_cdf_fixed_gains: r must be >= 0")
    if r == 0:
        return 0.0
    if math.isinf(r):
        return 1.0
    tau = math.expm1(r * math.log(2.0)) * params.N_c / (params.P_c * gamma_cc)
    # substitute u = prod z^2 / 16 so the density becomes z K0(z) dz whatever
    # the drop's scale; z K0(z) is below 1e-300 beyond z = 700
    prod = law.mu_s * law.mu_t
    z1 = math.sqrt(16.0 / prod)
    norm = float(one_minus_x_k1(z1))

    def integrand(z):
        u = np.minimum(prod * z * z / 16.0, 1.0)
        with np.errstate(divide="ignore"):
            miss = -np.expm1(-tau / (1.0 - u))
        return miss * z * bessel_k(0, np.maximum(z, 1e-300))

    value = integrate(integrand, 0.0, min(z1, 700.0), abs_tol=tol * norm, rel_tol=tol) / norm
    return min(max(value, 0.0), 1.0)
