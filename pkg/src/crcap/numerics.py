"""Numerical kernels: Gaussian CDF, modified Bessel K0/K1, adaptive quadrature,
counter-based random streams and empirical distribution helpers."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

EULER_GAMMA = 0.57721566490153286061


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class ConvergenceError(ArithmeticError):
    """Adaptive quadrature ran out of budget before meeting its tolerance."""

    def __init__(self, message, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


# ---------------------------------------------------------------------------
# Gaussian CDF


def std_normal_cdf(x):
    """Standard Gaussian CDF, scalar or array. NaN raises DomainError."""
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any():
        raise DomainError("std_normal_cdf: NaN argument")
    out = ndtr(arr)
    return float(out) if out.ndim == 0 else out


def normal_cdf_diff(a, b):
    """Phi(b) - Phi(a) for a <= b, evaluated on the tail that avoids cancellation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    return np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


# ---------------------------------------------------------------------------
# Modified Bessel functions of the second kind, orders 0 and 1
#
# x <= 2: ascending series.  x > 2: Steed's continued fraction (CF2) with
# the Temme normalisation sum, which is accurate to rounding for all x >= 2.

_SERIES_TERMS = 30
_CF2_MAXIT = 150


def _series_small(x):
    """Return (I0, I1, S0, S1) series pieces for 0 < x <= 2.

    S0 = sum H_k q^k/(k!)^2 and S1 = sum (psi(k+1)+psi(k+2)) q^k/(k!(k+1)!)
    with q = x^2/4.
    """
    q = 0.25 * x * x
    t0 = np.ones_like(x)  # q^k/(k!)^2
    t1 = np.ones_like(x)  # q^k/(k!(k+1)!)
    i0 = np.zeros_like(x)
    i1s = np.zeros_like(x)
    s0 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    harmonic = 0.0
    for k in range(_SERIES_TERMS):
        if k > 0:
            harmonic += 1.0 / k
            t0 = t0 * q / (k * k)
            t1 = t1 * q / (k * (k + 1))
        psi_k1 = -EULER_GAMMA + harmonic
        psi_k2 = psi_k1 + 1.0 / (k + 1)
        i0 += t0
        i1s += t1
        s0 += harmonic * t0
        s1 += (psi_k1 + psi_k2) * t1
    return i0, 0.5 * x * i1s, s0, s1


def _k_large(x):
    """(K0, K1) for x >= 2 by Steed's method."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25
    q = np.full_like(x, a1)
    c = np.full_like(x, a1)
    a = -a1
    s = 1.0 + q * delh
    for i in range(1, _CF2_MAXIT):
        a -= 2 * i
        c = -a * c / (i + 1.0)
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = h + delh
        dels = q * delh
        s = s + dels
        if np.all(np.abs(dels / s) < 1e-17):
            break
    else:  # pragma: no cover - CF2 converges in < 60 steps for x >= 2
        raise ConvergenceError("bessel_k: continued fraction did not converge", s, None)
    h = a1 * h
    k0 = np.sqrt(np.pi / (2.0 * x)) * np.exp(-x) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def _check_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any() or (arr <= 0).any():
        raise DomainError(f"{name}: argument must be > 0")
    return arr


def bessel_k(order, x):
    """Modified Bessel function of the second kind K_order(x), order 0 or 1."""
    if order not in (0, 1):
        raise DomainError(f"bessel_k: unsupported order {order!r}")
    arr = _check_positive(x, "bessel_k")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    small = flat <= 2.0
    if small.any():
        xs = flat[small]
        i0, i1, s0, s1 = _series_small(xs)
        log_half = np.log(0.5 * xs)
        if order == 0:
            out[small] = -(log_half + EULER_GAMMA) * i0 + s0
        else:
            out[small] = 1.0 / xs + log_half * i1 - 0.25 * xs * s1
    if (~small).any():
        k0, k1 = _k_large(flat[~small])
        out[~small] = k0 if order == 0 else k1
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def one_minus_x_k1(x):
    """1 - x*K1(x) for x >= 0, without cancellation near zero."""
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any() or (arr < 0).any():
        raise DomainError("one_minus_x_k1: argument must be >= 0")
    flat = np.atleast_1d(arr).ravel()
    out = np.zeros_like(flat)
    small = (flat > 0) & (flat <= 2.0)
    if small.any():
        xs = flat[small]
        _, i1, _, s1 = _series_small(xs)
        out[small] = -xs * np.log(0.5 * xs) * i1 + 0.25 * xs * xs * s1
    big = flat > 2.0
    if big.any():
        xb = flat[big]
        out[big] = 1.0 - xb * _k_large(xb)[1]
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Adaptive quadrature

_GL_ORDER = 15
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


def _map_to_finite(f, a, b):
    """Return (g, lo, hi) so that int_a^b f = int_lo^hi g on a finite range."""
    a_inf = math.isinf(a)
    b_inf = math.isinf(b)
    if not a_inf and not b_inf:
        return f, a, b
    if a_inf and b_inf:
        def g(t):
            d = 1.0 - t * t
            return f(t / d) * (1.0 + t * t) / (d * d)
        return g, -1.0, 1.0
    if b_inf:
        def g(t):
            d = 1.0 - t
            return f(a + t / d) / (d * d)
        return g, 0.0, 1.0

    def g(t):
        return f(b - (1.0 - t) / t) / (t * t)
    return g, 0.0, 1.0


def _gl_panels(g, lo, hi):
    """Gauss-Legendre estimates for several panels at once."""
    lo = np.asarray(lo, dtype=float)[:, None]
    hi = np.asarray(hi, dtype=float)[:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) * 0.5 + half * _GL_NODES
    vals = np.asarray(g(nodes.ravel()), dtype=float).reshape(nodes.shape)
    return (vals @ _GL_WEIGHTS) * half[:, 0]


def integrate(f, a, b, abs_tol=1e-9, rel_tol=1e-9, limit=4000):
    """Adaptive bisection quadrature of a vectorised integrand.

    ``f`` must accept a 1-D array of abscissae.  Infinite endpoints are
    mapped to finite ones with a rational change of variable.  Each panel is
    integrated with a 15-point Gauss-Legendre rule, and its error is
    estimated against the sum over its two halves.  Raises ConvergenceError
    (carrying the best estimate) if ``limit`` panels do not suffice.
    """
    if math.isnan(a) or math.isnan(b) or not a < b:
        raise DomainError("integrate: need a < b")
    if abs_tol <= 0 and rel_tol <= 0:
        raise DomainError("integrate: a tolerance must be positive")
    if math.isinf(a) and a > 0:
        raise DomainError("integrate: lower limit cannot be +inf")
    g, lo, hi = _map_to_finite(f, a, b)

    def split(panels):
        # panels: list of (lo, hi, whole); returns heap entries
        los = np.array([p[0] for p in panels])
        his = np.array([p[1] for p in panels])
        mids = 0.5 * (los + his)
        halves = _gl_panels(g, np.concatenate([los, mids]), np.concatenate([mids, his]))
        n = len(panels)
        out = []
        for i, (p_lo, p_hi, whole) in enumerate(panels):
            left, right = halves[i], halves[n + i]
            refined = left + right
            err = abs(refined - whole)
            out.append((-err, p_lo, p_hi, refined, left, right))
        return out

    whole = _gl_panels(g, [lo], [hi])[0]
    heap = split([(lo, hi, whole)])
    total = heap[0][3]
    err_total = -heap[0][0]
    while True:
        if not math.isfinite(total):
            raise ConvergenceError("integrate: non-finite integrand value", total, math.inf)
        if err_total <= max(abs_tol, rel_tol * abs(total)):
            return total
        if len(heap) >= limit:
            raise ConvergenceError(
                f"integrate: {limit} panels exhausted (error {err_total:.3g})", total, err_total
            )
        neg_err, p_lo, p_hi, refined, left, right = heapq.heappop(heap)
        mid = 0.5 * (p_lo + p_hi)
        if not p_lo < mid < p_hi:
            # panel is at the resolution limit; freeze it
            heapq.heappush(heap, (0.0, p_lo, p_hi, refined, left, right))
            err_total = math.fsum(-e[0] for e in heap)
            continue
        children = split([(p_lo, mid, left), (mid, p_hi, right)])
        for child in children:
            heapq.heappush(heap, child)
        total = math.fsum(e[3] for e in heap)
        err_total = math.fsum(-e[0] for e in heap)


# ---------------------------------------------------------------------------
# Random streams

UNIFORM01 = "uniform01"
STD_NORMAL = "std_normal"
UNIT_EXPONENTIAL = "unit_exponential"

_MASK64 = (1 << 64) - 1


@dataclass
class RandomStream:
    """A reproducible random stream keyed by (master_seed, stream_id).

    Backed by the Philox-4x64 counter-based generator with the two 64-bit
    integers packed into its 128-bit key, so distinct stream ids never share
    a key and cannot overlap.
    """

    master_seed: int
    stream_id: int
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= value <= _MASK64:
                raise DomainError(f"RandomStream: {name} must be a 64-bit unsigned integer")
        key = (self.stream_id << 64) | self.master_seed
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def exponential(self, size=None):
        return self._gen.standard_exponential(size)


def sample(stream, dist, size=None):
    """Draw from ``stream``: one variate when ``size`` is None, else an array."""
    if dist == UNIFORM01:
        return stream.uniform(size)
    if dist == STD_NORMAL:
        return stream.normal(size)
    if dist == UNIT_EXPONENTIAL:
        return stream.exponential(size)
    raise DomainError(f"sample: unknown distribution {dist!r}")


# ---------------------------------------------------------------------------
# Empirical distributions


class EmpiricalCdf:
    """Right-continuous step CDF of a finite sample."""

    def __init__(self, values):
        values = np.sort(np.asarray(values, dtype=float).ravel())
        if values.size == 0:
            raise DomainError("EmpiricalCdf: empty sample")
        if np.isnan(values).any():
            raise DomainError("EmpiricalCdf: NaN in sample")
        self.values = values

    @property
    def n(self):
        return self.values.size

    def __call__(self, x):
        idx = np.searchsorted(self.values, x, side="right")
        return idx / self.n


def ks_distance(e1, f):
    """Sup-norm distance between an EmpiricalCdf and a vectorised CDF ``f``."""
    if not isinstance(e1, EmpiricalCdf):
        e1 = EmpiricalCdf(e1)
    x = e1.values
    n = e1.n
    fx = np.asarray(f(x), dtype=float)
    # for tied sample points the step jumps once, at the last copy
    upper = np.searchsorted(x, x, side="right") / n
    lower = np.searchsorted(x, x, side="left") / n
    d = max(np.max(upper - fx), np.max(fx - lower))
    return float(min(max(d, 0.0), 1.0))


def ks_two_sample(x, y):
    """Sup-norm distance between the empirical CDFs of two samples."""
    ex = EmpiricalCdf(x)
    ey = EmpiricalCdf(y)
    grid = np.concatenate([ex.values, ey.values])
    return float(np.max(np.abs(ex(grid) - ey(grid))))
