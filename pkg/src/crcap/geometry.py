"""System parameters, random transceiver placement and the distance-ratio CDF."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .numerics import DomainError

BETA_LN = math.log(10.0) / 10.0
MIN_CP_DISTANCE = 1e-9


class ParameterError(DomainError):
    """A SystemParams field violates the model's invariants."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SystemParams:
    """Scalar model parameters. Distances in metres, powers linear.

    ``A_p``/``A_c`` are the link-gain constants; leave them as None to have
    them filled in by calibration.
    """

    R_0: float = 1.0
    R_p: float = 1000.0
    R_c: float = 100.0
    gamma: float = 3.5
    sigma_db: float = 8.0
    N_p: float = 1.0
    N_c: float = 1.0
    P_p: float = 1.0
    P_c: float = 1.0
    A_p: float | None = None
    A_c: float | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None and f.name in ("A_p", "A_c"):
                continue
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise ParameterError(f.name, f"must be a finite number, got {value!r}")
        if not self.R_0 > 0:
            raise ParameterError("R_0", "must be > 0")
        if not self.R_0 < self.R_c:
            raise ParameterError("R_c", f"must exceed R_0={self.R_0}")
        if not self.R_c <= self.R_p:
            raise ParameterError("R_c", f"must not exceed R_p={self.R_p}")
        if not self.gamma > 2:
            raise ParameterError("gamma", "path-loss exponent must be > 2")
        if not self.sigma_db > 0:
            raise ParameterError("sigma_db", "must be > 0")
        for name in ("N_p", "N_c", "P_p", "P_c", "A_p", "A_c"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ParameterError(name, "must be > 0")

    @property
    def beta_ln(self):
        return BETA_LN

    @property
    def sigma_sf(self):
        """Shadowing standard deviation in natural-log units."""
        return BETA_LN * self.sigma_db

    @property
    def calibrated(self):
        return self.A_p is not None and self.A_c is not None

    def with_gains(self, A_p, A_c=None):
        """Copy with A_p set and A_c set (or derived from the cell-edge rule)."""
        if A_c is None:
            A_c = A_p * (self.R_p / self.R_c) ** (-self.gamma)
        return replace(self, A_p=A_p, A_c=A_c)

    def require_gains(self):
        if not self.calibrated:
            raise DomainError("SystemParams: A_p and A_c must be calibrated first")


@dataclass
class Drop:
    """One placement + shadowing realisation (fields may be arrays for a batch).

    The PU receiver sits at the origin. Positions are (x, y) pairs stacked
    on the last axis.
    """

    pu_tx: np.ndarray
    cr_rx: np.ndarray
    cr_tx: np.ndarray
    r_pp: np.ndarray
    r_pc: np.ndarray
    r_cc: np.ndarray
    r_cp: np.ndarray
    X_pp: np.ndarray
    X_pc: np.ndarray
    X_cc: np.ndarray
    X_cp: np.ndarray
    G_pp: np.ndarray
    G_pc: np.ndarray
    G_cc: np.ndarray
    G_cp: np.ndarray

    def __len__(self):
        return np.size(self.r_pp)

    def __getitem__(self, idx):
        return Drop(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})


def link_gain(A, X, r, gamma):
    """A * e^X * r^-gamma."""
    return A * np.exp(X) * np.power(r, -gamma)


def _annulus_points(u_radius, u_angle, r_in, r_out):
    radius = np.sqrt(r_in * r_in + u_radius * (r_out * r_out - r_in * r_in))
    angle = 2.0 * np.pi * u_angle
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)


def sample_annulus(center, r_in, r_out, stream, size=None):
    """Point(s) uniform over the area of an annulus around ``center``."""
    if not 0 <= r_in < r_out:
        raise DomainError("sample_annulus: need 0 <= r_in < r_out")
    u = stream.uniform(2 if size is None else (2, size))
    return np.asarray(center, dtype=float) + _annulus_points(u[0], u[1], r_in, r_out)


def area_uniform_radius(u, r_in, r_out):
    """Inverse CDF of the distance from the centre of an area-uniform annulus point."""
    return np.sqrt(r_in * r_in + u * (r_out * r_out - r_in * r_in))


def make_drops(params, stream, n):
    """``n`` independent drops as one array-valued Drop.

    Variates are consumed in a fixed order (6 uniforms then 4 normals per
    drop, block-wise) so that the same stream gives common random numbers
    across parameter changes.
    """
    if n < 1:
        raise DomainError("make_drops: n must be >= 1")
    params.require_gains()
    u = stream.uniform((6, n))
    z = stream.normal((4, n))
    pu_tx = _annulus_points(u[0], u[1], params.R_0, params.R_p)
    cr_rx = _annulus_points(u[2], u[3], params.R_0, params.R_p)
    cr_tx = cr_rx + _annulus_points(u[4], u[5], params.R_0, params.R_c)
    r_cp = np.hypot(cr_tx[:, 0], cr_tx[:, 1])
    # measure-zero guard: a CR transmitter on top of the PU receiver
    bad = np.flatnonzero(r_cp < MIN_CP_DISTANCE)
    while bad.size:
        redo = stream.uniform((2, bad.size))
        cr_tx[bad] = cr_rx[bad] + _annulus_points(redo[0], redo[1], params.R_0, params.R_c)
        r_cp[bad] = np.hypot(cr_tx[bad, 0], cr_tx[bad, 1])
        bad = bad[r_cp[bad] < MIN_CP_DISTANCE]
    r_pp = np.hypot(pu_tx[:, 0], pu_tx[:, 1])
    r_pc = np.hypot(*(pu_tx - cr_rx).T)
    r_cc = np.hypot(*(cr_tx - cr_rx).T)
    X = params.sigma_sf * z
    g = params.gamma
    return Drop(
        pu_tx=pu_tx, cr_rx=cr_rx, cr_tx=cr_tx,
        r_pp=r_pp, r_pc=r_pc, r_cc=r_cc, r_cp=r_cp,
        X_pp=X[0], X_pc=X[1], X_cc=X[2], X_cp=X[3],
        G_pp=link_gain(params.A_p, X[0], r_pp, g),
        G_pc=link_gain(params.A_p, X[1], r_pc, g),
        G_cc=link_gain(params.A_c, X[2], r_cc, g),
        G_cp=link_gain(params.A_c, X[3], r_cp, g),
    )


def make_drop(params, stream):
    """A single drop (scalar fields)."""
    return make_drops(params, stream, 1)[0]


@dataclass(frozen=True)
class RatioCdfCoeffs:
    """Piecewise form F(x) = c_i0 x^-2 + c_i1 + c_i2 x^2 on (theta_i, theta_{i+1}].

    ``theta`` holds theta_2..theta_6 and ``c`` is a 5x3 table whose row 0 is
    the identically-zero first branch (x <= theta_2).
    """

    theta: tuple
    c: np.ndarray
    delta: float

    def breakpoints(self):
        """(lo, hi, row) for each branch with a non-empty interval."""
        t = self.theta
        return [(t[i], t[i + 1], self.c[i + 1]) for i in range(4) if t[i] < t[i + 1]]


def ratio_cdf_coeffs(params):
    """Coefficient table for P(r_cc/r_cp < x) with r_cc, r_cp independent,
    area-uniform on [R_0, R_c] and [R_0, R_p] respectively."""
    R0, Rc, Rp = float(params.R_0), float(params.R_c), float(params.R_p)
    if not 0 < R0 < Rc <= Rp:
        raise DomainError("ratio_cdf_coeffs: need 0 < R_0 < R_c <= R_p")
    delta = (Rc**2 - R0**2) * (Rp**2 - R0**2)
    c = np.array([
        [0.0, 0.0, 0.0],
        [0.5 * R0**4 / delta, -(R0**2) * Rp**2 / delta, 0.5 * Rp**4 / delta],
        [0.5 * (R0**4 - Rc**4) / delta, Rp**2 * (Rc**2 - R0**2) / delta, 0.0],
        [-0.5 * Rc**4 / delta, 1.0 + R0**2 * Rc**2 / delta, -0.5 * R0**4 / delta],
        [0.0, 1.0, 0.0],
    ])
    theta = (R0 / Rp, Rc / Rp, 1.0, Rc / R0, math.inf)
    return RatioCdfCoeffs(theta=theta, c=c, delta=delta)


def ratio_cdf_eval(coeffs, x):
    """P(r_cc/r_cp < x) for x > 0 (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any() or (arr <= 0).any():
        raise DomainError("ratio_cdf_eval: x must be > 0")
    t2, t3, t4, t5, _ = coeffs.theta
    # branch index: x <= t2 -> 0, (t2,t3] -> 1, (t3,t4] -> 2, (t4,t5] -> 3, > t5 -> 4
    idx = np.searchsorted(np.array([t2, t3, t4, t5]), arr, side="left")
    row = coeffs.c[idx]
    x2 = arr * arr
    out = row[..., 0] / x2 + row[..., 1] + row[..., 2] * x2
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out
