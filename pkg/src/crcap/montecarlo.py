"""Monte Carlo experiment engines with reproducible chunked sampling.

Every experiment splits its sample budget into fixed-size chunks; chunk k
draws from stream id ``base + k`` of the master seed, and per-chunk partial
results are merged in chunk order.  Results therefore do not depend on the
number of worker threads.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from types import SimpleNamespace

import numpy as np

from . import analytic
from .channel import (
    CALIBRATION_BASES,
    CALIBRATION_CHECK_STREAM,
    PATH_LOSS,
    SNR_TARGET_DB,
    calibrate,
    cr_rate,
    interference_coefficient,
    pp_snr_db,
    sample_channel,
    sample_fading,
)
from .geometry import ParameterError, SystemParams, area_uniform_radius, make_drops
from .numerics import EmpiricalCdf, RandomStream, bessel_k, ks_distance, ks_two_sample, one_minus_x_k1

DEFAULT_SEED = 20080601
CHUNK_SIZE = 1 << 16
MIN_ACCEPTED = 100
HIST_BINS = 60
N_AVERAGING_DROPS = 1000
CDF_GRID_POINTS = 200

MAIN_STREAM_BASE = 0
INDEPENDENT_STREAM_BASE = 1 << 40
DROP_STREAM = 1 << 42
AVERAGING_STREAM = 1 << 43

SWEEP_AXES = {f.name for f in fields(SystemParams)} - {"A_p", "A_c"} | {"rc_ratio", "beta_pw"}


class InsufficientSamplesError(RuntimeError):
    """Too few samples survived the conditioning to form an estimate."""


@dataclass
class Samples:
    n: int = 1_000_000
    n_fading: int = 100_000
    n_drops: int = 5
    n_calibration: int = 1_000_000

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ParameterError(f"samples.{f.name}", "must be an integer >= 1")


@dataclass
class ExperimentConfig:
    experiment: str
    params: SystemParams = field(default_factory=SystemParams)
    sweep: dict = field(default_factory=dict)
    samples: Samples = field(default_factory=Samples)
    seed: int = DEFAULT_SEED
    output: str = "results"
    calibration: str = PATH_LOSS

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ParameterError("experiment", f"unknown experiment {self.experiment!r}")
        if self.calibration not in CALIBRATION_BASES:
            raise ParameterError("calibration", f"must be one of {', '.join(CALIBRATION_BASES)}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ParameterError("seed", "must be an integer in [0, 2^64)")
        for axis, values in self.sweep.items():
            if axis not in SWEEP_AXES:
                raise ParameterError(f"sweep.{axis}", "not a sweepable parameter")
            if not values:
                raise ParameterError(f"sweep.{axis}", "needs at least one value")
        # surface invalid sweep values at configuration time
        for point in self.points():
            apply_point(self.params, point)

    def points(self):
        """Sweep points (dicts axis -> value), first axis outermost."""
        axes = list(self.sweep)
        if not axes:
            return [{}]
        return [dict(zip(axes, combo)) for combo in itertools.product(*(self.sweep[a] for a in axes))]


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"{self.name}: row width {len(row)} != {len(self.columns)} columns")

    def add(self, row):
        if len(row) != len(self.columns):
            raise ValueError(f"{self.name}: row width {len(row)} != {len(self.columns)} columns")
        self.rows.append([float(v) for v in row])

    def column(self, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])


# ---------------------------------------------------------------------------
# sweep handling


def apply_point(params, point):
    """Return (params, beta_pw) for a sweep point."""
    updates = {k: float(v) for k, v in point.items() if k not in ("rc_ratio", "beta_pw")}
    if "rc_ratio" in point:
        updates["R_c"] = float(point["rc_ratio"]) * updates.get("R_p", params.R_p)
    beta_pw = float(point.get("beta_pw", 1.0))
    if not beta_pw > 0:
        raise ParameterError("sweep.beta_pw", "power inflation factor must be > 0")
    try:
        new = replace(params, **updates)
    except ParameterError as exc:
        raise ParameterError(f"sweep.{exc.field}", str(exc)) from None
    if beta_pw != 1.0:
        new = replace(new, P_c=new.P_c * beta_pw)
    return new, beta_pw


@lru_cache(maxsize=256)
def _calibrated_gain(R_0, R_p, gamma, sigma_db, N_p, P_p, seed, n, basis):
    probe = SystemParams(R_0=R_0, R_p=R_p, R_c=R_p, gamma=gamma, sigma_db=sigma_db, N_p=N_p, P_p=P_p)
    return calibrate(probe, seed, n, basis)[0]


def resolve_gains(params, seed, n_calibration, basis=PATH_LOSS):
    """Fill A_p by calibration (unless given) and A_c by the cell-edge rule (unless given)."""
    A_p = params.A_p
    if A_p is None:
        A_p = _calibrated_gain(params.R_0, params.R_p, params.gamma, params.sigma_db,
                               params.N_p, params.P_p, seed, n_calibration, basis)
    return params.with_gains(A_p, params.A_c)


def _point_params(config, point):
    params, _ = apply_point(config.params, point)
    return resolve_gains(params, config.seed, config.samples.n_calibration, config.calibration)


# ---------------------------------------------------------------------------
# chunked sampling


def _chunk_sizes(n):
    full, rest = divmod(n, CHUNK_SIZE)
    return [CHUNK_SIZE] * full + ([rest] if rest else [])


def _parallel_map(fn, *iterables, workers=1):
    if workers <= 1:
        return list(map(fn, *iterables))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *iterables))


def map_chunks(fn, n, workers=1):
    """[fn(k, size) for each chunk k], evaluated on up to ``workers`` threads."""
    sizes = _chunk_sizes(n)
    return _parallel_map(fn, range(len(sizes)), sizes, workers=workers)


def draw_main(params, seed, k, size):
    """Drops and fading for main-stream chunk k (shared by all experiments)."""
    stream = RandomStream(seed, MAIN_STREAM_BASE + k)
    drops = make_drops(params, stream, size)
    fading = sample_fading(stream, size)
    return drops, fading


@dataclass
class Moments:
    """Associative (count, sum, sum of squares) accumulator."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    @classmethod
    def of(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values.size, float(values.sum()), float(np.dot(values, values)))

    def __add__(self, other):
        return Moments(self.count + other.count, self.total + other.total, self.total_sq + other.total_sq)

    @property
    def mean(self):
        return self.total / self.count if self.count else math.nan

    @property
    def stderr(self):
        if self.count < 2:
            return math.nan
        var = max(self.total_sq / self.count - self.mean ** 2, 0.0) * self.count / (self.count - 1)
        return math.sqrt(var / self.count)


def merge(parts):
    out = Moments()
    for p in parts:
        out = out + p
    return out


def bernoulli_stderr(p, n):
    return math.sqrt(p * (1.0 - p) / n)


def _require(count, what, point):
    if count < MIN_ACCEPTED:
        raise InsufficientSamplesError(
            f"only {count} accepted samples for {what} at sweep point {point or 'defaults'}"
        )


def _axis_columns(config):
    return list(config.sweep)


def _axis_values(config, point):
    return [point[a] for a in config.sweep]


# ---------------------------------------------------------------------------
# experiments


def estimate_low_interference(config, workers=1):
    """Monte Carlo P(a<1) under the exact geometry and under the independent
    distance-ratio model, next to the analytic value."""
    extra = [a for a in config.sweep if a not in ("sigma_db", "gamma")]
    table = ResultTable(
        "low_interference",
        ["sigma_db", "gamma"] + extra + ["p_analytic", "p_mc", "stderr", "p_mc_indep", "stderr_indep", "n"],
        metadata={"seed": config.seed, "n": config.samples.n},
    )
    n = config.samples.n
    for point in config.points():
        params = _point_params(config, point)

        def exact_chunk(k, size):
            drops, fading = draw_main(params, config.seed, k, size)
            return int(np.count_nonzero(interference_coefficient(drops, fading, params) < 1.0))

        def indep_chunk(k, size):
            stream = RandomStream(config.seed, INDEPENDENT_STREAM_BASE + k)
            u = stream.uniform((2, size))
            z = stream.normal((2, size))
            e = stream.exponential((2, size))
            pseudo = SimpleNamespace(
                r_cc=area_uniform_radius(u[0], params.R_0, params.R_c),
                r_cp=area_uniform_radius(u[1], params.R_0, params.R_p),
                X_cc=params.sigma_sf * z[0], X_cp=params.sigma_sf * z[1],
            )
            fading = SimpleNamespace(f_sq=e[0], c_sq=e[1])
            return int(np.count_nonzero(interference_coefficient(pseudo, fading, params) < 1.0))

        p_mc = sum(map_chunks(exact_chunk, n, workers)) / n
        p_ind = sum(map_chunks(indep_chunk, n, workers)) / n
        table.add([params.sigma_db, params.gamma] + [point[a] for a in extra] + [
            analytic.prob_low_interference(params),
            p_mc, bernoulli_stderr(p_mc, n), p_ind, bernoulli_stderr(p_ind, n), n,
        ])
    return [table]


def _accepted_alpha(params, seed, n, workers):
    """Per-chunk accepted (alpha | a<1) and (alpha_approx | a<1, alpha_approx<1)."""

    def chunk(k, size):
        drops, fading = draw_main(params, seed, k, size)
        ch = sample_channel(drops, fading, params)
        low = ch.low_interference
        alpha = ch.alpha[low]
        approx = ch.alpha_approx[low]
        assert np.all(ch.a[low] < 1.0)
        return alpha, approx[approx < 1.0]

    parts = map_chunks(chunk, n, workers)
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
            merge(Moments.of(p[0]) for p in parts), merge(Moments.of(p[1]) for p in parts))


def _histogram_cdf(density, edges):
    return np.cumsum(density * np.diff(edges))


def alpha_statistics(config, workers=1):
    """Histograms of log10(alpha) and log10(alpha_hat), conditioned on a<1,
    plus the conditional mean of alpha per sweep point."""
    axes = _axis_columns(config)
    pdf_table = ResultTable(
        "alpha_pdf",
        axes + ["bin_lo", "bin_hi", "log10_alpha", "pdf_alpha", "pdf_alpha_hat", "pdf_alpha_hat_analytic"],
        metadata={"seed": config.seed, "n": config.samples.n, "bins": HIST_BINS,
                  "analytic_drops": N_AVERAGING_DROPS},
    )
    mean_table = ResultTable(
        "mean_alpha",
        axes + [c for c in ["rc_ratio"] if c not in axes] + ["mean_alpha", "stderr", "mean_alpha_hat", "stderr_hat",
                "n_accepted", "n_accepted_hat", "hist_cdf_distance"],
        metadata={"seed": config.seed, "n": config.samples.n},
    )
    for point in config.points():
        params = _point_params(config, point)
        alpha, alpha_hat, m_alpha, m_hat = _accepted_alpha(params, config.seed, config.samples.n, workers)
        _require(alpha.size, "alpha", point)
        _require(alpha_hat.size, "alpha_hat", point)
        la, lh = np.log10(alpha), np.log10(alpha_hat)
        lo = min(la.min(), lh.min())
        hi = max(la.max(), lh.max())
        edges = np.linspace(lo, hi, HIST_BINS + 1)
        pdf_a, _ = np.histogram(la, bins=edges, density=True)
        pdf_h, _ = np.histogram(lh, bins=edges, density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        pdf_an = averaged_log10_alpha_hat_pdf(centers, params, config.seed)
        dist = float(np.max(np.abs(_histogram_cdf(pdf_a, edges) - _histogram_cdf(pdf_h, edges))))
        for i in range(HIST_BINS):
            pdf_table.add(_axis_values(config, point) + [edges[i], edges[i + 1], centers[i],
                                                         pdf_a[i], pdf_h[i], pdf_an[i]])
        ratio = [] if "rc_ratio" in axes else [params.R_c / params.R_p]
        mean_table.add(_axis_values(config, point) + ratio + [
            m_alpha.mean, m_alpha.stderr, m_hat.mean, m_hat.stderr,
            m_alpha.count, m_hat.count, dist,
        ])
    return [pdf_table, mean_table]


def averaged_log10_alpha_hat_pdf(log10_x, params, seed, n_drops=N_AVERAGING_DROPS):
    """Density of log10(alpha_hat), averaged with equal weight over random drops."""
    drops = make_drops(params, RandomStream(seed, AVERAGING_STREAM), n_drops)
    prod = (params.P_p * drops.G_pp / params.N_p) * (params.P_c * drops.G_cp / params.N_p)
    x = 10.0 ** np.asarray(log10_x, dtype=float)
    ok = (x > 0) & (x < 1)
    out = np.zeros_like(x)
    if ok.any():
        # density of alpha_hat at x, times the Jacobian x ln 10
        z = np.sqrt(16.0 * x[ok][None, :] / prod[:, None])
        norm = one_minus_x_k1(np.sqrt(16.0 / prod))[:, None]
        dens = (8.0 / prod[:, None]) * bessel_k(0, z) / norm
        out[ok] = np.mean(dens, axis=0) * x[ok] * math.log(10.0)
    return out


HAT_BATCH = 1 << 20
MAX_HAT_DRAWS = 1 << 31


def _fixed_drop_samples(drop, params, seed, i, n_target):
    """Samples for fixed drop ``i``, each from its own stream.

    alpha_hat: the approximation under unconditional fading, truncated to
    < 1 by rejection, drawn until ``n_target`` values are accepted.
    alpha: the exact power loss conditioned on a < 1, also ``n_target`` values.
    """
    law = analytic.AlphaApproxLaw.from_drop(drop, params)
    scale = 0.25 * law.mu_s * law.mu_t
    hat_stream = RandomStream(seed, DROP_STREAM | (2 * i + 1))
    parts, accepted, drawn = [], 0, 0
    while accepted < n_target and drawn < MAX_HAT_DRAWS:
        e = hat_stream.exponential((2, HAT_BATCH))
        approx = scale * e[0] * e[1]
        parts.append(approx[approx < 1.0])
        accepted += parts[-1].size
        drawn += HAT_BATCH
    hat = np.concatenate(parts)[:n_target]

    exact_stream = RandomStream(seed, DROP_STREAM | (2 * i + 2))
    parts, accepted = [], 0
    for _ in range(MAX_HAT_DRAWS // max(n_target, 1)):
        ch = sample_channel(drop, sample_fading(exact_stream, n_target), params)
        parts.append(ch.alpha[ch.low_interference])
        accepted += parts[-1].size
        if accepted >= n_target:
            break
    return hat, np.concatenate(parts)[:n_target]


def alpha_cdf_per_drop(config, workers=1):
    """For a few fixed drops: empirical CDFs of alpha (a<1) and of the
    truncated approximation, against the analytic truncated law."""
    axes = _axis_columns(config)
    curves = ResultTable(
        "alpha_cdf_drops",
        axes + ["drop", "log10_x", "cdf_alpha_exact", "cdf_alpha_hat_mc", "cdf_alpha_hat_analytic"],
        metadata={"seed": config.seed, "n_fading": config.samples.n_fading, "n_drops": config.samples.n_drops},
    )
    summary = ResultTable(
        "alpha_cdf_drops_summary",
        axes + ["drop", "gamma_pp", "gamma_cp", "gamma_cc", "mu_s", "mu_t",
                "ks_alpha_hat", "ks_alpha_exact", "n_accepted_hat", "n_accepted_exact"],
        metadata=dict(curves.metadata),
    )
    n_f = config.samples.n_fading
    for point in config.points():
        params = _point_params(config, point)
        drops = make_drops(params, RandomStream(config.seed, DROP_STREAM), config.samples.n_drops)

        def one_drop(i):
            return _fixed_drop_samples(drops[i], params, config.seed, i, n_f)

        results = _parallel_map(one_drop, range(config.samples.n_drops), workers=workers)
        for i, (hat, exact) in enumerate(results):
            drop = drops[i]
            law = analytic.AlphaApproxLaw.from_drop(drop, params)
            _require(hat.size, f"alpha_hat of drop {i}", point)
            _require(exact.size, f"alpha of drop {i}", point)

            def cdf(x, law=law):
                return analytic.alpha_hat_cdf(np.clip(x, 0.0, 1.0), law)

            lo = math.floor(np.log10(min(np.quantile(hat, 1e-3), np.quantile(exact, 1e-3))))
            grid = np.linspace(lo, 0.0, CDF_GRID_POINTS)
            x = 10.0 ** grid
            e_hat = EmpiricalCdf(hat)(x)
            e_exact = EmpiricalCdf(exact)(x)
            for row in zip(grid, e_exact, e_hat, cdf(x)):
                curves.add(_axis_values(config, point) + [i, *row])
            summary.add(_axis_values(config, point) + [
                i, drop.G_pp, drop.G_cp, drop.G_cc, law.mu_s, law.mu_t,
                ks_distance(hat, cdf), ks_distance(exact, cdf), hat.size, exact.size,
            ])
    return [curves, summary]


def _rates(params, seed, n, workers):
    """Per-chunk CR rates with exact alpha (a<1) and with the truncated
    approximation (a<1, alpha_approx<1), on common random numbers."""

    def chunk(k, size):
        drops, fading = draw_main(params, seed, k, size)
        ch = sample_channel(drops, fading, params)
        low = ch.low_interference
        keep = ch.alpha_approx[low] < 1.0
        g_cc, c_sq = drops.G_cc[low][keep], fading.c_sq[low][keep]
        rate_hat = cr_rate(g_cc, c_sq, ch.alpha_approx[low][keep], params)
        violations = int(np.count_nonzero(ch.rate_cr[low][keep] < rate_hat))
        return ch.rate_cr[low], rate_hat, violations

    return map_chunks(chunk, n, workers)


def rate_distribution(config, workers=1):
    axes = _axis_columns(config)
    curves = ResultTable("rate_cdf", axes + ["rate", "cdf_alpha", "cdf_alpha_hat"],
                         metadata={"seed": config.seed, "n": config.samples.n})
    summary = ResultTable(
        "rate_cdf_summary",
        axes + ["mean_rate", "stderr", "mean_rate_hat", "stderr_hat", "sup_distance",
                "n_accepted", "n_accepted_hat", "monotonicity_violations"],
        metadata={"seed": config.seed, "n": config.samples.n},
    )
    for point in config.points():
        params = _point_params(config, point)
        parts = _rates(params, config.seed, config.samples.n, workers)
        exact = np.concatenate([p[0] for p in parts])
        hat = np.concatenate([p[1] for p in parts])
        _require(exact.size, "rate", point)
        _require(hat.size, "rate_hat", point)
        m_exact = merge(Moments.of(p[0]) for p in parts)
        m_hat = merge(Moments.of(p[1]) for p in parts)
        violations = sum(p[2] for p in parts)
        grid = np.linspace(0.0, float(np.quantile(exact, 0.999)), CDF_GRID_POINTS)
        for r, a, b in zip(grid, EmpiricalCdf(exact)(grid), EmpiricalCdf(hat)(grid)):
            curves.add(_axis_values(config, point) + [r, a, b])
        summary.add(_axis_values(config, point) + [
            m_exact.mean, m_exact.stderr, m_hat.mean, m_hat.stderr,
            ks_two_sample(exact, hat), m_exact.count, m_hat.count, violations,
        ])
    return [curves, summary]


def mean_rate_loss(config, workers=1):
    """Mean percentage CR rate loss (alpha versus no relaying), conditioned on a<1."""
    axes = _axis_columns(config)
    table = ResultTable("rate_loss", axes + ["mean_loss_pct", "stderr", "n_accepted"],
                        metadata={"seed": config.seed, "n": config.samples.n})
    for point in config.points():
        params = _point_params(config, point)

        def chunk(k, size):
            drops, fading = draw_main(params, config.seed, k, size)
            ch = sample_channel(drops, fading, params)
            low = ch.low_interference
            full = cr_rate(drops.G_cc[low], fading.c_sq[low], 0.0, params)
            loss = 100.0 * (full - ch.rate_cr[low]) / full
            return Moments.of(loss)

        m = merge(map_chunks(chunk, config.samples.n, workers))
        _require(m.count, "rate loss", point)
        table.add(_axis_values(config, point) + [m.mean, m.stderr, m.count])
    return [table]


def power_sweep(config, workers=1):
    """Mean CR rate with P_c scaled by the power inflation factor."""
    axes = _axis_columns(config)
    if "beta_pw" not in axes:
        axes = axes + ["beta_pw"]
    table = ResultTable("power_sweep", axes + ["mean_rate", "stderr", "accept_fraction", "n_accepted"],
                        metadata={"seed": config.seed, "n": config.samples.n})
    n = config.samples.n
    masks_seen = {}
    for point in config.points():
        params = _point_params(config, point)
        _, beta_pw = apply_point(config.params, point)

        def chunk(k, size):
            drops, fading = draw_main(params, config.seed, k, size)
            ch = sample_channel(drops, fading, params)
            low = ch.low_interference
            return Moments.of(ch.rate_cr[low]), int(np.flatnonzero(low).sum())

        parts = map_chunks(chunk, n, workers)
        m = merge(p[0] for p in parts)
        _require(m.count, "mean rate", point)
        # the conditioning set must not depend on P_c
        others = tuple((a, point[a]) for a in config.sweep if a != "beta_pw")
        signature = (m.count, tuple(p[1] for p in parts))
        if masks_seen.setdefault(others, signature) != signature:
            raise AssertionError("conditioning set changed with the CR transmit power")
        row = _axis_values(config, point)
        if "beta_pw" not in config.sweep:
            row = row + [beta_pw]
        table.add(row + [m.mean, m.stderr, m.count / n, m.count])
    return [table]


def calibration_check(config, workers=1):
    """A_p, A_c per sweep point and the PP-link SNR coverage on a fresh stream."""
    axes = _axis_columns(config)
    table = ResultTable("calibration",
                        axes + ["A_p", "A_c", "snr_coverage", "stderr", "n_calibration", "n_check"],
                        metadata={"seed": config.seed, "snr_target_db": SNR_TARGET_DB,
                                  "basis": config.calibration})
    for point in config.points():
        params = _point_params(config, point)
        snr = pp_snr_db(params, RandomStream(config.seed, CALIBRATION_CHECK_STREAM), config.samples.n,
                        config.calibration)
        cov = float(np.mean(snr >= SNR_TARGET_DB))
        table.add(_axis_values(config, point) + [
            params.A_p, params.A_c, cov, bernoulli_stderr(cov, snr.size),
            config.samples.n_calibration, snr.size,
        ])
    return [table]


EXPERIMENTS = {
    "low_interference": estimate_low_interference,
    "alpha_pdf": alpha_statistics,
    "mean_alpha": alpha_statistics,
    "rate_cdf": rate_distribution,
    "alpha_cdf_drops": alpha_cdf_per_drop,
    "rate_loss": mean_rate_loss,
    "power_sweep": power_sweep,
    "calibrate": calibration_check,
}

DEFAULT_SWEEPS = {
    "low_interference": {"sigma_db": [6.0, 8.0, 10.0, 12.0], "gamma": [3.0, 3.5, 4.0]},
    "alpha_pdf": {},
    "mean_alpha": {"rc_ratio": [0.05, 0.1, 0.2, 0.3]},
    "rate_cdf": {},
    "alpha_cdf_drops": {},
    "rate_loss": {"gamma": [3.0, 3.5, 4.0]},
    "power_sweep": {"beta_pw": [0.5, 1.0, 2.0, 4.0, 8.0]},
    "calibrate": {},
}


def run_experiment(config, workers=1):
    return EXPERIMENTS[config.experiment](config, workers=workers)
