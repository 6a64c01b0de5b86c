"""Gaussian, Gamma and Rician fits of population histograms and their RMSE index."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import digamma, gammaln, polygamma, xlogy

from .ensemble import EnsembleResult, histogram_of
from .errors import DegenerateFitError, DomainError, EmptyDataError, InsufficientDataError
from .model import SPECIES

FAMILIES = ("gaussian", "gamma", "rician")

# below this argument the power series is used, above it the Hankel expansion
BESSEL_SWITCH = 20.0
RAYLEIGH_RATIO = math.pi / (4.0 - math.pi)  # mean^2 / var of a Rayleigh law


def _bessel_series(x, order):
    q = 0.25 * x * x
    term = np.ones_like(x) if order == 0 else 0.5 * x
    total = term.copy()
    for k in range(1, 200):
        term = term * q / (k * (k + order))
        total += term
        if np.all(term <= 1e-17 * total):
            break
    return total * np.exp(-x)


def _bessel_asymptotic(x, order):
    mu = 4.0 * order * order
    term = np.ones_like(x)
    total = term.copy()
    for k in range(1, 40):
        term = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total / np.sqrt(2.0 * math.pi * x)


def _bessel_e(x, order):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax < BESSEL_SWITCH
    if small.any():
        out[small] = _bessel_series(ax[small], order)
    if (~small).any():
        out[~small] = _bessel_asymptotic(ax[~small], order)
    if order == 1:
        out = np.where(x < 0, -out, out)
    return out if out.ndim else float(out)


def i0e(x):
    """Exponentially scaled modified Bessel function ``exp(-|x|) I0(x)``."""
    return _bessel_e(x, 0)


def i1e(x):
    """Exponentially scaled modified Bessel function ``exp(-|x|) I1(x)``."""
    return _bessel_e(x, 1)


def _laguerre_half(q):
    """L_{1/2}(-q) for q >= 0."""
    return (1.0 + q) * i0e(0.5 * q) + q * i1e(0.5 * q)


def rice_moment_ratio(snr):
    """mean^2 / variance of a Rice law with ``nu / sigma = snr``."""
    lag = _laguerre_half(0.5 * snr * snr)
    m2 = 0.5 * math.pi * lag * lag
    return m2 / (2.0 + snr * snr - m2)


@dataclass(frozen=True)
class FitFamily:
    """Fitted distribution: (mu, sigma), (shape k, scale theta) or (nu, sigma)."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise DomainError(f"unknown family {self.kind!r}")
        a, b = self.params
        if self.kind == "gaussian" and not b > 0:
            raise DomainError("gaussian sigma must be positive")
        if self.kind == "gamma" and not (a > 0 and b > 0):
            raise DomainError("gamma shape and scale must be positive")
        if self.kind == "rician" and not (a >= 0 and b > 0):
            raise DomainError("rician needs nu >= 0 and sigma > 0")

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        a, b = self.params
        if self.kind == "gaussian":
            return np.exp(-0.5 * ((x - a) / b) ** 2) / (b * math.sqrt(2.0 * math.pi))
        if self.kind == "gamma":
            pos = x > 0
            safe = np.where(pos, x, 1.0)
            logp = xlogy(a - 1.0, safe) - safe / b - gammaln(a) - a * math.log(b)
            out = np.where(pos, np.exp(logp), 0.0)
            if a == 1.0:
                out = np.where(x == 0, 1.0 / b, out)
            elif a < 1.0:
                out = np.where(x == 0, np.inf, out)
            return out
        nu, sig = a, b
        s2 = sig * sig
        xp = np.maximum(x, 0.0)
        out = xp / s2 * np.exp(-(xp - nu) ** 2 / (2.0 * s2)) * i0e(xp * nu / s2)
        return np.where(x >= 0, out, 0.0)


def _sample(sample, nonneg=False):
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise InsufficientDataError("fitting needs at least two samples")
    if not np.isfinite(x).all():
        raise DomainError("sample contains non-finite values")
    if nonneg and (x < 0).any():
        raise DomainError("sample must be non-negative for this family")
    var = float(x.var(ddof=1))
    if var == 0.0:
        raise DegenerateFitError("sample variance is zero")
    return x, float(x.mean()), var


def fit_gaussian(sample):
    x, mean, var = _sample(sample)
    return FitFamily("gaussian", (mean, math.sqrt(var)))


def fit_gamma(sample, method="moments"):
    """Gamma fit by moment matching, or by maximum likelihood (all data > 0)."""
    x, mean, var = _sample(sample, nonneg=True)
    if method == "moments":
        return FitFamily("gamma", (mean * mean / var, var / mean))
    if method != "mle":
        raise DomainError(f"unknown gamma fit method {method!r}")
    if (x <= 0).any():
        raise DomainError("gamma MLE needs strictly positive data")
    s = math.log(mean) - float(np.mean(np.log(x)))
    k = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(100):
        step = (math.log(k) - float(digamma(k)) - s) / (1.0 / k - float(polygamma(1, k)))
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2
        if abs(k_new - k) <= 1e-14 * k:
            k = k_new
            break
        k = k_new
    return FitFamily("gamma", (k, mean / k))


def fit_rician(sample):
    """Method-of-moments Rice fit; falls back to Rayleigh (nu = 0)."""
    x, mean, var = _sample(sample, nonneg=True)
    target = mean * mean / var
    if target <= RAYLEIGH_RATIO * (1 + 1e-12):
        return FitFamily("rician", (0.0, math.sqrt(float(np.mean(x * x)) / 2.0)))
    hi = max(1.0, 2.0 * math.sqrt(target))
    while rice_moment_ratio(hi) < target:
        hi *= 2.0
    snr = brentq(lambda r: rice_moment_ratio(r) - target, 0.0, hi, xtol=1e-14, rtol=1e-14)
    lag = _laguerre_half(0.5 * snr * snr)
    sigma2 = var / (2.0 + snr * snr - 0.5 * math.pi * lag * lag)
    sigma = math.sqrt(sigma2)
    return FitFamily("rician", (snr * sigma, sigma))


FITTERS = {"gaussian": fit_gaussian, "gamma": fit_gamma, "rician": fit_rician}


@dataclass(frozen=True)
class DensityHistogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self):
        return np.diff(self.edges)


def normalize_histogram(hist):
    """Scale counts so the histogram integrates to one."""
    counts = np.asarray(hist.counts, dtype=np.float64)
    total = counts.sum()
    if not total > 0:
        raise EmptyDataError("histogram has no counts")
    edges = np.asarray(hist.edges, dtype=np.float64)
    return DensityHistogram(edges, counts / (total * np.diff(edges)))


def rmse(density_hist, fit):
    """Root-mean-square gap between bin-centre density and fitted pdf."""
    resid = density_hist.density - fit.pdf(density_hist.centers)
    return float(np.sqrt(np.mean(resid * resid)))


@dataclass(frozen=True)
class FitReport:
    family: str
    params: tuple
    rmse: float
    shell: int
    species: str
    time: float
    n_samples: int


def fit_step(sample, family, n_bins=30, shell=1, species="N", time=0.0):
    """Histogram, fit and score one sample; raises on empty or degenerate data."""
    sample = np.asarray(sample, dtype=np.float64)
    fit = FITTERS[family](sample)
    dens = normalize_histogram(histogram_of(sample, n_bins, species, shell))
    return FitReport(family, tuple(float(v) for v in fit.params), rmse(dens, fit),
                     shell, species, float(time), int(sample.size))


def _members_and_times(members, times):
    if isinstance(members, EnsembleResult):
        return members.members, members.times if times is None else times
    members = np.asarray(members, dtype=np.float64)
    if times is None:
        times = np.arange(members.shape[1], dtype=np.float64)
    return members, np.asarray(times, dtype=np.float64)


def performance_index_series(members, family, species, shell, n_bins=30, times=None):
    """RMSE index of ``family`` for 1-based ``shell`` at every time step.

    Steps whose sample is empty or degenerate are recorded as NaN.
    """
    members, times = _members_and_times(members, times)
    k = SPECIES.index(species)
    out = np.full(members.shape[1], np.nan)
    for t in range(members.shape[1]):
        try:
            out[t] = fit_step(members[:, t, k, shell - 1], family, n_bins, shell, species,
                              times[t]).rmse
        except (DegenerateFitError, EmptyDataError, DomainError, InsufficientDataError):
            pass
    return out


def performance_index_mean(series):
    """Time mean of an index series, skipping NaN entries."""
    series = np.asarray(series, dtype=np.float64).reshape(-1)
    if series.size == 0:
        raise EmptyDataError("empty index series")
    valid = series[~np.isnan(series)]
    if valid.size == 0:
        raise EmptyDataError("every entry of the index series is missing")
    return float(valid.sum() / valid.size)


def fit_index(members, families=FAMILIES, species=SPECIES, shells=None, n_bins=30, times=None):
    """Fit reports for every (time, shell, species, family) combination.

    Degenerate steps are skipped; the summary keeps track through
    ``n_samples`` and the missing count.
    """
    members, times = _members_and_times(members, times)
    n_shells = members.shape[3]
    shells = range(1, n_shells + 1) if shells is None else shells
    reports = []
    missing = 0
    for t, time in enumerate(times):
        for shell in shells:
            for sp in species:
                sample = members[:, t, SPECIES.index(sp), shell - 1]
                for fam in families:
                    try:
                        reports.append(fit_step(sample, fam, n_bins, shell, sp, time))
                    except (DegenerateFitError, EmptyDataError, DomainError, InsufficientDataError):
                        missing += 1
    return reports, missing


def summarize_index(reports):
    """Mean index per (shell, species, family) plus the best family per pair."""
    acc = {}
    for r in reports:
        acc.setdefault((r.shell, r.species, r.family), []).append(r.rmse)
    means = {key: performance_index_mean(vals) for key, vals in acc.items()}
    best = {}
    for (shell, sp, fam), value in means.items():
        cur = best.get((shell, sp))
        if cur is None or value < means[(shell, sp, cur)]:
            best[(shell, sp)] = fam
    return means, best
