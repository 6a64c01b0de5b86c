import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from ssem_ukf.distfit import (BESSEL_SWITCH, DensityHistogram, FitFamily, fit_gamma, fit_gaussian,
                              fit_index, fit_rician, fit_step, i0e, i1e, normalize_histogram,
                              performance_index_mean, performance_index_series, rmse,
                              summarize_index)
from ssem_ukf.ensemble import PopulationHistogram, histogram_of
from ssem_ukf.errors import DegenerateFitError, DomainError, EmptyDataError, InsufficientDataError


def brute_rmse(dens, fit):
    total = 0.0
    centers = dens.centers
    for i in range(len(centers)):
        pdf = float(fit.pdf(np.array([centers[i]]))[0])
        total += (dens.density[i] - pdf) ** 2
    return math.sqrt(total / len(centers))


class TestBessel:
    @pytest.mark.parametrize("fn,ref", [(i0e, special.i0e), (i1e, special.i1e)])
    def test_against_scipy(self, fn, ref):
        x = np.concatenate([np.linspace(-30, 30, 601), np.geomspace(1e-8, 1e4, 200)])
        np.testing.assert_allclose(fn(x), ref(x), rtol=1e-13, atol=1e-300)

    def test_switch_continuity(self):
        for x in (BESSEL_SWITCH - 1e-9, BESSEL_SWITCH):
            assert i0e(x) == pytest.approx(special.i0e(x), rel=1e-14)
            assert i1e(x) == pytest.approx(special.i1e(x), rel=1e-14)


class TestNormalize:
    def test_single_bin(self):
        d = normalize_histogram(PopulationHistogram(np.array([0.0, 2.0]), np.array([7]), "N", 1, 0))
        assert d.density.tolist() == [0.5]

    def test_uniform(self):
        d = normalize_histogram(PopulationHistogram(np.arange(5.0), np.full(4, 3), "N", 1, 0))
        np.testing.assert_allclose(d.density, 0.25)

    def test_unit_area(self, rng):
        h = histogram_of(rng.gamma(2.0, 3.0, 777), 17)
        d = normalize_histogram(h)
        assert abs(np.sum(d.density * d.widths) - 1.0) < 1e-12

    def test_empty(self):
        with pytest.raises(EmptyDataError):
            normalize_histogram(PopulationHistogram(np.arange(3.0), np.zeros(2), "N", 1, 0))


class TestFits:
    def test_gamma_moments(self):
        x = np.array([2.0, 6.0])  # mean 4, var 8 -> adjust below
        k, th = fit_gamma(x).params
        assert k == pytest.approx(16 / 8) and th == pytest.approx(8 / 4)
        # sample with mean 4, variance 4
        y = np.array([4 - math.sqrt(2), 4 + math.sqrt(2)])
        k, th = fit_gamma(y).params
        assert k == pytest.approx(4.0) and th == pytest.approx(1.0)

    def test_gaussian(self):
        mu, sig = fit_gaussian([1.0, 3.0]).params
        assert mu == 2.0 and sig == pytest.approx(math.sqrt(2.0))

    def test_gamma_mle_matches_scipy(self, rng):
        x = rng.gamma(4.0, 50.0, 3000)
        k, th = fit_gamma(x, "mle").params
        ks, _, ths = stats.gamma.fit(x, floc=0)
        assert k == pytest.approx(ks, rel=1e-4) and th == pytest.approx(ths, rel=1e-4)

    def test_rician_recovers_parameters(self, rng):
        x = stats.rice.rvs(3.0, scale=2.0, size=20000, random_state=rng)
        nu, sig = fit_rician(x).params
        assert nu == pytest.approx(6.0, rel=0.03) and sig == pytest.approx(2.0, rel=0.03)

    def test_rician_moment_match_exact(self, rng):
        x = stats.rice.rvs(2.0, scale=1.5, size=500, random_state=rng)
        fit = fit_rician(x)
        nu, sig = fit.params
        mean = stats.rice.mean(nu / sig, scale=sig)
        var = stats.rice.var(nu / sig, scale=sig)
        assert mean == pytest.approx(x.mean(), rel=1e-9)
        assert var == pytest.approx(x.var(ddof=1), rel=1e-9)

    def test_rayleigh_branch(self, rng):
        x = stats.rayleigh.rvs(scale=3.0, size=5000, random_state=rng)
        # push the sample to (or below) the Rayleigh mean^2/var ratio
        x = np.concatenate([x, [0.0] * 200])
        nu, sig = fit_rician(x).params
        assert nu == 0.0 and sig == pytest.approx(math.sqrt(np.mean(x * x) / 2))

    def test_errors(self):
        with pytest.raises(DegenerateFitError):
            fit_gaussian([2.0, 2.0, 2.0])
        with pytest.raises(DomainError):
            fit_gamma([-1.0, 2.0])
        with pytest.raises(DomainError):
            fit_rician([-1.0, 2.0])
        with pytest.raises(InsufficientDataError):
            fit_gaussian([1.0])
        with pytest.raises(DomainError):
            fit_gamma([0.0, 1.0], "mle")

    @pytest.mark.parametrize("fam", [FitFamily("gaussian", (3.0, 2.0)), FitFamily("gamma", (4.0, 50.0)),
                                     FitFamily("rician", (6.0, 2.0)), FitFamily("rician", (0.0, 2.0))])
    def test_pdfs_integrate_to_one(self, fam):
        lo = -np.inf if fam.kind == "gaussian" else 0.0
        area, _ = integrate.quad(lambda v: float(fam.pdf(np.array([v]))[0]), lo, np.inf, limit=200)
        assert area == pytest.approx(1.0, abs=1e-8)

    def test_pdfs_match_scipy(self):
        x = np.linspace(0.1, 40, 50)
        np.testing.assert_allclose(FitFamily("gamma", (4.0, 3.0)).pdf(x), stats.gamma.pdf(x, 4.0, scale=3.0), rtol=1e-12)
        np.testing.assert_allclose(FitFamily("rician", (6.0, 2.0)).pdf(x), stats.rice.pdf(x, 3.0, scale=2.0), rtol=1e-11)
        np.testing.assert_allclose(FitFamily("gaussian", (5.0, 2.0)).pdf(x), stats.norm.pdf(x, 5.0, 2.0), rtol=1e-12)

    def test_invalid_family(self):
        with pytest.raises(DomainError):
            FitFamily("gaussian", (0.0, 0.0))
        with pytest.raises(DomainError):
            FitFamily("weibull", (1.0, 1.0))


class TestRmse:
    def test_exact_fit_is_zero(self):
        fam = FitFamily("gaussian", (0.0, 1.0))
        edges = np.linspace(-3, 3, 13)
        c = 0.5 * (edges[1:] + edges[:-1])
        assert rmse(DensityHistogram(edges, fam.pdf(c)), fam) == 0.0

    def test_single_term(self):
        fam = FitFamily("gaussian", (0.0, 1.0))
        pdf0 = float(fam.pdf(np.array([0.0]))[0])
        d = DensityHistogram(np.array([-1.0, 1.0]), np.array([pdf0 + 0.2]))
        assert rmse(d, fam) == pytest.approx(0.2, abs=1e-15)

    def test_brute_force(self, rng):
        for _ in range(20):
            x = rng.gamma(3.0, 10.0, 500)
            d = normalize_histogram(histogram_of(x, 25))
            for fit in (fit_gaussian(x), fit_gamma(x), fit_rician(x)):
                assert abs(rmse(d, fit) - brute_rmse(d, fit)) <= 1e-15

    def test_reorder_invariance_and_perturbation(self, rng):
        x = rng.gamma(3.0, 10.0, 500)
        d = normalize_histogram(histogram_of(x, 20))
        fit = fit_gamma(x)
        base = rmse(d, fit)
        perm = rng.permutation(20)
        resid = d.density - fit.pdf(d.centers)
        assert math.sqrt(np.mean(resid[perm] ** 2)) == pytest.approx(base, rel=1e-14)
        exact = DensityHistogram(d.edges, fit.pdf(d.centers))
        bumped = exact.density.copy()
        bumped[4] += 1e-4
        assert rmse(DensityHistogram(d.edges, bumped), fit) > rmse(exact, fit)


class TestIndex:
    def test_constant_ensemble_constant_series(self, rng):
        snap = rng.gamma(4.0, 50.0, 300)
        members = np.zeros((300, 4, 3, 1))
        members[:, :, 2, 0] = snap[:, None]
        s = performance_index_series(members, "gamma", "N", 1)
        assert s.size == 4 and np.all(s == s[0])

    def test_series_matches_stepwise(self, rng):
        members = rng.gamma(4.0, 50.0, (200, 3, 3, 2))
        s = performance_index_series(members, "rician", "D", 2, n_bins=15)
        for t in range(3):
            assert s[t] == fit_step(members[:, t, 1, 1], "rician", 15).rmse

    def test_perfect_fit_near_zero(self):
        q = (np.arange(20000) + 0.5) / 20000
        x = stats.norm.ppf(q, 500.0, 20.0)
        members = np.tile(x[:, None, None, None], (1, 2, 3, 1))
        s = performance_index_series(members, "gaussian", "S", 1, n_bins=20)
        assert np.all(s < 5e-4 * stats.norm.pdf(0, 0, 20.0) * 10)

    def test_missing_steps(self):
        members = np.zeros((10, 2, 3, 1))
        members[:, 1, 2, 0] = np.arange(10.0) + 1
        s = performance_index_series(members, "gamma", "N", 1)
        assert np.isnan(s[0]) and np.isfinite(s[1])
        assert performance_index_mean(s) == s[1]

    def test_mean(self):
        assert performance_index_mean([0.1, 0.3]) == pytest.approx(0.2)
        assert performance_index_mean([0.7] * 5) == pytest.approx(0.7)
        with pytest.raises(EmptyDataError):
            performance_index_mean([np.nan, np.nan])
        with pytest.raises(EmptyDataError):
            performance_index_mean([])

    def test_mean_brute_force(self, rng):
        s = rng.random(37)
        s[[3, 8]] = np.nan
        total, count = 0.0, 0
        for v in s:
            if not np.isnan(v):
                total += v
                count += 1
        assert abs(performance_index_mean(s) - total / count) <= 1e-15

    def test_gaussian_far_from_zero_preferred(self):
        wins = 0
        for seed in range(30):
            x = np.random.default_rng(seed).normal(1000.0, 30.0, 2000)
            d = normalize_histogram(histogram_of(x, 30))
            g = rmse(d, fit_gaussian(x))
            eps = 0.1 * g
            if g <= rmse(d, fit_gamma(x)) + eps and g <= rmse(d, fit_rician(x)) + eps:
                wins += 1
        assert wins >= 27

    def test_fit_index_summary(self, rng):
        members = np.empty((400, 2, 3, 2))
        members[..., 0, :] = rng.normal(500, 20, (400, 2, 2))
        members[..., 1, :] = rng.normal(300, 10, (400, 2, 2))
        members[..., 2, :] = rng.gamma(2.0, 100.0, (400, 2, 2))
        reports, missing = fit_index(members)
        assert missing == 0 and len(reports) == 2 * 2 * 3 * 3
        means, best = summarize_index(reports)
        assert best[(1, "N")] == "gamma" and best[(2, "N")] == "gamma"
