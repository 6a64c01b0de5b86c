import numpy as np
import pytest
from scipy import stats

from ssem_ukf import _kernels
from ssem_ukf.ensemble import (EnsembleConfig, MomentRecord, build_histogram, event_rates,
                               extract_moments, generate_member, histogram_of, member_rng,
                               moment_stream, run_ensemble, sample_skewness)
from ssem_ukf.errors import ConfigurationError, InsufficientDataError
from ssem_ukf.model import ModelParams, ShellGrid, SSEMModel
from ssem_ukf.scenarios import demo_initial, demo_model


def brute_moments(x):
    """Plain two-pass loop over members."""
    m, p = x.shape
    mean = [0.0] * p
    for row in x:
        for i in range(p):
            mean[i] += row[i]
    mean = [v / m for v in mean]
    cov = [[0.0] * p for _ in range(p)]
    for row in x:
        dev = [row[i] - mean[i] for i in range(p)]
        for i in range(p):
            for j in range(p):
                cov[i][j] += dev[i] * dev[j]
    return np.array(mean), np.array(cov) / (m - 1)


@pytest.fixture(scope="module")
def small_run():
    cfg = EnsembleConfig(n_members=60, horizon=6, seed=11)
    return cfg, run_ensemble(cfg, demo_model(), demo_initial())


class TestMoments:
    def test_brute_force_equality(self, small_run, rng):
        _, res = small_run
        for k in (0, 3, 6):
            rec = extract_moments(res, k, cross_shell=True)
            inter = res.members[:, k].transpose(0, 2, 1).reshape(res.n_members, -1)
            mean, cov = brute_moments(inter)
            assert np.array_equal(rec.measurement(), mean)
            assert np.array_equal(rec.cross, cov)
            per = extract_moments(res, k)
            for i in range(res.n_shells):
                mu, c = brute_moments(inter[:, 3 * i:3 * i + 3])
                assert np.array_equal(per.mean[i], mu)
                assert np.array_equal(per.cov[i], c)

    def test_backends_agree_exactly(self, rng):
        x = rng.normal(size=(300, 12)) * 1e3
        a = _kernels.moments_numpy(x)
        b = _kernels.moments_numba(x)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_identical_members(self):
        members = np.tile(np.arange(6.0).reshape(1, 1, 3, 2), (5, 1, 1, 1))
        rec = extract_moments(members, 0)
        assert not rec.cov.any()
        np.testing.assert_array_equal(rec.mean, members[0, 0].T)

    def test_two_member_variance(self):
        members = np.zeros((2, 1, 3, 1))
        members[1, 0, 0, 0] = 2.0
        rec = extract_moments(members, 0)
        assert rec.mean[0, 0] == 1.0 and rec.cov[0, 0, 0] == 2.0

    def test_assembled_matrix_symmetric(self, small_run):
        _, res = small_run
        for cross in (False, True):
            R = extract_moments(res, 5, cross_shell=cross).covariance_matrix()
            assert np.max(np.abs(R - R.T)) == 0.0

    def test_blocks_psd(self, small_run):
        _, res = small_run
        rec = extract_moments(res, 6)
        assert np.all(np.linalg.eigvalsh(rec.cov) >= -1e-9 * np.abs(rec.cov).max())

    def test_needs_two_members(self):
        with pytest.raises(InsufficientDataError):
            extract_moments(np.zeros((1, 2, 3, 4)), 0)


class TestEnsemble:
    def test_noise_free_matches_deterministic(self):
        m = demo_model()
        cfg = EnsembleConfig(n_members=3, horizon=5, init_jitter=0.0)
        zero = np.zeros((6, m.n))
        res = run_ensemble(cfg, m, demo_initial(), phi=zero)
        y = demo_initial().reshape(-1)
        for k in range(5):
            y = m.propagate(y, k, k + 1, phi=zero, catastrophic=False)
        for b in range(3):
            np.testing.assert_array_equal(res.members[b, -1].reshape(-1), y)
        assert not res.events.any()

    def test_two_members_zero_noise_equal(self):
        cfg = EnsembleConfig(n_members=2, horizon=3, init_jitter=0.0, collisions=False)
        res = run_ensemble(cfg, demo_model(), demo_initial())
        assert np.array_equal(res.members[0], res.members[1])
        assert res.n_members == 2

    def test_member_reproducible(self):
        cfg = EnsembleConfig(n_members=10, horizon=4, seed=5)
        a = generate_member(cfg, demo_model(), 7, demo_initial())
        b = generate_member(cfg, demo_model(), 7, demo_initial())
        assert a[0].tobytes() == b[0].tobytes() and np.array_equal(a[1], b[1])

    def test_independent_of_chunking_and_threads(self, small_run):
        cfg, res = small_run
        other = run_ensemble(cfg, demo_model(), demo_initial(), threads=3, chunk=7)
        assert res.members.tobytes() == other.members.tobytes()
        single = generate_member(cfg, demo_model(), 17, demo_initial())[0]
        assert np.array_equal(single, res.members[17])

    def test_moment_stream_byte_identical(self, small_run):
        cfg, res = small_run
        again = run_ensemble(cfg, demo_model(), demo_initial())
        for a, b in zip(moment_stream(res, True), moment_stream(again, True)):
            assert a.mean.tobytes() == b.mean.tobytes() and a.cross.tobytes() == b.cross.tobytes()

    def test_different_seed_differs(self, small_run):
        cfg, res = small_run
        other = run_ensemble(EnsembleConfig(n_members=60, horizon=6, seed=12), demo_model(), demo_initial())
        assert not np.array_equal(res.members, other.members)

    def test_poisson_event_mean(self):
        # one shell of derelicts, no drag or launches: events follow dD/dt = -2 phi D^2
        m = SSEMModel(ModelParams(drag=False), ShellGrid(h_min=700.0, n_shells=1))
        phi = np.zeros((6, 1))
        phi[3] = 5e-6
        d0, horizon = 1000.0, 10
        cfg = EnsembleConfig(n_members=1000, horizon=horizon, init_jitter=0.0, seed=3)
        res = run_ensemble(cfg, m, np.array([0.0, d0, 0.0]), phi=phi)
        counts = res.events[:, :, 3].sum(axis=1)
        a = 2 * phi[3, 0] * d0
        expected = phi[3, 0] * d0 ** 2 * horizon / (1 + a * horizon)
        se = counts.std(ddof=1) / np.sqrt(counts.size)
        assert abs(counts.mean() - expected) < 3 * se
        # each event removes two derelicts and adds nf_DD fragments
        final = res.members[:, -1, :, 0]
        np.testing.assert_allclose(final[:, 1], d0 - 2 * counts)
        np.testing.assert_allclose(final[:, 2], m.nf[3] * counts)

    def test_subset_mean_within_standard_error(self):
        cfg = EnsembleConfig(n_members=4000, horizon=2, seed=9)
        m = SSEMModel(ModelParams(drag=False), ShellGrid(h_min=700.0, n_shells=1))
        res = run_ensemble(cfg, m, np.array([800.0, 400.0, 5000.0]))
        n_all = res.members[:, -1, 2, 0]
        sub = n_all[:250]
        assert abs(sub.mean() - n_all.mean()) < 3 * n_all.std(ddof=1) / np.sqrt(250)

    def test_skewness_positive_late(self):
        cfg = EnsembleConfig(n_members=400, horizon=20, seed=1)
        res = run_ensemble(cfg, demo_model(), demo_initial())
        assert sample_skewness(res.members[:, -1, 2, 4]) > 0

    def test_event_rates_match_deterministic_sources(self, small_model):
        pop = demo_initial()
        rates = event_rates(small_model, pop)
        frag = small_model.nf @ rates
        d = small_model.rhs_populations(0.0, pop.reshape(-1)).reshape(3, -1)
        d_nocat = small_model.rhs_populations(0.0, pop.reshape(-1), catastrophic=False).reshape(3, -1)
        np.testing.assert_allclose(d[2] - d_nocat[2], frag, rtol=1e-12)

    def test_rng_streams(self):
        a = member_rng(1, 0).random(3)
        b = member_rng(1, 1).random(3)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, member_rng(1, 0).random(3))

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            EnsembleConfig(n_members=1)
        with pytest.raises(ConfigurationError):
            EnsembleConfig(horizon=0)
        with pytest.raises(ConfigurationError):
            EnsembleConfig(collision_sampling="binomial")


class TestHistogram:
    def test_degenerate(self):
        h = histogram_of(np.full(10, 3.0))
        assert h.degenerate and h.counts.tolist() == [10]

    def test_total_counts(self, small_run):
        _, res = small_run
        h = build_histogram(res, "N", 3, 6, n_bins=12)
        assert h.total == res.n_members
        assert np.all(np.diff(h.edges) > 0) and np.all(h.counts >= 0)

    def test_gamma_bin_proportions(self):
        r = np.random.default_rng(4)
        x = r.gamma(4.0, 50.0, 4000)
        h = histogram_of(x, 30)
        p = np.diff(stats.gamma.cdf(h.edges, 4.0, scale=50.0))
        # conditional on the observed range
        p = p / p.sum()
        se = np.sqrt(p * (1 - p) / x.size)
        assert np.all(np.abs(h.counts / x.size - p) < 4 * se + 1e-12)

    def test_record_measurement_order(self):
        mean = np.arange(6.0).reshape(2, 3)
        rec = MomentRecord(0.0, mean, np.zeros((2, 3, 3)))
        assert rec.measurement().tolist() == [0, 1, 2, 3, 4, 5]
