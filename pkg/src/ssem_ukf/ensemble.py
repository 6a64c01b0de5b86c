"""Synthetic Monte-Carlo ensemble and moment extraction.

Each member starts from a perturbed copy of the nominal populations. Every
step it follows the deterministic model with the catastrophic-collision
terms switched off, then draws discrete collision events per shell and
species pair from a Poisson law. An event removes the colliding objects
(two of the same species, or one of each) and adds the breakup fragment
count to the debris population.

Per-member random streams come from ``numpy.random.SeedSequence(seed,
spawn_key=(member_id,))``, so a member's trajectory depends only on the
master seed and its own id, never on batching or thread scheduling.
"""
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError, InsufficientDataError, IntegrationError
from .integrator import IntegratorConfig
from .model import SPECIES

# objects removed per event, rows in PAIRS order
_DECREMENTS = np.array([
    # S  D  N
    [2, 0, 0],  # SS
    [1, 1, 0],  # SD
    [1, 0, 1],  # SN
    [0, 2, 0],  # DD
    [0, 1, 1],  # DN
    [0, 0, 2],  # NN
], dtype=np.float64)


@dataclass(frozen=True)
class EnsembleConfig:
    n_members: int = 4000
    horizon: float = 40.0
    step: float = 1.0
    seed: int = 0
    init_jitter: float = 0.05
    init_poisson: bool = False
    collision_sampling: str = "poisson"
    collisions: bool = True

    def __post_init__(self):
        if self.n_members < 2:
            raise ConfigurationError("n_members must be at least 2")
        if not (self.horizon > 0 and self.step > 0):
            raise ConfigurationError("horizon and step must be positive")
        if self.init_jitter < 0:
            raise ConfigurationError("init_jitter must be non-negative")
        if self.collision_sampling != "poisson":
            raise ConfigurationError(f"unknown collision_sampling {self.collision_sampling!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")

    @property
    def n_steps(self):
        return max(1, round(self.horizon / self.step))

    @property
    def times(self):
        return self.step * np.arange(self.n_steps + 1)


@dataclass
class EnsembleResult:
    """Member trajectories ``members[m, k, species, shell]`` at ``times[k]``.

    ``events[m, k, pair]`` counts collision events during step ``k`` summed
    over shells; ``member_ids`` maps rows to the ids that seeded them.
    """

    times: np.ndarray
    members: np.ndarray
    member_ids: np.ndarray
    events: np.ndarray
    excluded: list

    @property
    def n_members(self):
        return self.members.shape[0]

    @property
    def n_shells(self):
        return self.members.shape[3]


def member_rng(seed, member_id):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(member_id),)))


def event_rates(model, pop, phi=None):
    """Expected collision events per year, shape (..., 6, n).

    Rates carry the same effectiveness factors (alpha_a for SS, alpha for
    the other active pairs) as the fragment-source terms of the debris
    equation, so mean fragment production matches the deterministic model.
    """
    p = model.params
    phi = model.phi if phi is None else phi
    s, d, n = pop[..., 0, :], pop[..., 1, :], pop[..., 2, :]
    rates = np.stack([
        p.alpha_a * phi[0] * s * s,
        p.alpha * phi[1] * s * d,
        p.alpha * phi[2] * s * n,
        phi[3] * d * d,
        phi[4] * d * n,
        phi[5] * n * n,
    ], axis=-2)
    return np.maximum(rates, 0.0)


def _simulate(model, nominal, member_ids, config, integ, phi):
    n = model.n
    n_steps = config.n_steps
    rngs = [member_rng(config.seed, mid) for mid in member_ids]
    batch = len(member_ids)
    x = np.empty((batch, 3, n))
    for b, rng in enumerate(rngs):
        if config.init_poisson:
            x[b] = rng.poisson(np.maximum(nominal, 0.0))
        elif config.init_jitter > 0:
            x[b] = nominal * (1.0 + config.init_jitter * rng.standard_normal((3, n)))
        else:
            x[b] = nominal
    np.maximum(x, 0.0, out=x)
    traj = np.empty((batch, n_steps + 1, 3, n))
    traj[:, 0] = x
    events = np.zeros((batch, n_steps, 6), dtype=np.int64)
    alive = np.ones(batch, dtype=bool)
    phi_b = (model.phi if phi is None else phi)[None]
    for k in range(n_steps):
        t0 = k * config.step
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        try:
            x[idx] = model.propagate(x[idx].reshape(idx.size, -1), t0, t0 + config.step, integ,
                                     phi=phi_b, catastrophic=not config.collisions
                                     ).reshape(idx.size, 3, n)
        except IntegrationError:
            # isolate the failing members one by one
            for b in idx:
                try:
                    x[b] = model.propagate(x[b].reshape(-1), t0, t0 + config.step, integ,
                                           phi=phi_b, catastrophic=not config.collisions
                                           ).reshape(3, n)
                except IntegrationError:
                    alive[b] = False
        if config.collisions:
            lam = event_rates(model, x, phi) * config.step
            for b in np.flatnonzero(alive):
                if not np.isfinite(lam[b]).all():
                    alive[b] = False
                    continue
                counts = rngs[b].poisson(lam[b])
                events[b, k] = counts.sum(axis=1)
                x[b, 2] += model.nf @ counts
                x[b] -= _DECREMENTS.T @ counts
            np.maximum(x, 0.0, out=x)
        bad = ~np.isfinite(x).reshape(batch, -1).all(axis=1)
        alive &= ~bad
        traj[:, k + 1] = x
    return traj, events, alive


def generate_member(config, model, member_seed, nominal, integ=IntegratorConfig(), phi=None):
    """Trajectory ``(steps + 1, 3, n)`` and per-step event counts of one member."""
    nominal = np.asarray(nominal, dtype=np.float64).reshape(3, model.n)
    traj, events, alive = _simulate(model, nominal, [member_seed], config, integ, phi)
    if not alive[0]:
        raise IntegrationError(f"member {member_seed} produced a non-finite state")
    return traj[0], events[0]


def run_ensemble(config, model, nominal, integ=IntegratorConfig(), phi=None, threads=1,
                 chunk=256):
    """Run ``config.n_members`` independent members.

    Members are processed in fixed chunks of ids, optionally on a thread
    pool; the result is ordered by member id either way. Members that hit a
    non-finite state are dropped with a warning.
    """
    nominal = np.asarray(nominal, dtype=np.float64).reshape(3, model.n)
    ids = np.arange(config.n_members)
    chunks = [ids[i:i + chunk] for i in range(0, ids.size, chunk)]

    def work(c):
        return _simulate(model, nominal, c, config, integ, phi)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    traj = np.concatenate([p[0] for p in parts])
    events = np.concatenate([p[1] for p in parts])
    alive = np.concatenate([p[2] for p in parts])
    excluded = [int(i) for i in ids[~alive]]
    if excluded:
        warnings.warn(f"excluded {len(excluded)} ensemble members with non-finite states: "
                      f"{excluded[:10]}", RuntimeWarning, stacklevel=2)
    return EnsembleResult(config.times, traj[alive], ids[alive], events[alive], excluded)


@dataclass
class MomentRecord:
    """Sample moments of the ensemble at one time.

    ``mean[i]`` holds (S, D, N) means of 0-based shell ``i`` and ``cov[i]``
    the 3x3 covariance. ``cross``, when present, is the full covariance of
    the shell-interleaved vector ``[S_1, D_1, N_1, S_2, ...]``.
    """

    time: float
    mean: np.ndarray
    cov: np.ndarray
    cross: np.ndarray | None = None
    n_members: int = 0

    @property
    def n_shells(self):
        return self.mean.shape[0]

    def measurement(self):
        """Shell-interleaved mean vector."""
        return self.mean.reshape(-1)

    def covariance_matrix(self):
        """Assembled (3n, 3n) covariance in shell-interleaved order."""
        if self.cross is not None:
            return self.cross.copy()
        n = self.n_shells
        out = np.zeros((3 * n, 3 * n))
        for i in range(n):
            out[3 * i:3 * i + 3, 3 * i:3 * i + 3] = self.cov[i]
        return out


def extract_moments(members, t_index, cross_shell=False, time=None):
    """Unbiased per-shell (and optionally cross-shell) moments at ``t_index``.

    ``members`` is ``(M, T, 3, n)`` or an :class:`EnsembleResult`.
    """
    if isinstance(members, EnsembleResult):
        if time is None:
            time = float(members.times[t_index])
        members = members.members
    members = np.asarray(members, dtype=np.float64)
    m = members.shape[0]
    if m < 2:
        raise InsufficientDataError(f"need at least 2 members, got {m}")
    snap = members[:, t_index]  # (M, 3, n)
    n = snap.shape[2]
    inter = np.ascontiguousarray(snap.transpose(0, 2, 1)).reshape(m, 3 * n)
    if cross_shell:
        mean, full = _kernels.moments(inter)
        cov = np.stack([full[3 * i:3 * i + 3, 3 * i:3 * i + 3] for i in range(n)])
        cross = full
    else:
        means, covs = [], []
        for i in range(n):
            mu, c = _kernels.moments(inter[:, 3 * i:3 * i + 3])
            means.append(mu)
            covs.append(c)
        mean = np.concatenate(means)
        cov = np.stack(covs)
        cross = None
    return MomentRecord(time=float("nan") if time is None else float(time),
                        mean=mean.reshape(n, 3), cov=cov, cross=cross, n_members=m)


def moment_stream(result, cross_shell=False):
    return [extract_moments(result, k, cross_shell) for k in range(result.times.size)]


@dataclass
class PopulationHistogram:
    edges: np.ndarray
    counts: np.ndarray
    species: str
    shell: int
    t_index: int
    degenerate: bool = False

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def total(self):
        return int(self.counts.sum())


def histogram_of(sample, n_bins=30, species="N", shell=1, t_index=0):
    """Equal-width histogram spanning the sample range."""
    sample = np.asarray(sample, dtype=np.float64).reshape(-1)
    if sample.size < 1:
        raise InsufficientDataError("histogram needs at least one value")
    if n_bins < 1:
        raise ConfigurationError("n_bins must be at least 1")
    lo, hi = float(sample.min()), float(sample.max())
    if lo == hi:
        half = 0.5
        return PopulationHistogram(np.array([lo - half, lo + half]), np.array([sample.size]),
                                   species, shell, t_index, degenerate=True)
    counts, edges = np.histogram(sample, bins=n_bins, range=(lo, hi))
    return PopulationHistogram(edges, counts, species, shell, t_index)


def build_histogram(members, species, shell, t_index, n_bins=30):
    """Histogram of one species in 1-based ``shell`` across members."""
    if isinstance(members, EnsembleResult):
        members = members.members
    k = SPECIES.index(species)
    return histogram_of(np.asarray(members)[:, t_index, k, shell - 1], n_bins, species, shell, t_index)


def sample_skewness(x):
    x = np.asarray(x, dtype=np.float64)
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 == 0:
        return 0.0
    return float(np.mean(d ** 3) / m2 ** 1.5)


def standard_error(x):
    x = np.asarray(x, dtype=np.float64)
    return float(x.std(ddof=1) / math.sqrt(x.size))
