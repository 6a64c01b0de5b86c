"""Small synthetic scenarios: an 8-shell demo model and noisy truth streams."""
from dataclasses import dataclass

import numpy as np

from .atmosphere import DensityModel
from .ensemble import MomentRecord
from .errors import ConfigurationError
from .integrator import IntegratorConfig
from .model import ModelParams, ShellGrid, SpeciesParams, SSEMModel, default_initial_population

DEMO_GRID = ShellGrid(h_min=400.0, n_shells=8, dh=50.0)
# 10 cm debris keeps phi_NN above 1e-9 per year on this grid
DEMO_DEBRIS = SpeciesParams(radius=0.1, mass=1.0, area=0.1)


def demo_params(**overrides):
    base = dict(debris=DEMO_DEBRIS, launch_mode="gaussian", launch_rate=1200.0,
                launch_mu_h=550.0, launch_sigma_h=100.0)
    base.update(overrides)
    return ModelParams(**base)


def demo_model(solar=False, **overrides):
    atm = DensityModel("solar_modulated" if solar else "static_exponential")
    return SSEMModel(demo_params(**overrides), DEMO_GRID, atm)


def demo_initial(grid=DEMO_GRID):
    return default_initial_population(grid).as_array()


@dataclass(frozen=True)
class TruthConfig:
    n_steps: int = 40
    step: float = 1.0
    rel_noise: float = 0.02
    abs_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 0 or not self.step > 0:
            raise ConfigurationError("n_steps must be >= 0 and step > 0")
        if self.rel_noise < 0 or not self.abs_noise > 0:
            raise ConfigurationError("rel_noise must be >= 0 and abs_noise > 0")


def truth_trajectory(model, pop0, n_steps, step=1.0, integ=IntegratorConfig(), t0=0.0):
    """Deterministic populations ``(n_steps + 1, 3, n)`` at ``t0 + k * step``."""
    x = np.asarray(pop0, dtype=np.float64).reshape(-1)
    out = np.empty((n_steps + 1, 3, model.n))
    out[0] = x.reshape(3, model.n)
    for k in range(n_steps):
        x = model.propagate(x, t0 + k * step, t0 + (k + 1) * step, integ)
        out[k + 1] = x.reshape(3, model.n)
    return out


def noisy_measurements(truth, config=TruthConfig(), t0=0.0):
    """Moment records of truth plus Gaussian noise with the stated covariance.

    Noise sd per entry is ``max(rel_noise * truth, abs_noise)``; the first
    record is noise-free so it can seed the filter.
    """
    rng = np.random.default_rng(config.seed)
    records = []
    for k, pop in enumerate(truth):
        mean = pop.T.copy()  # (n, 3)
        sd = np.maximum(config.rel_noise * np.abs(mean), config.abs_noise)
        if k:
            mean = mean + sd * rng.standard_normal(mean.shape)
        cov = np.zeros((mean.shape[0], 3, 3))
        idx = np.arange(3)
        cov[:, idx, idx] = sd * sd
        records.append(MomentRecord(t0 + k * config.step, mean, cov, None, 0))
    return records
