import math

import numpy as np
import pytest
from scipy.linalg import expm

from ssem_ukf.errors import ConfigurationError, IntegrationError
from ssem_ukf.integrator import IntegratorConfig, propagate_interval, rk4_step

A = np.array([[-0.5, 0.2, 0.0], [0.1, -0.3, 0.05], [0.0, 0.4, -0.2]])


def test_zero_rhs():
    x = np.array([1.0, -2.0])
    assert np.array_equal(rk4_step(lambda t, y: np.zeros_like(y), x, 0.0, 0.3), x)


def test_exponential_step():
    x = rk4_step(lambda t, y: -y, np.array([1.0]), 0.0, 0.1)
    assert x[0] == pytest.approx(0.9048375, abs=5e-8)
    assert abs(x[0] - math.exp(-0.1)) < 1e-7


def test_fourth_order():
    def err(dt):
        x = propagate_interval(lambda t, y: -y, np.array([1.0]), 0.0, 1.0, IntegratorConfig(dt_sub=dt))
        return abs(x[0] - math.exp(-1.0))
    ratio = err(0.1) / err(0.05)
    assert 14.0 < ratio < 18.0


def test_time_dependent_rhs():
    # y' = cos(t) -> sin(t)
    x = propagate_interval(lambda t, y: np.array([math.cos(t)]), np.zeros(1), 0.0, 2.0,
                           IntegratorConfig(dt_sub=0.01))
    assert x[0] == pytest.approx(math.sin(2.0), abs=1e-10)


def test_same_time_is_identity():
    x = np.array([3.0])
    assert np.array_equal(propagate_interval(lambda t, y: -y, x, 4.0, 4.0), x)


def test_composition():
    cfg = IntegratorConfig(dt_sub=0.25)
    f = lambda t, y: A @ y + np.sin(t)
    x0 = np.array([1.0, 2.0, 3.0])
    full = propagate_interval(f, x0, 0.0, 3.0, cfg)
    split = propagate_interval(f, propagate_interval(f, x0, 0.0, 1.0, cfg), 1.0, 3.0, cfg)
    assert np.array_equal(full, split)


def test_linear_system_matches_expm():
    x0 = np.array([100.0, 50.0, 20.0])
    x = propagate_interval(lambda t, y: A @ y, x0, 0.0, 10.0, IntegratorConfig(dt_sub=0.05))
    np.testing.assert_allclose(x, expm(10.0 * A) @ x0, rtol=1e-8)


def test_partial_final_step():
    x = propagate_interval(lambda t, y: -y, np.ones(1), 0.0, 0.35, IntegratorConfig(dt_sub=0.1))
    assert x[0] == pytest.approx(math.exp(-0.35), rel=1e-6)


def test_non_finite_reports_time_and_index():
    def f(t, y):
        out = -y.copy()
        if t >= 0.2:
            out[1] = np.nan
        return out
    with pytest.raises(IntegrationError) as info:
        propagate_interval(f, np.ones(3), 0.0, 1.0)
    assert info.value.index == 1
    # start of the failing step
    assert info.value.t == pytest.approx(0.1)


def test_backwards_rejected():
    with pytest.raises(ValueError):
        propagate_interval(lambda t, y: y, np.ones(1), 1.0, 0.0)


def test_deterministic():
    f = lambda t, y: A @ y
    a = propagate_interval(f, np.ones(3), 0.0, 5.0)
    b = propagate_interval(f, np.ones(3), 0.0, 5.0)
    assert a.tobytes() == b.tobytes()


def test_config():
    with pytest.raises(ConfigurationError):
        IntegratorConfig(dt_sub=0.0)
    with pytest.raises(ConfigurationError):
        IntegratorConfig(method="euler")
    cfg = IntegratorConfig()
    assert cfg.substeps(1.0) == 10
    assert cfg.substeps(1.0, max_rate=100.0) == 50
    assert cfg.substeps(0.0) == 0
