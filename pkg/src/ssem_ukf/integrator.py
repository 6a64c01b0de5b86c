"""Deterministic fixed-step classical Runge-Kutta integration."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IntegrationError


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings.

    ``stability`` caps the substep at ``stability / max_rate`` when a caller
    supplies the fastest linear decay rate of its system (1/year); ``None``
    disables the cap. RK4 is stable on the negative real axis up to about
    2.78, and keeps a positive amplification factor up to 2.
    """

    dt_sub: float = 0.1
    method: str = "rk4"
    stability: float | None = 2.0

    def __post_init__(self):
        if not self.dt_sub > 0:
            raise ConfigurationError("dt_sub must be positive")
        if self.method != "rk4":
            raise ConfigurationError(f"unsupported method {self.method!r}")
        if self.stability is not None and not self.stability > 0:
            raise ConfigurationError("stability factor must be positive")

    def substeps(self, interval, max_rate=0.0):
        """Number of equal substeps used to cover ``interval`` years."""
        if interval <= 0:
            return 0
        dt = self.dt_sub
        if self.stability is not None and max_rate > 0:
            dt = min(dt, self.stability / max_rate)
        return max(1, math.ceil(interval / dt - 1e-9))


def _check(x, t):
    bad = ~np.isfinite(x)
    if bad.any():
        raise IntegrationError("non-finite state", t, int(np.flatnonzero(bad.reshape(-1))[0]))


def rk4_step(f, x, t, dt):
    """One classical RK4 step of ``x' = f(t, x)``."""
    x = np.asarray(x, dtype=np.float64)
    k1 = f(t, x)
    _check(k1, t)
    k2 = f(t + dt / 2, x + dt / 2 * k1)
    _check(k2, t)
    k3 = f(t + dt / 2, x + dt / 2 * k2)
    _check(k3, t)
    k4 = f(t + dt, x + dt * k3)
    _check(k4, t)
    new = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    _check(new, t)
    return new


def propagate_interval(f, x, t0, t1, config=IntegratorConfig()):
    """Integrate from ``t0`` to ``t1`` with steps of ``config.dt_sub``.

    Step times are ``t0 + k * dt_sub``; a final shorter step lands exactly
    on ``t1``.
    """
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    x = np.array(x, dtype=np.float64, copy=True)
    dt = config.dt_sub
    n_full = math.floor((t1 - t0) / dt + 1e-9)
    if n_full and t0 + n_full * dt > t1 + 1e-12 * max(1.0, abs(t1)):
        n_full -= 1
    for k in range(n_full):
        x = rk4_step(f, x, t0 + k * dt, dt)
    t = t0 + n_full * dt
    rem = t1 - t
    if rem > 1e-12 * max(1.0, abs(t1)):
        x = rk4_step(f, x, t, rem)
    return x
