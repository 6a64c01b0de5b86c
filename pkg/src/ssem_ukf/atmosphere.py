"""Piecewise-exponential atmosphere and the drag-driven shell decay flux."""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

MU_EARTH = 3.986004418e14  # m^3 / s^2
SECONDS_PER_YEAR = 31_557_600.0  # Julian year

# (base altitude km, base density kg/m^3, scale height km); the last row
# extends up to ``DensityModel.h_max``.
DEFAULT_TABLE = (
    (200.0, 2.789e-10, 37.105),
    (250.0, 7.248e-11, 45.546),
    (300.0, 2.418e-11, 53.628),
    (400.0, 3.725e-12, 58.515),
    (500.0, 6.967e-13, 63.822),
    (600.0, 1.454e-13, 71.835),
    (800.0, 1.170e-14, 124.64),
    (1000.0, 3.019e-15, 268.00),
)

KINDS = ("static_exponential", "solar_modulated")


@dataclass(frozen=True)
class DensityModel:
    """Piecewise exponential density, optionally scaled by a solar cycle.

    The solar factor is ``1 + amplitude * sin(2 pi (t - phase) / period)``
    with ``t`` in years.
    """

    kind: str = "static_exponential"
    base_table: tuple = DEFAULT_TABLE
    h_max: float = 2000.0
    period: float = 11.0
    amplitude: float = 0.6
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown atmosphere kind {self.kind!r}")
        table = tuple(tuple(float(v) for v in row) for row in self.base_table)
        object.__setattr__(self, "base_table", table)
        if not table:
            raise ConfigurationError("density table is empty")
        h0 = [row[0] for row in table]
        if any(b <= a for a, b in zip(h0, h0[1:])):
            raise ConfigurationError("density table altitudes must increase")
        if any(row[1] <= 0 or row[2] <= 0 for row in table):
            raise ConfigurationError("density table needs rho0 > 0 and H > 0")
        if self.h_max <= h0[-1]:
            raise ConfigurationError("h_max must exceed the last table altitude")
        if not 0.0 <= self.amplitude < 1.0:
            raise ConfigurationError("solar amplitude must lie in [0, 1)")
        if self.period <= 0:
            raise ConfigurationError("solar period must be positive")

    @property
    def effective_amplitude(self):
        return self.amplitude if self.kind == "solar_modulated" else 0.0

    def solar_factor(self, t):
        amp = self.effective_amplitude
        if amp == 0.0:
            return 1.0
        return 1.0 + amp * math.sin(2.0 * math.pi * (t - self.phase) / self.period)

    def static_density(self, h):
        """Time-independent profile (kg/m^3) at altitude ``h`` km."""
        h = np.asarray(h, dtype=np.float64)
        lo = self.base_table[0][0]
        if np.any(h < lo) or np.any(h > self.h_max) or not np.all(np.isfinite(h)):
            raise DomainError(f"altitude outside density table span [{lo}, {self.h_max}] km")
        edges = np.array([row[0] for row in self.base_table])
        rho0 = np.array([row[1] for row in self.base_table])
        scale = np.array([row[2] for row in self.base_table])
        k = np.searchsorted(edges, h, side="right") - 1
        rho = rho0[k] * np.exp(-(h - edges[k]) / scale[k])
        return rho if rho.ndim else float(rho)


def density(model, h, t):
    """Atmospheric density in kg/m^3 at altitude ``h`` (km) and time ``t`` (years)."""
    return model.static_density(h) * model.solar_factor(t)


def decay_rate(model, species, h, t, earth_radius=6378.137):
    """Altitude loss rate in km/year of a circular orbit at ``h`` km.

    Uses da/dt = rho * (C_d A / m) * sqrt(mu a).
    """
    a = (earth_radius + np.asarray(h, dtype=np.float64)) * 1e3
    rate = density(model, h, t) * species.ballistic * np.sqrt(MU_EARTH * a)
    rate = rate * SECONDS_PER_YEAR / 1e3
    return rate if np.ndim(rate) else float(rate)


def drag_flux(model, species, pop, grid, i, t):
    """Objects per year leaving 1-based shell ``i`` downward by drag."""
    if not 1 <= i <= grid.n_shells:
        raise IndexError(f"shell index {i} outside 1..{grid.n_shells}")
    h_mid = grid.mid_altitudes[i - 1]
    return pop * decay_rate(model, species, h_mid, t, grid.earth_radius) / grid.dh


def load_density_table(path):
    """Read ``h0,rho0,H`` rows from a CSV file with a header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"h0", "rho0", "H"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigurationError(f"density table {path} lacks columns {sorted(missing)}")
        rows = [(float(r["h0"]), float(r["rho0"]), float(r["H"])) for r in reader]
    return tuple(rows)
