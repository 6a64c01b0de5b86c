"""Three-species source-sink population model over altitude shells.

State layouts are species-blocked. A population vector is
``[S_1..S_n, D_1..D_n, N_1..N_n]`` and the augmented vector appends the six
collision-rate blocks ``phi_SS, phi_SD, phi_SN, phi_DD, phi_DN, phi_NN``,
each ``n`` entries long, for ``9 n`` entries in total.
"""
import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .atmosphere import SECONDS_PER_YEAR, DensityModel, decay_rate
from .errors import ConfigurationError, DomainError, IntegrationError, ShapeError
from .integrator import IntegratorConfig

SPECIES = ("S", "D", "N")
PAIRS = ("SS", "SD", "SN", "DD", "DN", "NN")
PHI_FORMS = ("kinetic", "printed")
LAUNCH_MODES = ("null", "constant", "gaussian")


@dataclass(frozen=True)
class ShellGrid:
    """Equal-height altitude shells starting at ``h_min`` (km)."""

    h_min: float = 200.0
    n_shells: int = 36
    dh: float = 50.0
    earth_radius: float = 6378.137

    def __post_init__(self):
        if int(self.n_shells) != self.n_shells or self.n_shells < 1:
            raise ConfigurationError("n_shells must be a positive integer")
        object.__setattr__(self, "n_shells", int(self.n_shells))
        if not self.dh > 0:
            raise ConfigurationError("dh must be positive")
        if not self.h_min > 0:
            raise ConfigurationError("h_min must be positive")

    @property
    def lower_altitudes(self):
        return self.h_min + self.dh * np.arange(self.n_shells)

    @property
    def mid_altitudes(self):
        return self.lower_altitudes + self.dh / 2

    @property
    def h_max(self):
        return self.h_min + self.n_shells * self.dh

    @property
    def volumes(self):
        inner = self.earth_radius + self.lower_altitudes
        return 4.0 * math.pi / 3.0 * ((inner + self.dh) ** 3 - inner ** 3)


def shell_volume(grid, i):
    """Volume (km^3) of 1-based shell ``i``."""
    if not 1 <= i <= grid.n_shells:
        raise IndexError(f"shell index {i} outside 1..{grid.n_shells}")
    inner = grid.earth_radius + grid.h_min + (i - 1) * grid.dh
    return 4.0 * math.pi / 3.0 * ((inner + grid.dh) ** 3 - inner ** 3)


@dataclass(frozen=True)
class SpeciesParams:
    radius: float  # m
    mass: float  # kg
    area: float  # m^2
    drag_coeff: float = 2.2
    is_active: bool = False

    def __post_init__(self):
        if not (self.radius > 0 and self.mass > 0 and self.area > 0):
            raise ConfigurationError("species radius, mass and area must be positive")
        if not self.drag_coeff > 0:
            raise ConfigurationError("drag coefficient must be positive")

    @property
    def ballistic(self):
        """C_d A / m in m^2/kg."""
        return self.drag_coeff * self.area / self.mass


ACTIVE = SpeciesParams(radius=1.0, mass=500.0, area=5.0, is_active=True)
DERELICT = SpeciesParams(radius=1.0, mass=500.0, area=5.0)
DEBRIS = SpeciesParams(radius=0.05, mass=1.0, area=0.1)


@dataclass(frozen=True)
class ModelParams:
    """Scalar constants of the population model.

    ``launch_rate`` is objects/year per shell for ``constant`` launches and
    the total over all shells for ``gaussian`` launches.
    """

    alpha_a: float = 0.01
    alpha: float = 0.2
    delta: float = 10.0
    pmd: float = 0.95
    tof: float = 5.0
    v_rel: float = 10.0  # km/s
    launch_mode: str = "null"
    launch_rate: float = 0.0
    launch_mu_h: float = 800.0
    launch_sigma_h: float = 300.0
    lc_min: float = 0.1  # m
    breakup_coef: float = 0.1
    breakup_mass_exp: float = 0.75
    breakup_lc_exp: float = -1.71
    phi_form: str = "kinetic"
    delta_terms_include_phi: bool = True
    drag: bool = True
    active: SpeciesParams = ACTIVE
    derelict: SpeciesParams = DERELICT
    debris: SpeciesParams = DEBRIS

    def __post_init__(self):
        for name in ("alpha_a", "alpha", "pmd"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if not self.tof > 0:
            raise ConfigurationError("tof must be positive")
        if not self.v_rel > 0:
            raise ConfigurationError("v_rel must be positive")
        if self.delta < 0:
            raise ConfigurationError("delta must be non-negative")
        if self.launch_mode not in LAUNCH_MODES:
            raise ConfigurationError(f"unknown launch_mode {self.launch_mode!r}")
        if self.phi_form not in PHI_FORMS:
            raise ConfigurationError(f"unknown phi_form {self.phi_form!r}")
        if self.launch_rate < 0:
            raise ConfigurationError("launch_rate must be non-negative")
        if not self.launch_sigma_h > 0:
            raise ConfigurationError("launch_sigma_h must be positive")
        if not self.lc_min > 0:
            raise ConfigurationError("lc_min must be positive")

    @property
    def species(self):
        return {"S": self.active, "D": self.derelict, "N": self.debris}


@dataclass(frozen=True)
class PopulationState:
    """Per-shell object counts of the three species."""

    S: np.ndarray
    D: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        arrays = [np.array(v, dtype=np.float64) for v in (self.S, self.D, self.N)]
        if any(a.ndim != 1 for a in arrays) or len({a.size for a in arrays}) != 1:
            raise ShapeError("S, D and N must be 1-D vectors of equal length")
        if not all(np.isfinite(a).all() for a in arrays):
            raise DomainError("population entries must be finite")
        for name, a in zip(SPECIES, arrays):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_shells(self):
        return self.S.size

    def as_array(self):
        return np.stack([self.S, self.D, self.N])

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            if values.size % 3:
                raise ShapeError("population vector length must be a multiple of 3")
            values = values.reshape(3, -1)
        if values.shape[0] != 3:
            raise ShapeError("population array must have 3 species rows")
        return cls(values[0], values[1], values[2])

    @classmethod
    def zeros(cls, n_shells):
        z = np.zeros(n_shells)
        return cls(z, z, z)


def pack_state(pop, phis):
    """Concatenate populations and the (6, n) collision-rate blocks."""
    phis = np.asarray(phis, dtype=np.float64)
    if phis.shape != (6, pop.n_shells):
        raise ShapeError(f"phi blocks must have shape (6, {pop.n_shells}), got {phis.shape}")
    return np.concatenate([pop.S, pop.D, pop.N, phis.reshape(-1)])


def unpack_state(x, n_shells):
    """Inverse of :func:`pack_state`: returns ``(PopulationState, phis)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (9 * n_shells,):
        raise ShapeError(f"augmented state must have length {9 * n_shells}, got {x.shape}")
    pop = PopulationState.from_array(x[:3 * n_shells])
    return pop, x[3 * n_shells:].reshape(6, n_shells).copy()


def phi_pair(params, r_x, r_y, volume):
    """Pairwise collision-rate coefficient in 1/(object year).

    Radii are in metres, ``volume`` in km^3 and ``params.v_rel`` in km/s.
    """
    if not volume > 0:
        raise DomainError("shell volume must be positive")
    if r_x < 0 or r_y < 0:
        raise DomainError("radii must be non-negative")
    rx = r_x * 1e-3
    ry = r_y * 1e-3
    if params.phi_form == "printed":
        per_second = math.pi * params.v_rel ** 2 * (rx - ry) / volume
    else:
        per_second = math.pi * params.v_rel * (rx + ry) ** 2 / volume
    return per_second * SECONDS_PER_YEAR


def fragment_count(m1, m2, lc_min, coef=0.1, mass_exp=0.75, lc_exp=-1.71):
    """Catastrophic-collision fragments larger than ``lc_min`` metres."""
    if not (m1 > 0 and m2 > 0 and lc_min > 0):
        raise DomainError("masses and characteristic length must be positive")
    return coef * (m1 + m2) ** mass_exp * lc_min ** lc_exp


def static_phi(params, grid):
    """(6, n) array of collision-rate coefficients for every pair and shell."""
    sp = params.species
    vols = grid.volumes
    out = np.empty((6, grid.n_shells))
    for k, pair in enumerate(PAIRS):
        rx, ry = sp[pair[0]].radius, sp[pair[1]].radius
        out[k] = [phi_pair(params, rx, ry, v) for v in vols]
    return out


def fragment_counts(params):
    """Fragment counts for the six species pairs, in ``PAIRS`` order."""
    sp = params.species
    return np.array([
        fragment_count(sp[p[0]].mass, sp[p[1]].mass, params.lc_min,
                       params.breakup_coef, params.breakup_mass_exp, params.breakup_lc_exp)
        for p in PAIRS
    ])


def launch_profile(params, grid):
    """Launch rate per shell in objects/year."""
    n = grid.n_shells
    if params.launch_mode == "null":
        return np.zeros(n)
    if params.launch_mode == "constant":
        return np.full(n, float(params.launch_rate))
    w = np.exp(-(grid.mid_altitudes - params.launch_mu_h) ** 2 / (2 * params.launch_sigma_h ** 2))
    return params.launch_rate * w / w.sum()


def default_initial_population(grid):
    """Smooth illustrative LEO population over the grid's shells.

    Counts follow Gaussian altitude profiles (per km of altitude) for active
    satellites (peak 550 km), derelicts (800 km) and debris (850 km).
    """
    h = grid.mid_altitudes

    def profile(total, mu, sigma):
        return total * grid.dh * np.exp(-(h - mu) ** 2 / (2 * sigma ** 2)) / (sigma * math.sqrt(2 * math.pi))

    return PopulationState(profile(6000.0, 550.0, 100.0),
                           profile(3000.0, 800.0, 200.0),
                           profile(15000.0, 850.0, 250.0))


def load_initial_csv(path, grid):
    """Read initial populations from a ``shell,S,D,N`` CSV (1-based shells)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"shell", "S", "D", "N"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigurationError(f"{path}: missing columns {sorted(missing)}")
        values = np.full((3, grid.n_shells), np.nan)
        for row in reader:
            i = int(row["shell"])
            if not 1 <= i <= grid.n_shells:
                raise ShapeError(f"{path}: shell {i} outside 1..{grid.n_shells}")
            values[:, i - 1] = [float(row[s]) for s in SPECIES]
    if np.isnan(values).any():
        raise ShapeError(f"{path}: every shell 1..{grid.n_shells} needs a row")
    return PopulationState.from_array(values)


@dataclass(frozen=True)
class SSEMModel:
    """Bound model: parameters, grid and atmosphere with derived constants.

    Flat population vectors may carry a leading batch axis: ``(3n,)`` or
    ``(B, 3n)``; augmented vectors likewise ``(9n,)`` or ``(B, 9n)``.
    """

    params: ModelParams = ModelParams()
    grid: ShellGrid = ShellGrid()
    atm: DensityModel = DensityModel()
    phi: np.ndarray = field(init=False, repr=False, compare=False)
    nf: np.ndarray = field(init=False, repr=False, compare=False)
    lam: np.ndarray = field(init=False, repr=False, compare=False)
    kd0: np.ndarray = field(init=False, repr=False, compare=False)
    kn0: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p, g = self.params, self.grid
        if g.h_min < self.atm.base_table[0][0] or g.h_max > self.atm.h_max:
            raise ConfigurationError("shell grid extends beyond the density table")
        set_ = functools.partial(object.__setattr__, self)
        set_("phi", static_phi(p, g))
        set_("nf", fragment_counts(p))
        set_("lam", launch_profile(p, g))
        if p.drag:
            h = g.mid_altitudes
            kd = decay_rate(self.atm, p.derelict, h, self.atm.phase, g.earth_radius)
            kn = decay_rate(self.atm, p.debris, h, self.atm.phase, g.earth_radius)
            # evaluated where the solar factor is exactly one
            set_("kd0", np.asarray(kd, dtype=np.float64) / g.dh)
            set_("kn0", np.asarray(kn, dtype=np.float64) / g.dh)
        else:
            set_("kd0", np.zeros(g.n_shells))
            set_("kn0", np.zeros(g.n_shells))

    @property
    def n(self):
        return self.grid.n_shells

    def coef(self, catastrophic=True):
        p = self.params
        c = np.empty(_kernels.N_COEF)
        c[:7] = (p.alpha_a, p.alpha, p.delta, p.pmd, p.tof,
                 1.0 if catastrophic else 0.0,
                 1.0 if p.delta_terms_include_phi else 0.0)
        c[7:] = self.nf
        return c

    def drag_rates(self, t):
        """Per-shell drag outflux rates (1/year) for D and N at time ``t``."""
        fac = self.atm.solar_factor(t)
        return self.kd0 * fac, self.kn0 * fac

    def max_rate(self):
        """Fastest linear decay rate in the system (1/year), at solar maximum."""
        peak = 1.0 + self.atm.effective_amplitude
        drag = max(float(self.kd0.max()), float(self.kn0.max())) * peak
        return drag + 1.0 / self.params.tof

    def _split(self, y, width):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != width * self.n or y.ndim not in (1, 2):
            raise ShapeError(f"expected trailing length {width * self.n}, got shape {y.shape}")
        return y.reshape(-1, width, self.n)

    def rhs_populations(self, t, y, phi=None, catastrophic=True):
        """Derivative of a flat population vector (objects/year)."""
        pop = self._split(y, 3)
        phi = self.phi[None] if phi is None else np.asarray(phi, dtype=np.float64).reshape(-1, 6, self.n)
        kd, kn = self.drag_rates(t)
        out = _kernels.rhs(pop, phi, self.lam, kd, kn, self.coef(catastrophic))
        return out.reshape(np.shape(y))

    def rhs_augmented(self, t, y):
        """Derivative of a flat augmented vector; the phi blocks are constant."""
        aug = self._split(y, 9)
        out = np.zeros_like(aug)
        kd, kn = self.drag_rates(t)
        out[:, :3] = _kernels.rhs(np.ascontiguousarray(aug[:, :3]), np.ascontiguousarray(aug[:, 3:]),
                                  self.lam, kd, kn, self.coef())
        return out.reshape(np.shape(y))

    def propagate(self, y, t0, t1, config=IntegratorConfig(), phi=None, catastrophic=True):
        """RK4-propagate a flat population vector (or batch) from t0 to t1.

        Uses the fused kernel with equal substeps no longer than
        ``config.dt_sub`` and within the stability cap.
        """
        pop = self._split(y, 3)
        if t1 < t0:
            raise ValueError("t1 must not precede t0")
        n_steps = config.substeps(t1 - t0, self.max_rate())
        if n_steps == 0:
            return np.array(y, dtype=np.float64, copy=True)
        phi = self.phi[None] if phi is None else np.ascontiguousarray(phi, dtype=np.float64).reshape(-1, 6, self.n)
        dt = (t1 - t0) / n_steps
        atm = self.atm
        out, failed, idx = _kernels.rk4_populations(
            pop, phi, self.lam, self.kd0, self.kn0, self.coef(catastrophic),
            t0, dt, n_steps, atm.effective_amplitude, atm.period, atm.phase)
        if failed >= 0:
            raise IntegrationError("non-finite population", t0 + failed * dt, int(idx))
        return out.reshape(np.shape(y))

    def propagate_augmented(self, y, t0, t1, config=IntegratorConfig()):
        """Propagate augmented vectors; each row uses its own phi blocks."""
        aug = self._split(y, 9)
        out = aug.copy()
        pops = np.ascontiguousarray(aug[:, :3]).reshape(aug.shape[0], -1)
        out[:, :3] = self.propagate(pops, t0, t1, config, phi=aug[:, 3:]).reshape(-1, 3, self.n)
        return out.reshape(np.shape(y))


@functools.lru_cache(maxsize=32)
def bound_model(params, grid, atm):
    """Cached :class:`SSEMModel` for a parameter triple."""
    return SSEMModel(params, grid, atm)


def rhs_three_species(x, t, params, grid, atm):
    """Population derivative with the static collision rates of ``params``."""
    if x.n_shells != grid.n_shells:
        raise ShapeError(f"state has {x.n_shells} shells, grid has {grid.n_shells}")
    model = bound_model(params, grid, atm)
    return PopulationState.from_array(model.rhs_populations(t, x.as_array().reshape(-1)))


def rhs_augmented(x, t, params, grid, atm):
    """Augmented derivative: phi blocks read from ``x``, their rates are zero."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (9 * grid.n_shells,):
        raise ShapeError(f"augmented state must have length {9 * grid.n_shells}, got {x.shape}")
    return bound_model(params, grid, atm).rhs_augmented(t, x)
