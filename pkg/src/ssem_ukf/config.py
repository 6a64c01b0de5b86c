"""Flat dotted-key run configuration with typed defaults.

Config files (JSON or TOML) may nest tables; they are flattened to dotted
keys such as ``model.pmd``. Unknown keys are rejected by name.
"""
import json
import os
import sys
from dataclasses import dataclass
from types import MappingProxyType

from .atmosphere import DensityModel, load_density_table
from .ensemble import EnsembleConfig
from .errors import ConfigurationError
from .integrator import IntegratorConfig
from .model import (LAUNCH_MODES, PHI_FORMS, ModelParams, ShellGrid, SpeciesParams, SSEMModel,
                    default_initial_population, load_initial_csv)
from .scenarios import TruthConfig
from .ukf import UkfConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class Key:
    name: str
    default: object
    type: type
    help: str
    choices: tuple = ()


def _species_keys(label, sp):
    return [
        Key(f"species.{label}.radius", sp.radius, float, f"{label} object radius (m)"),
        Key(f"species.{label}.mass", sp.mass, float, f"{label} object mass (kg)"),
        Key(f"species.{label}.area", sp.area, float, f"{label} cross-section for drag (m^2)"),
        Key(f"species.{label}.drag_coeff", sp.drag_coeff, float, f"{label} drag coefficient"),
    ]


_MP = ModelParams()
_UK = UkfConfig()
_EC = EnsembleConfig()
_TC = TruthConfig()

KEYS = (
    Key("seed", 0, int, "master random seed (unsigned 64-bit)"),
    Key("threads", 1, int, "worker thread cap"),
    Key("out", "out", str, "output directory"),
    Key("grid.h_min", 200.0, float, "lower edge of the first shell (km)"),
    Key("grid.n_shells", 36, int, "number of shells"),
    Key("grid.dh", 50.0, float, "shell thickness (km)"),
    Key("model.alpha_a", _MP.alpha_a, float, "active-active collision-avoidance failure fraction"),
    Key("model.alpha", _MP.alpha, float, "active-other collision-avoidance failure fraction"),
    Key("model.delta", _MP.delta, float, "non-catastrophic disabling-collision ratio"),
    Key("model.pmd", _MP.pmd, float, "post-mission disposal probability"),
    Key("model.tof", _MP.tof, float, "active lifetime (years)"),
    Key("model.v_rel", _MP.v_rel, float, "mean relative impact speed (km/s)"),
    Key("model.launch_mode", _MP.launch_mode, str, "launch source", LAUNCH_MODES),
    Key("model.launch_rate", _MP.launch_rate, float,
        "launches/year (per shell if constant, total if gaussian)"),
    Key("model.launch_mu_h", _MP.launch_mu_h, float, "gaussian launch profile centre (km)"),
    Key("model.launch_sigma_h", _MP.launch_sigma_h, float, "gaussian launch profile width (km)"),
    Key("model.lc_min", _MP.lc_min, float, "smallest tracked fragment length (m)"),
    Key("model.phi_form", _MP.phi_form, str, "collision-rate formula", PHI_FORMS),
    Key("model.delta_terms_include_phi", _MP.delta_terms_include_phi, bool,
        "scale disabling-collision terms by phi"),
    Key("model.drag", _MP.drag, bool, "enable atmospheric drag"),
    *_species_keys("active", _MP.active),
    *_species_keys("derelict", _MP.derelict),
    *_species_keys("debris", _MP.debris),
    Key("atmosphere.kind", "static_exponential", str, "density model",
        ("static_exponential", "solar_modulated")),
    Key("atmosphere.table", "", str, "density table CSV (h0,rho0,H); empty for built-in"),
    Key("atmosphere.period", 11.0, float, "solar cycle period (years)"),
    Key("atmosphere.amplitude", 0.6, float, "relative solar density amplitude"),
    Key("atmosphere.phase", 0.0, float, "solar cycle phase (years)"),
    Key("integrator.dt_sub", 0.1, float, "RK4 substep (years)"),
    Key("integrator.stability", 2.0, float, "substep cap factor over the fastest decay rate"),
    Key("initial.path", "", str, "initial population CSV (shell,S,D,N); empty for built-in"),
    Key("propagate.horizon", 100.0, float, "propagation horizon (years)"),
    Key("propagate.step", 1.0, float, "output interval (years)"),
    Key("propagate.mode", "populations", str, "state layout", ("populations", "augmented")),
    Key("ensemble.n_members", _EC.n_members, int, "number of ensemble members"),
    Key("ensemble.horizon", _EC.horizon, float, "ensemble horizon (years)"),
    Key("ensemble.step", _EC.step, float, "ensemble output step (years)"),
    Key("ensemble.init_jitter", _EC.init_jitter, float, "relative initial-population jitter"),
    Key("ensemble.init_poisson", _EC.init_poisson, bool, "draw initial counts from Poisson"),
    Key("ensemble.collisions", _EC.collisions, bool, "sample discrete collision events"),
    Key("ensemble.cross_shell", False, bool, "emit cross-shell covariances"),
    Key("ensemble.write_members", True, bool, "write member trajectories CSV"),
    Key("fit.members", "", str, "members CSV to fit; empty for <out>/members.csv"),
    Key("fit.families", "gaussian,gamma,rician", list, "comma-separated families"),
    Key("fit.species", "S,D,N", list, "comma-separated species"),
    Key("fit.n_bins", 30, int, "histogram bins"),
    Key("filter.moments", "", str, "moments CSV; empty for synthetic truth measurements"),
    Key("filter.horizon", 40.0, float, "filter horizon (years)"),
    Key("filter.a", _UK.a, float, "sigma-point spread"),
    Key("filter.kappa", _UK.kappa, float, "secondary scaling"),
    Key("filter.beta", _UK.beta, float, "prior-distribution parameter"),
    Key("filter.q_scale", _UK.q_scale, float, "process noise fraction of |x0|"),
    Key("filter.p0_scale", _UK.p0_scale, float, "initial covariance fraction of |x0|"),
    Key("filter.r_floor", _UK.r_floor, float, "measurement variance floor (objects^2)"),
    Key("filter.p_floor", _UK.p_floor, float, "population variance floor (objects^2)"),
    Key("filter.step", _UK.step, float, "filter step (years)"),
    Key("filter.phi_scaled", _UK.phi_scaled, bool, "carry phi states in units of 1e-8"),
    Key("filter.steady_fraction", _UK.steady_fraction, float,
        "trailing fraction of steps averaged for steady-state phi"),
    Key("filter.freeze_phi", False, bool, "zero the phi rows of the gain"),
    Key("truth.kind", "static_exponential", str, "atmosphere of the synthetic truth",
        ("static_exponential", "solar_modulated")),
    Key("truth.rel_noise", _TC.rel_noise, float, "relative measurement noise sd"),
    Key("truth.abs_noise", _TC.abs_noise, float, "absolute measurement noise sd floor"),
    Key("report.fit_index", "", str, "fit-index CSV; empty for <out>/fit_index.csv"),
    Key("report.trace", "", str, "filter trace CSV; empty for <out>/filter_trace.csv"),
    Key("report.summary", "", str, "filter summary JSON; empty for <out>/filter_summary.json"),
)
SCHEMA = {k.name: k for k in KEYS}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce(name, value):
    """Convert ``value`` to the declared type of key ``name``."""
    if name not in SCHEMA:
        raise ConfigurationError(f"unknown configuration key {name!r}")
    key = SCHEMA[name]
    try:
        if key.type is bool:
            if isinstance(value, bool):
                out = value
            elif isinstance(value, str) and value.strip().lower() in _TRUE | _FALSE:
                out = value.strip().lower() in _TRUE
            else:
                raise ValueError(value)
        elif key.type is list:
            items = value.split(",") if isinstance(value, str) else list(value)
            out = ",".join(str(v).strip() for v in items if str(v).strip())
        elif key.type is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            out = int(value)
        elif key.type is float:
            if isinstance(value, bool):
                raise ValueError(value)
            out = float(value)
        else:
            if not isinstance(value, str):
                raise ValueError(value)
            out = value
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name}: cannot interpret {value!r} as {key.type.__name__}") from None
    if key.choices and out not in key.choices:
        raise ConfigurationError(f"{name}: {out!r} not in {list(key.choices)}")
    return out


def flatten(mapping, prefix=""):
    flat = {}
    for k, v in mapping.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(flatten(v, name + "."))
        else:
            flat[name] = v
    return flat


def load_config_file(path):
    """Flat dict from a ``.json`` or ``.toml`` file."""
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext == ".toml":
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a table")
    return flatten(data)


def parse_override(text):
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise ConfigurationError(f"override {text!r} is not key=value")
    return name.strip(), value


class RunConfig:
    """Resolved configuration: defaults, then file values, then overrides."""

    def __init__(self, values=None):
        merged = {k.name: k.default for k in KEYS}
        for name, value in (values or {}).items():
            merged[name] = coerce(name, value)
        self._values = MappingProxyType(merged)

    @classmethod
    def resolve(cls, path=None, overrides=(), **flags):
        values = dict(load_config_file(path)) if path else {}
        for text in overrides:
            name, value = parse_override(text)
            values[name] = value
        for name, value in flags.items():
            if value is not None:
                values[name] = value
        return cls(values)

    def __getitem__(self, name):
        if name not in self._values:
            raise ConfigurationError(f"unknown configuration key {name!r}")
        return self._values[name]

    def items(self):
        return self._values.items()

    def as_dict(self):
        return dict(self._values)

    def list(self, name):
        return [v for v in self[name].split(",") if v]

    def path(self, name, default_name):
        """Configured path, or ``default_name`` inside the output directory."""
        return self[name] or os.path.join(self["out"], default_name)


def build_grid(cfg):
    return ShellGrid(h_min=cfg["grid.h_min"], n_shells=cfg["grid.n_shells"], dh=cfg["grid.dh"])


def _species(cfg, label, active):
    return SpeciesParams(radius=cfg[f"species.{label}.radius"], mass=cfg[f"species.{label}.mass"],
                         area=cfg[f"species.{label}.area"],
                         drag_coeff=cfg[f"species.{label}.drag_coeff"], is_active=active)


def build_params(cfg):
    names = ("alpha_a", "alpha", "delta", "pmd", "tof", "v_rel", "launch_mode", "launch_rate",
             "launch_mu_h", "launch_sigma_h", "lc_min", "phi_form", "delta_terms_include_phi", "drag")
    return ModelParams(**{n: cfg[f"model.{n}"] for n in names},
                       active=_species(cfg, "active", True),
                       derelict=_species(cfg, "derelict", False),
                       debris=_species(cfg, "debris", False))


def build_atmosphere(cfg, kind=None):
    table = load_density_table(cfg["atmosphere.table"]) if cfg["atmosphere.table"] else None
    kw = dict(period=cfg["atmosphere.period"], amplitude=cfg["atmosphere.amplitude"],
              phase=cfg["atmosphere.phase"])
    if table is not None:
        kw["base_table"] = table
    return DensityModel(kind or cfg["atmosphere.kind"], **kw)


def build_model(cfg, kind=None):
    return SSEMModel(build_params(cfg), build_grid(cfg), build_atmosphere(cfg, kind))


def build_integrator(cfg):
    return IntegratorConfig(dt_sub=cfg["integrator.dt_sub"], stability=cfg["integrator.stability"])


def build_initial(cfg, grid):
    if cfg["initial.path"]:
        return load_initial_csv(cfg["initial.path"], grid)
    return default_initial_population(grid)


def build_ensemble_config(cfg):
    return EnsembleConfig(n_members=cfg["ensemble.n_members"], horizon=cfg["ensemble.horizon"],
                          step=cfg["ensemble.step"], seed=cfg["seed"],
                          init_jitter=cfg["ensemble.init_jitter"],
                          init_poisson=cfg["ensemble.init_poisson"],
                          collisions=cfg["ensemble.collisions"])


def build_ukf_config(cfg):
    names = ("a", "kappa", "beta", "q_scale", "p0_scale", "r_floor", "p_floor", "step",
             "phi_scaled", "steady_fraction")
    return UkfConfig(**{n: cfg[f"filter.{n}"] for n in names})


def build_truth_config(cfg):
    n_steps = max(0, round(cfg["filter.horizon"] / cfg["filter.step"]))
    return TruthConfig(n_steps=n_steps, step=cfg["filter.step"], rel_noise=cfg["truth.rel_noise"],
                       abs_noise=cfg["truth.abs_noise"], seed=cfg["seed"])
