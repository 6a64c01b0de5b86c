"""Three-species orbital population model with an unscented Kalman filter.

Submodules: ``model`` (population ODE), ``atmosphere`` (density and drag),
``integrator`` (fixed-step RK4), ``ensemble`` (Monte-Carlo members and
moments), ``distfit`` (histogram fits and RMSE index), ``ukf`` (filter),
``cli`` (command-line front end).
"""
from ._kernels import BACKEND
from .atmosphere import DensityModel
from .ensemble import EnsembleConfig, MomentRecord, extract_moments, run_ensemble
from .integrator import IntegratorConfig, propagate_interval, rk4_step
from .model import ModelParams, PopulationState, ShellGrid, SSEMModel
from .ukf import FilterState, UkfConfig, run_filter, weights

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DensityModel", "EnsembleConfig", "MomentRecord", "extract_moments",
    "run_ensemble", "IntegratorConfig", "propagate_interval", "rk4_step", "ModelParams",
    "PopulationState", "ShellGrid", "SSEMModel", "FilterState", "UkfConfig", "run_filter",
    "weights",
]
