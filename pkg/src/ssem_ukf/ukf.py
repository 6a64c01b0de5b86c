"""Scaled unscented Kalman filter over the augmented population state.

The core (:func:`weights`, :func:`sigma_points`, :func:`predict`,
:func:`update`, :func:`condition_covariance`) works on any transition
``fx(chi, t0, t1)`` and measurement ``hx(chi)`` acting on row-stacked
sigma points. :func:`run_filter` wires it to the population model.

Collision-rate states are carried in units of ``phi_unit`` (1e-8 by default)
so that population and rate variances stay within a few orders of magnitude.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import ConfigurationError, CovarianceError, ShapeError
from .integrator import IntegratorConfig
from .model import PAIRS

PHI_UNIT = 1e-8


@dataclass(frozen=True)
class UkfConfig:
    a: float = 0.25
    kappa: float = 0.0
    beta: float = 2.0
    q_scale: float = 0.05
    p0_scale: float = 0.10
    r_floor: float = 1.0
    p_floor: float = 0.1
    step: float = 1.0
    phi_scaled: bool = True
    phi_unit: float = PHI_UNIT
    phi_floor: float = 1e-12
    steady_fraction: float = 0.5
    redraw: bool = True

    def __post_init__(self):
        if not 0 < self.a <= 1:
            raise ConfigurationError("spread parameter a must lie in (0, 1]")
        if not (self.r_floor > 0 and self.p_floor > 0):
            raise ConfigurationError("covariance floors must be positive")
        if not self.step > 0:
            raise ConfigurationError("filter step must be positive")
        if not 0 < self.steady_fraction <= 1:
            raise ConfigurationError("steady_fraction must lie in (0, 1]")
        if self.q_scale < 0 or self.p0_scale < 0:
            raise ConfigurationError("q_scale and p0_scale must be non-negative")


def weights(n_states, config=UkfConfig()):
    """Mean and covariance weights of the 2n+1 sigma points, and lambda."""
    if n_states < 1:
        raise ConfigurationError("n_states must be at least 1")
    a = config.a
    lam = a * a * (n_states + config.kappa) - n_states
    if not n_states + lam > 0:
        raise ConfigurationError(f"n_states + lambda = {n_states + lam} must be positive")
    wm = np.full(2 * n_states + 1, 1.0 / (2.0 * (n_states + lam)))
    wc = wm.copy()
    wm[0] = lam / (n_states + lam)
    wc[0] = wm[0] + (1.0 - a * a + config.beta)
    return wm, wc, lam


def _lower_factor(a):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.max(np.abs(np.diag(a)))) if a.size else 0.0
    tol = 16.0 * a.shape[0] * np.finfo(float).eps * max(scale, np.finfo(float).tiny)
    low, minor = _kernels.cholesky_psd(a, tol)
    if minor >= 0:
        raise CovarianceError("covariance is not positive semidefinite", minor)
    return low


def sigma_points(x, P, lam, n=None):
    """Sigma points as rows: ``x``, then ``x + L_j`` and ``x - L_j``.

    ``L`` is the lower Cholesky factor of ``(n + lam) P``; semidefinite
    matrices are factorised with zero columns for null directions.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size if n is None else n
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (n, n) or x.shape != (n,):
        raise ShapeError(f"mean/covariance shapes {x.shape}, {P.shape} do not match n={n}")
    low = _lower_factor((n + lam) * P)
    chi = np.empty((2 * n + 1, n))
    chi[0] = x
    chi[1:n + 1] = x + low.T
    chi[n + 1:] = x - low.T
    return chi


def condition_covariance(P, p_floor=0.1, floor_idx=None):
    """Symmetrise, clamp negative eigenvalues to zero and floor diagonals.

    Only the diagonal entries listed in ``floor_idx`` are raised to
    ``p_floor``. Matrices that are already PSD skip the eigen rebuild, so
    they come back unchanged apart from exact symmetrisation.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError("covariance must be square")
    if not np.isfinite(P).all():
        raise CovarianceError("covariance has non-finite entries")
    P = (P + P.T) / 2
    w, v = np.linalg.eigh(P)
    if w.size and w[0] < 0:
        P = (v * np.maximum(w, 0.0)) @ v.T
        P = (P + P.T) / 2
    if floor_idx is not None:
        idx = np.asarray(floor_idx, dtype=np.intp)
        d = P[idx, idx]
        P[idx, idx] = np.maximum(d, p_floor)
    return P


@dataclass
class FilterState:
    x: np.ndarray
    P: np.ndarray
    t: float


def predict(fs, config, fx, Q):
    """Propagate the sigma points and recombine them.

    Returns the predicted state (covariance not yet conditioned) and the
    propagated sigma points.
    """
    n = fs.x.size
    wm, wc, lam = weights(n, config)
    chi = sigma_points(fs.x, fs.P, lam, n)
    t1 = fs.t + config.step
    chi_f = np.asarray(fx(chi, fs.t, t1), dtype=np.float64)
    x_pred = wm @ chi_f
    dev = chi_f - x_pred
    P_pred = (dev.T * wc) @ dev + Q
    return FilterState(x_pred, P_pred, t1), chi_f


@dataclass
class UpdateInfo:
    y_hat: np.ndarray
    innovation: np.ndarray
    Pyy: np.ndarray
    K: np.ndarray


def _solve_gain(Pyy, Pxy):
    try:
        return scipy.linalg.solve(Pyy, Pxy.T, assume_a="pos").T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        try:
            return scipy.linalg.solve(Pyy, Pxy.T).T
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise CovarianceError(f"innovation covariance is singular: {exc}") from exc


def update(pred, y, R, config, hx, floor_idx=None, chi=None, gain_mask=None):
    """Measurement update of a predicted state.

    With ``config.redraw`` the sigma points are redrawn from the conditioned
    prediction; otherwise the propagated points ``chi`` are reused.
    ``gain_mask`` (boolean per state) zeroes the corresponding gain rows.
    """
    n = pred.x.size
    wm, wc, lam = weights(n, config)
    P_pred = condition_covariance(pred.P, config.p_floor, floor_idx)
    if config.redraw or chi is None:
        chi = sigma_points(pred.x, P_pred, lam, n)
    Y = np.asarray(hx(chi), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if Y.shape[1] != y.size or R.shape != (y.size, y.size):
        raise ShapeError("measurement, its covariance and h(x) disagree in size")
    if not np.isfinite(y).all():
        raise ShapeError("measurement has non-finite entries")
    y_hat = wm @ Y
    dy = Y - y_hat
    dx = chi - pred.x
    Pyy = (dy.T * wc) @ dy + R
    Pyy = (Pyy + Pyy.T) / 2
    Pxy = (dx.T * wc) @ dy
    K = _solve_gain(Pyy, Pxy)
    if gain_mask is not None:
        K[~np.asarray(gain_mask, dtype=bool)] = 0.0
    innov = y - y_hat
    x_new = pred.x + K @ innov
    P_new = P_pred - K @ Pyy @ K.T
    P_new = condition_covariance(P_new, config.p_floor, floor_idx)
    return FilterState(x_new, P_new, pred.t), UpdateInfo(y_hat, innov, Pyy, K)


# ---------------------------------------------------------------------------
# population-model wiring
# ---------------------------------------------------------------------------

def measurement_indices(n_shells):
    """State index of each shell-interleaved measurement entry."""
    shell = np.repeat(np.arange(n_shells), 3)
    species = np.tile(np.arange(3), n_shells)
    return species * n_shells + shell


def measurement_model(x):
    """Shell-interleaved ``[S_1, D_1, N_1, ..., S_n, D_n, N_n]`` of an augmented state."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 9:
        raise ShapeError(f"augmented state length {x.shape[-1]} is not a multiple of 9")
    return x[..., measurement_indices(x.shape[-1] // 9)]


def state_scale(n_shells, config):
    unit = config.phi_unit if config.phi_scaled else 1.0
    return np.concatenate([np.ones(3 * n_shells), np.full(6 * n_shells, unit)])


def ssem_transition(model, integ=IntegratorConfig(), scale=None):
    """Sigma-point transition through the augmented population model.

    ``scale`` converts internal phi units to 1/(object year). The phi blocks
    have zero time derivative, so they are carried over unchanged.
    """
    n3 = 3 * model.n
    unit = 1.0 if scale is None else scale[n3:]

    def fx(chi, t0, t1):
        out = chi.copy()
        phi = chi[:, n3:] * unit
        out[:, :n3] = model.propagate(np.ascontiguousarray(chi[:, :n3]), t0, t1, integ, phi=phi)
        return out

    return fx


def initial_state(record, model):
    """Augmented physical state from a moment record and the static rates."""
    pops = record.mean.T.reshape(-1)  # species-blocked
    return np.concatenate([pops, model.phi.reshape(-1)])


def _diag_from_state(x, fraction, n3, phi_floor):
    d = fraction * np.abs(x)
    d[n3:] = np.maximum(d[n3:], phi_floor)
    return np.diag(d)


@dataclass
class FilterTrace:
    """Per-step filter output in physical units (phi in 1/(object year))."""

    times: np.ndarray
    x: np.ndarray
    var: np.ndarray
    innovation: np.ndarray
    pyy_diag: np.ndarray
    gain_norm: np.ndarray
    measured: np.ndarray
    min_eig: np.ndarray
    asymmetry: np.ndarray
    n_shells: int
    x0: np.ndarray = field(default=None, repr=False)
    steady_fraction: float = 0.5

    def __len__(self):
        return self.times.size

    def phi_estimates(self):
        """Estimates as ``(steps, 6, n)``."""
        n = self.n_shells
        return self.x[:, 3 * n:].reshape(-1, 6, n)

    def population_estimates(self):
        n = self.n_shells
        return self.x[:, :3 * n].reshape(-1, 3, n)

    def steady_window(self, fraction=None):
        fraction = self.steady_fraction if fraction is None else fraction
        return int(math.floor(len(self) * (1.0 - fraction)))

    def steady_phi_means(self, fraction=None):
        """Time mean of each phi over the last ``fraction`` of steps, (6, n)."""
        start = self.steady_window(fraction)
        return self.phi_estimates()[start:].mean(axis=0)

    def innovation_coverage(self, k=3.0):
        """Fraction of measured innovation components within k standard deviations."""
        rows = self.measured
        inn = self.innovation[rows]
        sd = np.sqrt(self.pyy_diag[rows])
        if inn.size == 0:
            return float("nan")
        return float(np.mean(np.abs(inn) <= k * sd))


def run_filter(model, moments, config=UkfConfig(), integ=IntegratorConfig(), x0=None,
               n_steps=None, freeze_phi=False, t0=None):
    """Alternate predict and update over a stream of moment records.

    ``x0`` defaults to the first record's means plus the model's static
    rates; ``t0`` to that record's time. Steps without a record at the
    matching time are predict-only and flagged in the trace.
    """
    n = model.n
    n3 = 3 * n
    dim = 9 * n
    moments = list(moments)
    if x0 is None:
        if not moments:
            raise ConfigurationError("x0 is required when the measurement stream is empty")
        x0 = initial_state(moments[0], model)
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (dim,):
        raise ShapeError(f"x0 must have length {dim}")
    if t0 is None:
        t0 = moments[0].time if moments else 0.0
    by_time = {round((rec.time - t0) / config.step): rec for rec in moments
               if abs((rec.time - t0) / config.step - round((rec.time - t0) / config.step)) < 1e-6}
    if n_steps is None:
        n_steps = max((k for k in by_time if k > 0), default=0)
    scale = state_scale(n, config)
    fx = ssem_transition(model, integ, scale)
    floor_idx = np.arange(n3)
    x_int = x0 / scale
    P = condition_covariance(_diag_from_state(x_int, config.p0_scale, n3, config.phi_floor),
                             config.p_floor, floor_idx)
    Q = _diag_from_state(x_int, config.q_scale, n3, config.phi_floor)
    mask = None
    if freeze_phi:
        mask = np.zeros(dim, dtype=bool)
        mask[:n3] = True
    fs = FilterState(x_int, P, float(t0))
    idx = measurement_indices(n)
    rows = {k: np.full((n_steps, w), np.nan) for k, w in
            (("x", dim), ("var", dim), ("innovation", n3), ("pyy", n3))}
    gain = np.zeros(n_steps)
    measured = np.zeros(n_steps, dtype=bool)
    min_eig = np.zeros(n_steps)
    asym = np.zeros(n_steps)
    times = np.zeros(n_steps)

    def hx(chi):
        return chi[:, idx]

    for k in range(n_steps):
        pred, chi = predict(fs, config, fx, Q)
        rec = by_time.get(k + 1)
        if rec is not None:
            R = rec.covariance_matrix()
            d = np.diag(R).copy()
            R[np.diag_indices_from(R)] = np.maximum(d, config.r_floor)
            fs, info = update(pred, rec.measurement(), R, config, hx, floor_idx, chi, mask)
            rows["innovation"][k] = info.innovation
            rows["pyy"][k] = np.diag(info.Pyy)
            gain[k] = float(np.linalg.norm(info.K))
            measured[k] = True
        else:
            fs = FilterState(pred.x, condition_covariance(pred.P, config.p_floor, floor_idx), pred.t)
        times[k] = fs.t
        rows["x"][k] = fs.x * scale
        rows["var"][k] = np.diag(fs.P) * scale * scale
        min_eig[k] = float(np.linalg.eigvalsh(fs.P)[0])
        asym[k] = float(np.max(np.abs(fs.P - fs.P.T)))
    return FilterTrace(times, rows["x"], rows["var"], rows["innovation"], rows["pyy"], gain,
                       measured, min_eig, asym, n, x0, config.steady_fraction)


def phi_table(means, unit=PHI_UNIT):
    """Rows ``(shell, phi_SS, ..., phi_NN)`` with rates expressed in ``unit``."""
    means = np.asarray(means, dtype=np.float64)
    return [(i + 1, *(float(v) for v in means[:, i] / unit)) for i in range(means.shape[1])]


PHI_COLUMNS = tuple(f"phi_{p}" for p in PAIRS)
