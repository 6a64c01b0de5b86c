"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``SSEM_UKF_NUMBA=0`` to force
the numpy implementations (also used automatically when numba is missing).
Both variants are always importable under explicit names (``*_numba`` and
``*_numpy``) so tests and benchmarks can compare them directly.

Coefficient vector layout used by the population kernels::

    0 alpha_a   1 alpha   2 delta   3 pmd   4 tof
    5 catastrophic switch (1.0 keeps collision terms, 0.0 removes them)
    6 delta-terms-carry-phi switch (1.0 / 0.0)
    7..12 fragment counts for SS, SD, SN, DD, DN, NN
"""
import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

N_COEF = 13

_flag = os.environ.get("SSEM_UKF_NUMBA", "1").strip().lower()
USE_NUMBA = numba is not None and _flag not in ("0", "false", "off", "no")
BACKEND = "numba" if USE_NUMBA else "numpy"


def _solar(t, amp, period, phase):
    if amp == 0.0:
        return 1.0
    return 1.0 + amp * math.sin(2.0 * math.pi * (t - phase) / period)


# ---------------------------------------------------------------------------
# population right-hand side
# ---------------------------------------------------------------------------

def _rhs_loop(pop, phi, lam, kd, kn, coef, out):
    n_batch = pop.shape[0]
    n = pop.shape[2]
    aa = coef[0]
    al = coef[1]
    de = coef[2]
    pmd = coef[3]
    tof = coef[4]
    cat = coef[5]
    dphi = coef[6] != 0.0
    multi_phi = phi.shape[0] > 1
    for b in range(n_batch):
        pb = b if multi_phi else 0
        for i in range(n):
            s = pop[b, 0, i]
            d = pop[b, 1, i]
            x = pop[b, 2, i]
            ss = phi[pb, 0, i] * s * s
            sd = phi[pb, 1, i] * s * d
            sn = phi[pb, 2, i] * s * x
            dd = phi[pb, 3, i] * d * d
            dn = phi[pb, 4, i] * d * x
            nn = phi[pb, 5, i] * x * x
            if dphi:
                xsd = de * sd
                xsn = de * sn
            else:
                xsd = de * s * d
                xsn = de * s * x
            if i + 1 < n:
                fd_in = kd[i + 1] * pop[b, 1, i + 1]
                fn_in = kn[i + 1] * pop[b, 2, i + 1]
            else:
                fd_in = 0.0
                fn_in = 0.0
            fd_out = kd[i] * d
            fn_out = kn[i] * x
            out[b, 0, i] = (lam[i] - s / tof - cat * aa * ss
                            - (de + cat * al) * sd - (de + cat * al) * sn)
            out[b, 1, i] = ((1.0 - pmd) * s / tof - xsd + xsn
                            - cat * dd - cat * dn + fd_in - fd_out)
            out[b, 2, i] = (cat * (coef[7] * aa * ss + coef[8] * al * sd
                                   + coef[9] * al * sn + coef[10] * dd
                                   + coef[11] * dn + coef[12] * nn)
                            + fn_in - fn_out)
    return out


def rhs_numpy(pop, phi, lam, kd, kn, coef):
    """Vectorised population derivative; ``pop`` is (B, 3, n), ``phi`` (B|1, 6, n)."""
    aa, al, de, pmd, tof, cat, dphi = coef[:7]
    s = pop[:, 0, :]
    d = pop[:, 1, :]
    x = pop[:, 2, :]
    ss = phi[:, 0, :] * s * s
    sd = phi[:, 1, :] * s * d
    sn = phi[:, 2, :] * s * x
    dd = phi[:, 3, :] * d * d
    dn = phi[:, 4, :] * d * x
    nn = phi[:, 5, :] * x * x
    if dphi != 0.0:
        xsd = de * sd
        xsn = de * sn
    else:
        xsd = de * s * d
        xsn = de * s * x
    fd_out = kd * d
    fn_out = kn * x
    fd_in = np.zeros_like(fd_out)
    fn_in = np.zeros_like(fn_out)
    fd_in[:, :-1] = fd_out[:, 1:]
    fn_in[:, :-1] = fn_out[:, 1:]
    out = np.empty(pop.shape, dtype=np.float64)
    out[:, 0, :] = (lam - s / tof - cat * aa * ss
                    - (de + cat * al) * sd - (de + cat * al) * sn)
    out[:, 1, :] = ((1.0 - pmd) * s / tof - xsd + xsn
                    - cat * dd - cat * dn + fd_in - fd_out)
    out[:, 2, :] = (cat * (coef[7] * aa * ss + coef[8] * al * sd
                           + coef[9] * al * sn + coef[10] * dd
                           + coef[11] * dn + coef[12] * nn)
                    + fn_in - fn_out)
    return out


# ---------------------------------------------------------------------------
# fused fixed-step RK4 over the population block
# ---------------------------------------------------------------------------

def _rk4_loop(pop, phi, lam, kd0, kn0, coef, t0, dt, n_steps, amp, period, phase):
    x = pop.copy()
    shape = x.shape
    k1 = np.empty(shape)
    k2 = np.empty(shape)
    k3 = np.empty(shape)
    k4 = np.empty(shape)
    tmp = np.empty(shape)
    n = shape[2]
    kd = np.empty(n)
    kn = np.empty(n)
    h2 = dt / 2
    h6 = dt / 6
    flat_x = x.reshape(-1)
    flat_t = tmp.reshape(-1)
    f1 = k1.reshape(-1)
    f2 = k2.reshape(-1)
    f3 = k3.reshape(-1)
    f4 = k4.reshape(-1)
    m = flat_x.size
    for step in range(n_steps):
        t = t0 + step * dt
        fac = _solar_nb(t, amp, period, phase)
        for i in range(n):
            kd[i] = kd0[i] * fac
            kn[i] = kn0[i] * fac
        _rhs_nb(x, phi, lam, kd, kn, coef, k1)
        for j in range(m):
            flat_t[j] = flat_x[j] + h2 * f1[j]
        fac = _solar_nb(t + h2, amp, period, phase)
        for i in range(n):
            kd[i] = kd0[i] * fac
            kn[i] = kn0[i] * fac
        _rhs_nb(tmp, phi, lam, kd, kn, coef, k2)
        for j in range(m):
            flat_t[j] = flat_x[j] + h2 * f2[j]
        _rhs_nb(tmp, phi, lam, kd, kn, coef, k3)
        for j in range(m):
            flat_t[j] = flat_x[j] + dt * f3[j]
        fac = _solar_nb(t + dt, amp, period, phase)
        for i in range(n):
            kd[i] = kd0[i] * fac
            kn[i] = kn0[i] * fac
        _rhs_nb(tmp, phi, lam, kd, kn, coef, k4)
        for j in range(m):
            v = flat_x[j] + h6 * (f1[j] + 2 * f2[j] + 2 * f3[j] + f4[j])
            if not math.isfinite(v):
                return x, step, j
            flat_x[j] = v
    return x, -1, -1


def rk4_populations_numpy(pop, phi, lam, kd0, kn0, coef, t0, dt, n_steps,
                          amp, period, phase):
    """Numpy twin of the fused RK4 kernel.

    Returns ``(pop, failed_step, flat_index)``; ``failed_step`` is -1 on success.
    """
    x = np.array(pop, dtype=np.float64, copy=True)
    for step in range(n_steps):
        t = t0 + step * dt
        fac = _solar(t, amp, period, phase)
        k1 = rhs_numpy(x, phi, lam, kd0 * fac, kn0 * fac, coef)
        fac = _solar(t + dt / 2, amp, period, phase)
        kd = kd0 * fac
        kn = kn0 * fac
        k2 = rhs_numpy(x + dt / 2 * k1, phi, lam, kd, kn, coef)
        k3 = rhs_numpy(x + dt / 2 * k2, phi, lam, kd, kn, coef)
        fac = _solar(t + dt, amp, period, phase)
        k4 = rhs_numpy(x + dt * k3, phi, lam, kd0 * fac, kn0 * fac, coef)
        new = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        bad = ~np.isfinite(new)
        if bad.any():
            return x, step, int(np.flatnonzero(bad.reshape(-1))[0])
        x = new
    return x, -1, -1


# ---------------------------------------------------------------------------
# sequential two-pass sample moments
# ---------------------------------------------------------------------------

def _moments_loop(samples):
    m, p = samples.shape
    mean = np.zeros(p)
    for k in range(m):
        for i in range(p):
            mean[i] += samples[k, i]
    for i in range(p):
        mean[i] = mean[i] / m
    cov = np.zeros((p, p))
    dev = np.empty(p)
    for k in range(m):
        for i in range(p):
            dev[i] = samples[k, i] - mean[i]
        for i in range(p):
            di = dev[i]
            for j in range(p):
                cov[i, j] += di * dev[j]
    for i in range(p):
        for j in range(p):
            cov[i, j] = cov[i, j] / (m - 1)
    return mean, cov


def moments_numpy(samples):
    """Mean and unbiased covariance of ``samples`` (members x variables).

    Accumulates in member order so the result is independent of how the
    samples were produced and matches a naive loop bit for bit.
    """
    samples = np.asarray(samples, dtype=np.float64)
    m, p = samples.shape
    mean = np.zeros(p)
    for k in range(m):
        mean += samples[k]
    mean = mean / m
    cov = np.zeros((p, p))
    for k in range(m):
        dev = samples[k] - mean
        cov += dev[:, None] * dev[None, :]
    return mean, cov / (m - 1)


# ---------------------------------------------------------------------------
# semidefinite Cholesky
# ---------------------------------------------------------------------------

def _chol_loop(a, tol):
    n = a.shape[0]
    low = np.zeros((n, n))
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= low[j, k] * low[j, k]
        if s < -tol:
            return low, j + 1
        if s <= tol:
            continue
        piv = math.sqrt(s)
        low[j, j] = piv
        for i in range(j + 1, n):
            acc = a[i, j]
            for k in range(j):
                acc -= low[i, k] * low[j, k]
            low[i, j] = acc / piv
    return low, -1


def cholesky_psd_numpy(a, tol):
    """Lower factor of a positive semidefinite matrix.

    Pivots within ``tol`` of zero produce an all-zero column. Returns
    ``(L, minor)`` where ``minor`` is the 1-based failing leading minor or -1.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    low = np.zeros((n, n))
    for j in range(n):
        s = a[j, j] - low[j, :j] @ low[j, :j]
        if s < -tol:
            return low, j + 1
        if s <= tol:
            continue
        piv = math.sqrt(s)
        low[j, j] = piv
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / piv
    return low, -1


if numba is not None:
    _jit = numba.njit(cache=True, nogil=True)
    _solar_nb = _jit(_solar)
    _rhs_nb = _jit(_rhs_loop)
    _rk4_nb = _jit(_rk4_loop)
    _moments_nb = _jit(_moments_loop)
    _chol_nb = _jit(_chol_loop)

    def rhs_numba(pop, phi, lam, kd, kn, coef):
        out = np.empty(pop.shape, dtype=np.float64)
        return _rhs_nb(pop, phi, lam, kd, kn, coef, out)

    def rk4_populations_numba(pop, phi, lam, kd0, kn0, coef, t0, dt, n_steps,
                              amp, period, phase):
        return _rk4_nb(np.ascontiguousarray(pop, dtype=np.float64), phi, lam,
                       kd0, kn0, coef, float(t0), float(dt), int(n_steps),
                       float(amp), float(period), float(phase))

    def moments_numba(samples):
        return _moments_nb(np.ascontiguousarray(samples, dtype=np.float64))

    def cholesky_psd_numba(a, tol):
        return _chol_nb(np.ascontiguousarray(a, dtype=np.float64), float(tol))
else:  # pragma: no cover
    rhs_numba = rk4_populations_numba = moments_numba = cholesky_psd_numba = None


if USE_NUMBA:
    rhs = rhs_numba
    rk4_populations = rk4_populations_numba
    moments = moments_numba
    cholesky_psd = cholesky_psd_numba
else:
    rhs = rhs_numpy
    rk4_populations = rk4_populations_numpy
    moments = moments_numpy
    cholesky_psd = cholesky_psd_numpy
