"""Time integration of the mean-field equations and steady-state extraction.

The equations of motion, in the rotating frame of the drive (detunings
omega_r - omega_p and omega_q - omega_p), for an open chain
(alpha_0 = alpha_{N+1} = 0):

    i d(alpha_j)/dt = (w - wp - i kappa/2) alpha_j + g beta_j
                      + t (alpha_{j-1} + alpha_{j+1}) + eps(t) delta_{j,d}
    i d(beta_j)/dt  = (W - wp - i Gamma/2) beta_j + U |beta_j|^2 beta_j
                      + g alpha_j

The integrator core is an embedded Dormand-Prince 5(4) pair with PI step
control, JIT-compiled; a fixed-step RK4 mode is kept for bit-reproducible
runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .params import DriveSpec, LatticeParams, MeanFieldState, validate

FIXED_POINT = "fixed_point"
NON_STATIONARY = "non_stationary"
DIVERGED = "diverged"

# aliases used by the sweep layer
CLASS_FIXED_POINT = FIXED_POINT
CLASS_NON_STATIONARY = NON_STATIONARY
CLASS_DIVERGED = DIVERGED

_STATUS_OK = 0
_STATUS_DIVERGED = 1
_STATUS_UNDERFLOW = 2


class DivergenceError(RuntimeError):
    """Integration blew up: some |amplitude| exceeded the divergence bound."""

    def __init__(self, t_blowup: float):
        super().__init__(f"amplitude diverged at t = {t_blowup:.6e} s")
        self.t_blowup = t_blowup


@dataclass(frozen=True)
class IntegratorConfig:
    """Adaptive-step settings and averaging windows.

    t_transient is discarded before any averaging; t_average is the window
    over which means, variance, and the attractor classification are
    accumulated.  Defaults scale with 1/kappa, the slowest intrinsic
    photon relaxation scale.
    """

    dt_max: float
    rel_tol: float = 1e-7
    abs_tol: float = 1e-14
    amp_tol: float = 1e-9
    t_transient: float = 0.0
    t_average: float = 0.0
    divergence_bound: float = 1e6
    min_step: float = 1e-14   # [s]; step collapse below this reports divergence
    n_samples: int = 2000
    sigma_rel_threshold: float = 1e-3
    method: str = "adaptive"      # "adaptive" | "rk4"
    rk4_dt: float = 0.0           # required when method == "rk4"

    def __post_init__(self):
        if self.dt_max <= 0:
            raise ValueError("dt_max must be > 0")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.amp_tol < 0:
            raise ValueError("amp_tol must be >= 0")
        if self.t_transient < 0 or self.t_average < 0:
            raise ValueError("windows must be >= 0")
        if self.n_samples < 10:
            raise ValueError("n_samples must be >= 10")
        if self.method not in ("adaptive", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "rk4" and self.rk4_dt <= 0:
            raise ValueError("rk4 method requires rk4_dt > 0")

    @classmethod
    def for_params(cls, params: LatticeParams, **overrides) -> "IntegratorConfig":
        base = dict(
            dt_max=20.0 / params.kappa,
            t_transient=200.0 / params.kappa,
            t_average=200.0 / params.kappa,
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class SteadyStateResult:
    """Long-time behavior at one (drive frequency, drive power) point."""

    classification: str
    alpha_out_mean: complex
    alpha_abs_mean: float
    alpha_abs2_mean: float
    alpha_abs_variance: float
    final_state: MeanFieldState
    alpha_out_tail: np.ndarray = field(repr=False, default=None)  # complex samples over t_average
    tail_dt: float = 0.0


# ---------------------------------------------------------------------------
# JIT core
# ---------------------------------------------------------------------------

@njit(cache=True)
def _rhs(y, dy, n, dc, dq, kappa, gamma, g, th, u, eps, dsite):
    for j in range(n):
        a = y[j]
        acc = (dc - 0.5j * kappa) * a + g * y[n + j]
        if j > 0:
            acc += th * y[j - 1]
        if j < n - 1:
            acc += th * y[j + 1]
        if j == dsite:
            acc += eps
        dy[j] = -1j * acc
    for j in range(n):
        b = y[n + j]
        nb = b.real * b.real + b.imag * b.imag
        dy[n + j] = -1j * ((dq - 0.5j * gamma) * b + u * nb * b + g * y[j])


@njit(cache=True, inline="always")
def _eps_at(t, e0, e1, t_ramp):
    if t_ramp <= 0.0 or t >= t_ramp:
        return e1
    if t <= 0.0:
        return e0
    return e0 + (e1 - e0) * (t / t_ramp)


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (35.0 / 384.0 - 5179.0 / 57600.0,
                                500.0 / 1113.0 - 7571.0 / 16695.0,
                                125.0 / 192.0 - 393.0 / 640.0,
                                -2187.0 / 6784.0 + 92097.0 / 339200.0,
                                11.0 / 84.0 - 187.0 / 2100.0,
                                -1.0 / 40.0)


@njit(cache=True)
def _dopri5_span(y, t0, t1, n, dc, dq, kappa, gamma, g, th, u,
                 e0, e1, t_ramp, rtol, atol, amp_tol, dt_max, div_bound, min_step,
                 h_init):
    """Advance y in place from t0 to t1.  Returns (status, t_fail, h_last)."""
    m = 2 * n
    k1 = np.empty(m, np.complex128)
    k2 = np.empty(m, np.complex128)
    k3 = np.empty(m, np.complex128)
    k4 = np.empty(m, np.complex128)
    k5 = np.empty(m, np.complex128)
    k6 = np.empty(m, np.complex128)
    k7 = np.empty(m, np.complex128)
    yt = np.empty(m, np.complex128)
    yn = np.empty(m, np.complex128)

    t = t0
    span = t1 - t0
    if span <= 0.0:
        return _STATUS_OK, t0, h_init
    h = h_init
    if h <= 0.0 or h > dt_max:
        h = dt_max
    if h > span:
        h = span
    h_floor = span * 1e-14
    if min_step > h_floor:
        h_floor = min_step
    err_prev = 1.0
    b2 = div_bound * div_bound
    fsal_valid = False

    # Physical norm-growth bound for the guard below: every term of the flow
    # except the drive conserves or damps sum(|y|^2) =: E, and the drive
    # injects at most d(sqrt E)/dt <= |eps|.  A step that grows sqrt(E) faster
    # than that (plus an rtol-scale slack for legitimate local error) is a
    # numerical artifact and is rejected even when the embedded error estimate
    # looks acceptable.
    eps_max = abs(e0)
    if abs(e1) > eps_max:
        eps_max = abs(e1)
    se_old = 0.0
    for i in range(m):
        v = y[i]
        se_old += v.real * v.real + v.imag * v.imag
    se_old = math.sqrt(se_old)

    # Linear part of the fastest phase-rotation scale (stability cap below).
    abs_dc = math.hypot(dc.real, dc.imag)
    abs_dq = math.hypot(dq.real, dq.imag)
    abs_g = abs(g)
    abs_th = abs(th)
    abs_u = abs(u)
    rho_lin = abs_dc + 2.0 * abs_th + abs_g
    if abs_dq + abs_g > rho_lin:
        rho_lin = abs_dq + abs_g

    while t < t1:
        rem = t1 - t
        if rem <= span * 1e-15:
            break  # remaining span below roundoff
        # Explicit-stability cap: for large h * (Kerr rotation rate) the
        # embedded error estimate of an exploding step can fall below rtol
        # (|R5-R4|/|R5| ~ 1/|h*lambda|), so error control alone silently
        # accepts unstable steps.  Cap h at ~the DOPRI5 imaginary-axis
        # stability limit over the fastest local frequency; the Kerr term
        # contributes a Jacobian eigenfrequency of up to 2|U||beta|^2.
        # The same sweep over the state records max|y| for the error scale.
        rho = rho_lin
        ymax2 = 0.0
        for i in range(n):
            a = y[i]
            na = a.real * a.real + a.imag * a.imag
            if na > ymax2:
                ymax2 = na
        for j in range(n):
            b = y[n + j]
            nb = b.real * b.real + b.imag * b.imag
            if nb > ymax2:
                ymax2 = nb
            w = abs_dq + abs_g + 2.0 * abs_u * nb
            if w > rho:
                rho = w
        h_stab = 3.0 / rho
        if h > h_stab:
            h = h_stab
        if h > rem:
            h = rem
        # Error scale floor tied to the current field magnitude: components
        # far below the dominant amplitude only need to be resolved relative
        # to that amplitude, while the dominant components stay under rtol.
        floor = atol + amp_tol * math.sqrt(ymax2)
        if not fsal_valid:
            _rhs(y, k1, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t, e0, e1, t_ramp), 0)
        # stage 2..6
        for i in range(m):
            yt[i] = y[i] + h * _A21 * k1[i]
        _rhs(yt, k2, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t + _C2 * h, e0, e1, t_ramp), 0)
        for i in range(m):
            yt[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(yt, k3, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t + _C3 * h, e0, e1, t_ramp), 0)
        for i in range(m):
            yt[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(yt, k4, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t + _C4 * h, e0, e1, t_ramp), 0)
        for i in range(m):
            yt[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        _rhs(yt, k5, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t + _C5 * h, e0, e1, t_ramp), 0)
        for i in range(m):
            yt[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                                + _A64 * k4[i] + _A65 * k5[i])
        _rhs(yt, k6, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t + h, e0, e1, t_ramp), 0)
        for i in range(m):
            yn[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i]
                                + _B5 * k5[i] + _B6 * k6[i])
        _rhs(yn, k7, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t + h, e0, e1, t_ramp), 0)

        # error norm (rms, mixed tolerance)
        err = 0.0
        for i in range(m):
            e = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                     + _E6 * k6[i] + _E7 * k7[i])
            ay = abs(y[i])
            ayn = abs(yn[i])
            sc = floor + rtol * (ay if ay > ayn else ayn)
            q = abs(e) / sc
            err += q * q
        err = math.sqrt(err / m)

        se_new = 0.0
        if err <= 1.0:
            for i in range(m):
                v = yn[i]
                se_new += v.real * v.real + v.imag * v.imag
            se_new = math.sqrt(se_new) if se_new == se_new else math.inf

        if err <= 1.0 and se_new > se_old + h * eps_max + 1.5 * rtol * se_old:
            # energy guard: unphysical norm growth, retry with a smaller step
            h *= 0.5
            fsal_valid = True  # k1 still valid at unchanged (t, y)
            if h < h_floor:
                return _STATUS_UNDERFLOW, t, h
            continue

        if err <= 1.0:
            t += h
            se_old = se_new
            for i in range(m):
                y[i] = yn[i]
                k1[i] = k7[i]
            fsal_valid = True
            # divergence check (NaN fails the `<` and is caught)
            ok = True
            for i in range(m):
                v = y[i]
                if not (v.real * v.real + v.imag * v.imag < b2):
                    ok = False
                    break
            if not ok:
                return _STATUS_DIVERGED, t, h
            if err <= 0.0:
                err = 1e-10
            # PI controller
            fac = 0.9 * err ** -0.17 * err_prev ** 0.08
            if fac > 5.0:
                fac = 5.0
            elif fac < 0.2:
                fac = 0.2
            err_prev = err
        else:
            # err > 1, inf, or NaN (overflowing trial step): shrink hard
            if err == err and err < 1e300:
                fac = 0.9 * err ** -0.2
                if fac < 0.1:
                    fac = 0.1
            else:
                fac = 0.1
            fsal_valid = True  # k1 still valid at unchanged (t, y)
        h *= fac
        if h > dt_max:
            h = dt_max
        if h < h_floor:
            return _STATUS_UNDERFLOW, t, h
    return _STATUS_OK, t1, h


@njit(cache=True)
def _dopri5_sampled(y, t0, ts, out, n, dc, dq, kappa, gamma, g, th, u,
                    e0, e1, t_ramp, rtol, atol, amp_tol, dt_max, div_bound, min_step):
    """Integrate from t0 hitting each time in ts; store y there.

    Returns (status, t_fail, n_completed) where n_completed counts the sample
    times reached before any failure.
    """
    t = t0
    h = 0.0
    for idx in range(ts.shape[0]):
        status, t_new, h = _dopri5_span(y, t, ts[idx], n, dc, dq, kappa, gamma, g, th, u,
                                        e0, e1, t_ramp, rtol, atol, amp_tol, dt_max,
                                        div_bound, min_step, h)
        if status != _STATUS_OK:
            return status, t_new, idx
        t = ts[idx]
        for i in range(2 * n):
            out[idx, i] = y[i]
    return _STATUS_OK, t, ts.shape[0]


@njit(cache=True)
def _rk4_fixed(y, t0, t1, dt, n, dc, dq, kappa, gamma, g, th, u,
               e0, e1, t_ramp, div_bound):
    """Classic fixed-step RK4 from t0 to t1 (last step shortened to land on t1)."""
    m = 2 * n
    k1 = np.empty(m, np.complex128)
    k2 = np.empty(m, np.complex128)
    k3 = np.empty(m, np.complex128)
    k4 = np.empty(m, np.complex128)
    yt = np.empty(m, np.complex128)
    b2 = div_bound * div_bound
    nsteps = int(math.ceil((t1 - t0) / dt))
    for s in range(nsteps):
        t = t0 + s * dt
        h = dt
        if t + h > t1:
            h = t1 - t
        if h <= 0.0:
            break
        _rhs(y, k1, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t, e0, e1, t_ramp), 0)
        for i in range(m):
            yt[i] = y[i] + 0.5 * h * k1[i]
        _rhs(yt, k2, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t + 0.5 * h, e0, e1, t_ramp), 0)
        for i in range(m):
            yt[i] = y[i] + 0.5 * h * k2[i]
        _rhs(yt, k3, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t + 0.5 * h, e0, e1, t_ramp), 0)
        for i in range(m):
            yt[i] = y[i] + h * k3[i]
        _rhs(yt, k4, n, dc, dq, kappa, gamma, g, th, u, _eps_at(t + h, e0, e1, t_ramp), 0)
        for i in range(m):
            y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(m):
            v = y[i]
            if not (v.real * v.real + v.imag * v.imag < b2):
                return _STATUS_DIVERGED, t + h
    return _STATUS_OK, t1


# ---------------------------------------------------------------------------
# Python-level API
# ---------------------------------------------------------------------------

def _drive_args(params: LatticeParams, drive: DriveSpec):
    dc = params.omega_r - drive.omega_p
    dq = params.omega_q - drive.omega_p
    e0, e1, t_ramp = drive.ramp_endpoints()
    return (params.n_sites, dc, dq, params.kappa, params.gamma_q,
            params.g_coupling, params.t_hop, params.u_kerr, e0, e1, t_ramp)


def _shifted_drive(drive: DriveSpec, t_offset: float):
    """Envelope endpoints seen by an integration segment starting at t_offset."""
    e0, e1, t_ramp = drive.ramp_endpoints()
    if t_offset <= 0.0 or t_ramp <= 0.0:
        return e0, e1, t_ramp
    if t_offset >= t_ramp:
        return e1, e1, 0.0
    return drive.epsilon_at(t_offset), e1, t_ramp - t_offset


def mft_rhs(state: MeanFieldState, params: LatticeParams, drive: DriveSpec,
            time: float = 0.0) -> MeanFieldState:
    """Time derivatives (d alpha/dt, d beta/dt) of the mean-field equations."""
    validate(params)
    if state.n_sites != params.n_sites:
        raise ValueError("state length does not match n_sites")
    n = params.n_sites
    y = state.to_vector()
    dy = np.empty_like(y)
    dc = params.omega_r - drive.omega_p
    dq = params.omega_q - drive.omega_p
    eps = drive.epsilon_at(time)
    _rhs(y, dy, n, dc, dq, params.kappa, params.gamma_q,
         params.g_coupling, params.t_hop, params.u_kerr, eps,
         params.drive_site - 1)
    return MeanFieldState.from_vector(dy)


class _Kernel:
    """Bound integration kernel for one (params, drive) pair.

    The JIT RHS applies the drive to array slot 0.  drive_site = 1 maps
    directly; drive_site = n_sites is handled by reversing the site
    order (an exact relabeling of the open chain).  Interior drive sites
    are not supported.
    """

    def __init__(self, params: LatticeParams, drive: DriveSpec):
        validate(params)
        self.params = params
        self.drive = drive
        self.n = params.n_sites
        d = params.drive_site - 1
        if d == 0:
            self._fwd = None
        elif d == self.n - 1:
            # reverse site order: hopping structure is preserved exactly
            self._fwd = np.arange(self.n)[::-1]
        else:
            raise NotImplementedError(
                "drive_site must be an end of the chain (1 or n_sites); "
                f"got {params.drive_site}"
            )

    def pack(self, state: MeanFieldState) -> np.ndarray:
        if self._fwd is None:
            return state.to_vector()
        return np.concatenate([state.alpha[self._fwd], state.beta[self._fwd]])

    def unpack(self, y: np.ndarray) -> MeanFieldState:
        n = self.n
        if self._fwd is None:
            return MeanFieldState.from_vector(y)
        return MeanFieldState(y[:n][self._fwd].copy(), y[n:][self._fwd].copy())

    def out_index(self) -> int:
        j = self.params.output_site - 1
        if self._fwd is None:
            return j
        return self.n - 1 - j

    def args(self):
        p = self.params
        dc = p.omega_r - self.drive.omega_p
        dq = p.omega_q - self.drive.omega_p
        return (self.n, dc, dq, p.kappa, p.gamma_q, p.g_coupling, p.t_hop, p.u_kerr)

    def run_span(self, y, t0, t1, config: IntegratorConfig):
        e0, e1, tr = _shifted_drive(self.drive, t0)
        if config.method == "rk4":
            status, tf = _rk4_fixed(y, 0.0, t1 - t0, config.rk4_dt, *self.args(),
                                    e0, e1, tr, config.divergence_bound)
        else:
            status, tf, _ = _dopri5_span(y, 0.0, t1 - t0, *self.args(), e0, e1, tr,
                                         config.rel_tol, config.abs_tol, config.amp_tol,
                                         config.dt_max, config.divergence_bound,
                                         config.min_step, 0.0)
        self._check(status, t0 + tf)

    def run_sampled(self, y, t0, ts_rel, config: IntegratorConfig,
                    allow_partial: bool = False):
        """Sample at t0 + ts_rel; returns (array of shape (len(ts), 2n), n_ok).

        With allow_partial=True a mid-record failure returns the samples
        gathered so far instead of raising, as long as at least one exists.
        """
        out = np.empty((ts_rel.shape[0], 2 * self.n), np.complex128)
        e0, e1, tr = _shifted_drive(self.drive, t0)
        if config.method == "rk4":
            t = 0.0
            for idx, tnext in enumerate(ts_rel):
                status, tf = _rk4_fixed(y, t, tnext, config.rk4_dt, *self.args(),
                                        e0, e1, tr, config.divergence_bound)
                if status != _STATUS_OK and allow_partial and idx > 0:
                    return out, idx
                self._check(status, t0 + tf)
                t = tnext
                out[idx] = y
            return out, ts_rel.shape[0]
        status, tf, n_ok = _dopri5_sampled(y, 0.0, ts_rel, out, *self.args(), e0, e1, tr,
                                           config.rel_tol, config.abs_tol, config.amp_tol,
                                           config.dt_max, config.divergence_bound,
                                           config.min_step)
        if status != _STATUS_OK and not (allow_partial and n_ok > 0):
            self._check(status, t0 + tf)
        return out, n_ok

    @staticmethod
    def _check(status, t):
        if status == _STATUS_DIVERGED:
            raise DivergenceError(t)
        if status == _STATUS_UNDERFLOW:
            # step collapse only happens when the local frequency scale
            # (Kerr term ~ u|beta|^2) runs away: report as divergence
            raise DivergenceError(t)


def integrate(state0: MeanFieldState, params: LatticeParams, drive: DriveSpec,
              config: IntegratorConfig, t_end: float,
              n_record: int | None = None) -> tuple[np.ndarray, list[MeanFieldState]]:
    """Integrate from t=0 to t_end; return (times, states) at uniform cadence.

    The recording cadence is independent of the internal adaptive steps.
    Raises DivergenceError if any amplitude exceeds the divergence bound.
    """
    if t_end <= 0:
        raise ValueError("t_end must be > 0")
    if n_record is None:
        n_record = config.n_samples
    kern = _Kernel(params, drive)
    y = kern.pack(state0)
    ts = np.linspace(0.0, t_end, n_record + 1)[1:]
    out, _ = kern.run_sampled(y, 0.0, ts, config)
    ts_full = np.concatenate([[0.0], ts])
    states = [state0.copy()] + [kern.unpack(out[i]) for i in range(out.shape[0])]
    return ts_full, states


def linear_steady_state(params: LatticeParams, drive: DriveSpec) -> MeanFieldState:
    """Exact stationary state of the U = 0 (linear) chain by direct solve.

    Solves the 2N x 2N complex linear system obtained by zeroing the time
    derivatives.  Enforces u_kerr == 0.
    """
    validate(params)
    if params.u_kerr != 0.0:
        raise ValueError("linear_steady_state requires u_kerr == 0")
    n = params.n_sites
    dc = params.omega_r - drive.omega_p - 0.5j * params.kappa
    dq = params.omega_q - drive.omega_p - 0.5j * params.gamma_q
    m = np.zeros((2 * n, 2 * n), np.complex128)
    idx = np.arange(n)
    m[idx, idx] = dc
    m[n + idx, n + idx] = dq
    m[idx, n + idx] = params.g_coupling
    m[n + idx, idx] = params.g_coupling
    if n > 1:
        m[idx[:-1], idx[:-1] + 1] = params.t_hop
        m[idx[1:], idx[1:] - 1] = params.t_hop
    rhs = np.zeros(2 * n, np.complex128)
    rhs[params.drive_site - 1] = -complex(drive.epsilon)
    try:
        y = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("singular linear system (undamped resonance?)") from exc
    return MeanFieldState.from_vector(y)


def classify_attractor(alpha_out_abs: np.ndarray,
                       sigma_rel_threshold: float = 1e-3,
                       abs_floor: float = 1e-12) -> str:
    """fixed_point iff the relative std of |alpha_out| over the tail is small.

    The tail must cover the full averaging window with at least 10 samples.
    A mean magnitude below abs_floor counts as the (trivially stationary)
    zero state.
    """
    a = np.asarray(alpha_out_abs, dtype=float)
    if a.size < 10:
        raise ValueError("classification window must contain at least 10 samples")
    mean = a.mean()
    if mean < abs_floor:
        return FIXED_POINT
    rel = a.std() / mean
    return FIXED_POINT if rel <= sigma_rel_threshold else NON_STATIONARY


def find_steady_state(params: LatticeParams, drive: DriveSpec,
                      init: MeanFieldState, config: IntegratorConfig,
                      settle_offset: float = 0.0) -> SteadyStateResult:
    """Integrate through the transient, then average over t_average.

    Returns time-averaged observables at the output site, an attractor
    classification, and the final state for sweep continuation.

    settle_offset extends the pre-averaging window, e.g. to let a drive
    envelope finish before the steady-state transient clock starts.
    """
    validate(params)
    if config.t_transient <= 0 or config.t_average <= 0:
        raise ValueError("find_steady_state needs t_transient > 0 and t_average > 0")
    if settle_offset < 0:
        raise ValueError("settle_offset must be >= 0")
    kern = _Kernel(params, drive)
    y = kern.pack(init)
    t_settle = settle_offset + config.t_transient
    kern.run_span(y, 0.0, t_settle, config)
    dt_s = config.t_average / config.n_samples
    ts = t_settle + dt_s * np.arange(1, config.n_samples + 1)
    out, n_ok = kern.run_sampled(y, t_settle, ts - t_settle, config,
                                 allow_partial=True)
    if n_ok < max(10, config.n_samples // 4):
        # too little of the averaging window survived to trust the statistics
        raise DivergenceError(t_settle + (ts[max(n_ok - 1, 0)] - t_settle))
    if n_ok < config.n_samples:
        # mid-record numerical failure: keep the statistics gathered before it
        # and continue from the last recorded (still physical) state
        out = out[:n_ok]
        y = out[-1].copy()
    a_out = out[:, kern.out_index()]
    a_abs = np.abs(a_out)
    abs_mean = float(a_abs.mean())
    abs2_mean = float((a_abs * a_abs).mean())
    variance = max(abs2_mean - abs_mean * abs_mean, 0.0)
    cls = classify_attractor(a_abs, config.sigma_rel_threshold)
    return SteadyStateResult(
        classification=cls,
        alpha_out_mean=complex(a_out.mean()),
        alpha_abs_mean=abs_mean,
        alpha_abs2_mean=abs2_mean,
        alpha_abs_variance=variance,
        final_state=kern.unpack(y),
        alpha_out_tail=a_out,
        tail_dt=dt_s,
    )
