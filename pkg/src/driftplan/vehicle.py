"""Single-track vehicle model with combined-slip Magic Formula axle forces.

States are [x, y, psi, v, beta, psidot]: planar pose, speed at the CoG,
side-slip angle and yaw rate.  Drive slip acts on the rear axle only (RWD);
the front axle rolls free.  Friction is isotropic: one MF curve evaluated on
the combined theoretical slip, split into components along the slip vector.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import LowSpeedError, SlipDomainError

__all__ = [
    "G",
    "VehicleParams",
    "TireParams",
    "Pose",
    "DynamicState",
    "FullState",
    "ControlInput",
    "SlipState",
    "AxleForces",
    "wrap_angle",
    "theoretical_slips",
    "mf_friction",
    "slip_angles",
    "normal_loads",
    "axle_forces",
    "full_model_derivatives",
    "bicycle_forces",
    "bicycle_derivatives",
    "integrate_kinematics",
    "rollout_full",
    "rollout_bicycle",
]

G = 9.81  # gravity [m/s^2]

_TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return a - _TWO_PI * math.ceil((a - math.pi) / _TWO_PI)


@dataclass
class VehicleParams:
    """Chassis parameters. Units: kg, kg m^2, m, N/rad, N/unit slip, m/s, m/s^2."""

    m: float = 1400.0        # mass
    j_z: float = 2000.0      # yaw inertia
    l_f: float = 1.3         # CoG to front axle
    l_r: float = 1.3         # CoG to rear axle
    h: float = 0.4           # CoG height
    c_f: float = 6867.0      # front cornering stiffness, ~F_zf*B*C*D of the gravel MF
    c_r: float = 6867.0      # rear cornering stiffness
    c_x: float = 6867.0      # rear longitudinal stiffness
    v_max: float = 25.0      # top speed
    a_max: float = 3.0       # planner accel/decel envelope [m/s^2]
    v_eps: float = 0.5       # low-speed guard for divisions by v

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if not val > 0.0:
                raise ValueError(f"VehicleParams.{name} must be > 0, got {val}")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r


@dataclass
class TireParams:
    """Magic Formula coefficients. Defaults are the gravel set."""

    b: float = 1.5289
    c: float = 1.0901
    d: float = 0.6
    e: float = -0.95084

    def __post_init__(self):
        if not (self.b > 0.0 and self.c > 0.0):
            raise ValueError("TireParams.b and .c must be > 0")
        if not (0.0 < self.d <= 1.0):
            raise ValueError(f"TireParams.d must be in (0, 1], got {self.d}")


@dataclass
class Pose:
    """Planar pose; psi wrapped to (-pi, pi] at construction."""

    x: float
    y: float
    psi: float

    def __post_init__(self):
        self.psi = wrap_angle(self.psi)


@dataclass
class DynamicState:
    """Dynamic states (v, beta, psidot); v must be positive."""

    v: float       # speed at CoG [m/s]
    beta: float    # side slip [rad]
    psidot: float  # yaw rate [rad/s]

    def __post_init__(self):
        if not self.v > 0.0:
            raise ValueError(f"DynamicState.v must be > 0, got {self.v}")


@dataclass
class FullState:
    pose: Pose
    dyn: DynamicState


@dataclass
class ControlInput:
    delta: float  # steering angle [rad]
    lam: float    # rear drive slip [-]


@dataclass
class SlipState:
    sigma_x: float
    sigma_y: float
    sigma: float


@dataclass
class AxleForces:
    """Per-axle contact forces [N]; f_xf is identically zero (free-rolling front)."""

    f_xf: float
    f_yf: float
    f_zf: float
    f_xr: float
    f_yr: float
    f_zr: float


# ---------------------------------------------------------------------------
# slips and friction

def theoretical_slips(lam: float, alpha: float) -> SlipState:
    """Combined theoretical slip from drive slip lam and slip angle alpha.

    sigma_x = lam/(1+lam), sigma_y = tan(alpha)/(1+lam),
    sigma = sqrt(sigma_x^2 + sigma_y^2).
    """
    if lam <= -1.0:
        raise SlipDomainError(f"lambda must be > -1, got {lam}")
    if abs(alpha) >= 0.5 * math.pi:
        raise SlipDomainError(f"|alpha| must be < pi/2, got {alpha}")
    sx, sy, s = _slips_raw(lam, alpha)
    return SlipState(sx, sy, s)


def _slips_raw(lam, alpha):
    den = 1.0 + lam
    sx = lam / den
    sy = math.tan(alpha) / den
    return sx, sy, math.hypot(sx, sy)


def mf_friction(slips: SlipState, tires: TireParams) -> tuple[float, float]:
    """Isotropic MF friction components (mu_x, mu_y) for a combined slip."""
    return _mf_raw(slips.sigma_x, slips.sigma_y, slips.sigma,
                   tires.b, tires.c, tires.d, tires.e)


def _mf_raw(sx, sy, s, b, c, d, e):
    if s == 0.0:
        return 0.0, 0.0
    sb = s * b
    mu = d * math.sin(c * math.atan(sb - e * (sb - math.atan(sb))))
    return mu * sx / s, mu * sy / s


# ---------------------------------------------------------------------------
# axle kinematics and loads

def slip_angles(dyn: DynamicState, delta: float, params: VehicleParams) -> tuple[float, float]:
    """Kinematic slip angles (alpha_f, alpha_r); positive when the velocity
    points left of the wheel plane."""
    if dyn.v < params.v_eps:
        raise LowSpeedError(f"v = {dyn.v} below v_eps = {params.v_eps}")
    return _slip_angles_raw(dyn.v, dyn.beta, dyn.psidot, delta, params.l_f, params.l_r)


def _slip_angles_raw(v, beta, psidot, delta, l_f, l_r):
    vx = v * math.cos(beta)
    vy = v * math.sin(beta)
    a_f = math.atan((vy + l_f * psidot) / vx) - delta
    a_r = math.atan((vy - l_r * psidot) / vx)
    return a_f, a_r


def normal_loads(a_x: float, params: VehicleParams) -> tuple[float, float]:
    """Static axle loads with longitudinal weight transfer at acceleration a_x.

    Loads are saturated at zero; a saturated axle raises a wheel-lift warning
    and the remaining axle carries the full weight.
    """
    f_zf, f_zr, lifted = _loads_raw(a_x, params.m, params.l_f, params.l_r,
                                    params.h, params.wheelbase)
    if lifted:
        warnings.warn(f"wheel lift at a_x = {a_x} m/s^2", RuntimeWarning, stacklevel=2)
    return f_zf, f_zr


def _loads_raw(a_x, m, l_f, l_r, h, wb):
    f_zf = m * (G * l_r - a_x * h) / wb
    f_zr = m * (G * l_f + a_x * h) / wb
    if f_zf < 0.0:
        return 0.0, m * G, True
    if f_zr < 0.0:
        return m * G, 0.0, True
    return f_zf, f_zr, False


# fixed-point iteration bounds for loads <-> F_xr coupling
_LOAD_FP_MAX_ITER = 10
_LOAD_FP_TOL = 1.0  # [N]


def axle_forces(dyn: DynamicState, inp: ControlInput, params: VehicleParams,
                tires: TireParams) -> AxleForces:
    """Contact forces of both axles for the current state and inputs.

    The front axle rolls free (lambda_f = 0, F_xf = 0).  Normal loads and the
    rear drive force are coupled through weight transfer; resolved by fixed
    point iteration on F_zr (at most 10 rounds, 1 N tolerance).
    """
    if dyn.v < params.v_eps:
        raise LowSpeedError(f"v = {dyn.v} below v_eps = {params.v_eps}")
    f = _axle_forces_raw(dyn.v, dyn.beta, dyn.psidot, inp.delta, inp.lam,
                         (params.m, params.l_f, params.l_r, params.h, params.wheelbase),
                         (tires.b, tires.c, tires.d, tires.e))
    f_yf, f_yr, f_xr, f_zf, f_zr, lifted = f
    if lifted:
        warnings.warn("wheel lift during axle force evaluation", RuntimeWarning,
                      stacklevel=2)
    return AxleForces(0.0, f_yf, f_zf, f_xr, f_yr, f_zr)


def _axle_forces_raw(v, beta, psidot, delta, lam, par, tt):
    m, l_f, l_r, h, wb = par
    b, c, d, e = tt
    a_f, a_r = _slip_angles_raw(v, beta, psidot, delta, l_f, l_r)
    # lateral slip enters negated so the friction force opposes side slip
    # (matches F_y ~ -C*alpha of the linear model)
    sxf, syf, sf = _slips_raw(0.0, -a_f)
    sxr, syr, sr = _slips_raw(lam, -a_r)
    _, mu_yf = _mf_raw(sxf, syf, sf, b, c, d, e)
    mu_xr, mu_yr = _mf_raw(sxr, syr, sr, b, c, d, e)

    # mu does not depend on load, so only the transfer loop remains
    f_zf, f_zr, lifted = _loads_raw(0.0, m, l_f, l_r, h, wb)
    for _ in range(_LOAD_FP_MAX_ITER):
        a_x = f_zr * mu_xr / m
        f_zf_n, f_zr_n, lifted = _loads_raw(a_x, m, l_f, l_r, h, wb)
        done = abs(f_zr_n - f_zr) < _LOAD_FP_TOL
        f_zf, f_zr = f_zf_n, f_zr_n
        if done:
            break
    return f_zf * mu_yf, f_zr * mu_yr, f_zr * mu_xr, f_zf, f_zr, lifted


# ---------------------------------------------------------------------------
# dynamic models

def full_model_derivatives(dyn: DynamicState, inp: ControlInput,
                           params: VehicleParams, tires: TireParams) -> tuple[float, float, float]:
    """(v_dot, beta_dot, psi_ddot) of the full single-track model."""
    if dyn.v < params.v_eps:
        raise LowSpeedError(f"v = {dyn.v} below v_eps = {params.v_eps}")
    return _derivs_raw(dyn.v, dyn.beta, dyn.psidot, inp.delta, inp.lam,
                       (params.m, params.l_f, params.l_r, params.h, params.wheelbase),
                       params.j_z,
                       (tires.b, tires.c, tires.d, tires.e))


def _derivs_raw(v, beta, psidot, delta, lam, par, j_z, tt):
    m = par[0]
    l_f = par[1]
    l_r = par[2]
    f_yf, f_yr, f_xr, _, _, _ = _axle_forces_raw(v, beta, psidot, delta, lam, par, tt)
    v_dot = psidot * v * beta + f_xr / m
    beta_dot = (f_yf + f_yr) / (m * v) - psidot
    psi_ddot = (l_f * f_yf - l_r * f_yr) / j_z
    return v_dot, beta_dot, psi_ddot


def bicycle_forces(dyn: DynamicState, inp: ControlInput,
                   params: VehicleParams) -> tuple[float, float, float]:
    """Linear-tire forces (F_yf, F_yr, F_xr) of the bicycle model.

    F_xr = +C_x*lambda: positive drive slip pushes forward, consistent with
    the full model near lambda = 0.
    """
    if dyn.v < params.v_eps:
        raise LowSpeedError(f"v = {dyn.v} below v_eps = {params.v_eps}")
    v, beta, psidot = dyn.v, dyn.beta, dyn.psidot
    f_yf = -params.c_f * (beta + params.l_f * psidot / v - inp.delta)
    f_yr = -params.c_r * (beta - params.l_r * psidot / v)
    f_xr = params.c_x * inp.lam
    return f_yf, f_yr, f_xr


def bicycle_derivatives(dyn: DynamicState, inp: ControlInput,
                        params: VehicleParams) -> tuple[float, float, float]:
    """(v_dot, beta_dot, psi_ddot) of the linearized bicycle model."""
    f_yf, f_yr, f_xr = bicycle_forces(dyn, inp, params)
    v, beta, psidot = dyn.v, dyn.beta, dyn.psidot
    v_dot = psidot * v * beta + f_xr / params.m
    beta_dot = (f_yf + f_yr) / (params.m * v) - psidot
    psi_ddot = (params.l_f * f_yf - params.l_r * f_yr) / params.j_z
    return v_dot, beta_dot, psi_ddot


# ---------------------------------------------------------------------------
# kinematic pose integration

def integrate_kinematics(pose0: Pose, dyn_traj, dt: float) -> list[Pose]:
    """Integrate x_dot = v cos(psi+beta), y_dot = v sin(psi+beta) through a
    sampled (v, beta, psidot) sequence.

    psi comes from exact integration of the piecewise-linear psidot; position
    uses fixed-step RK4, which reduces to Simpson quadrature because the
    right-hand side does not depend on (x, y).  Returns one pose per sample;
    the first equals pose0.
    """
    v = np.asarray([d.v for d in dyn_traj], dtype=float)
    beta = np.asarray([d.beta for d in dyn_traj], dtype=float)
    psidot = np.asarray([d.psidot for d in dyn_traj], dtype=float)
    xs, ys, psis = _integrate_kin_arrays(pose0.x, pose0.y, pose0.psi, v, beta, psidot, dt)
    return [Pose(float(x), float(y), float(p)) for x, y, p in zip(xs, ys, psis)]


def _integrate_kin_arrays(x0, y0, psi0, v, beta, psidot, dt):
    """Array core of integrate_kinematics; psi returned unwrapped."""
    n = v.shape[0]
    if n == 0:
        return np.empty(0), np.empty(0), np.empty(0)
    dpsidot = psidot[1:] - psidot[:-1]
    psi = np.empty(n)
    psi[0] = psi0
    np.cumsum(0.5 * (psidot[:-1] + psidot[1:]) * dt, out=psi[1:])
    psi[1:] += psi0

    psi_mid = psi[:-1] + dt * (0.5 * psidot[:-1] + 0.125 * dpsidot)
    v_mid = 0.5 * (v[:-1] + v[1:])
    beta_mid = 0.5 * (beta[:-1] + beta[1:])

    h0 = psi[:-1] + beta[:-1]
    hm = psi_mid + beta_mid
    h1 = psi[1:] + beta[1:]
    dx = dt / 6.0 * (v[:-1] * np.cos(h0) + 4.0 * v_mid * np.cos(hm) + v[1:] * np.cos(h1))
    dy = dt / 6.0 * (v[:-1] * np.sin(h0) + 4.0 * v_mid * np.sin(hm) + v[1:] * np.sin(h1))

    x = np.empty(n)
    y = np.empty(n)
    x[0] = x0
    y[0] = y0
    np.cumsum(dx, out=x[1:])
    np.cumsum(dy, out=y[1:])
    x[1:] += x0
    y[1:] += y0
    return x, y, psi


# ---------------------------------------------------------------------------
# rollouts (frozen inputs)

def rollout_full(dyn0: DynamicState, inp: ControlInput, params: VehicleParams,
                 tires: TireParams, t_final: float, dt: float) -> np.ndarray:
    """RK4 rollout of the full model dynamic states with frozen inputs.

    Returns an (n+1, 3) array of (v, beta, psidot) samples including the
    initial state.  Raises LowSpeedError if v falls below v_eps.
    """
    par = (params.m, params.l_f, params.l_r, params.h, params.wheelbase)
    tt = (tires.b, tires.c, tires.d, tires.e)
    return _rollout(dyn0, inp.delta, inp.lam, params.v_eps, t_final, dt,
                    lambda v, b, p: _derivs_raw(v, b, p, inp.delta, inp.lam,
                                                par, params.j_z, tt))


def rollout_bicycle(dyn0: DynamicState, inp: ControlInput, params: VehicleParams,
                    t_final: float, dt: float) -> np.ndarray:
    """RK4 rollout of the bicycle model dynamic states with frozen inputs."""
    m, c_f, c_r, c_x = params.m, params.c_f, params.c_r, params.c_x
    l_f, l_r, j_z = params.l_f, params.l_r, params.j_z
    f_xr = c_x * inp.lam
    delta = inp.delta

    def f(v, beta, psidot):
        f_yf = -c_f * (beta + l_f * psidot / v - delta)
        f_yr = -c_r * (beta - l_r * psidot / v)
        return (psidot * v * beta + f_xr / m,
                (f_yf + f_yr) / (m * v) - psidot,
                (l_f * f_yf - l_r * f_yr) / j_z)

    return _rollout(dyn0, inp.delta, inp.lam, params.v_eps, t_final, dt, f)


def _rollout(dyn0, delta, lam, v_eps, t_final, dt, f):
    n = max(1, int(round(t_final / dt)))
    out = np.empty((n + 1, 3))
    v, beta, psidot = dyn0.v, dyn0.beta, dyn0.psidot
    out[0] = (v, beta, psidot)
    half = 0.5 * dt
    for i in range(1, n + 1):
        if v < v_eps:
            raise LowSpeedError(f"rollout speed {v} fell below v_eps = {v_eps}")
        k1 = f(v, beta, psidot)
        k2 = f(v + half * k1[0], beta + half * k1[1], psidot + half * k1[2])
        k3 = f(v + half * k2[0], beta + half * k2[1], psidot + half * k2[2])
        k4 = f(v + dt * k3[0], beta + dt * k3[1], psidot + dt * k3[2])
        v += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        beta += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        psidot += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        out[i] = (v, beta, psidot)
    return out
