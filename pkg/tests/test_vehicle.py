"""Vehicle model tests.

Reference numbers were produced by an independent implementation of the
model equations (separate code path, scipy.optimize for the roots) and are
frozen here; the model functions must reproduce them.
"""
import math
import warnings

import numpy as np
import pytest

from driftplan.errors import LowSpeedError, SlipDomainError
from driftplan.vehicle import (ControlInput, DynamicState, Pose,
                               VehicleParams, TireParams, axle_forces,
                               bicycle_forces, full_model_derivatives,
                               integrate_kinematics, mf_friction,
                               normal_loads, rollout_bicycle, rollout_full,
                               slip_angles, theoretical_slips, wrap_angle)

G = 9.81


# ---------------------------------------------------------------------------
# slips and friction


def test_theoretical_slips_frozen():
    sl = theoretical_slips(0.1, 0.05)
    assert sl.sigma_x == pytest.approx(0.09090909090909091, rel=1e-12)
    assert sl.sigma_y == pytest.approx(0.045492462159580714, rel=1e-12)
    assert sl.sigma == pytest.approx(0.10165641604570878, rel=1e-12)


def test_theoretical_slips_domain():
    with pytest.raises(SlipDomainError):
        theoretical_slips(-1.0, 0.0)
    with pytest.raises(SlipDomainError):
        theoretical_slips(0.0, math.pi / 2)


def test_mf_scalar_curve_frozen(tires):
    # sigma -> mu along a single axis, frozen from the independent evaluation
    for s, mu in ((0.05, 0.049936477722602526),
                  (0.2, 0.19557544574776756),
                  (0.5, 0.42237216879005246),
                  (0.8, 0.5308271201946108),
                  (1.5, 0.5910641724310185)):
        sl = theoretical_slips(0.0, math.atan(s))
        assert mf_friction(sl, tires)[1] == pytest.approx(mu, rel=1e-12)


def test_friction_isotropy(tires):
    # (mu_x, mu_y) parallel to (sigma_x, sigma_y); norm depends only on sigma
    rng = np.random.default_rng(7)
    for _ in range(200):
        lam = rng.uniform(-0.6, 0.9)
        alpha = rng.uniform(-1.2, 1.2)
        sl = theoretical_slips(lam, alpha)
        if sl.sigma < 1e-12:
            continue
        mux, muy = mf_friction(sl, tires)
        cross = mux * sl.sigma_y - muy * sl.sigma_x
        assert abs(cross) < 1e-12
        norm = math.hypot(mux, muy)
        sl2 = theoretical_slips(0.0, math.atan(sl.sigma))
        norm2 = abs(mf_friction(sl2, tires)[1])
        assert norm == pytest.approx(norm2, rel=1e-9, abs=1e-12)


def test_friction_bound(tires):
    # peak of the scalar curve bounds every combined evaluation
    scan = np.linspace(0.0, 20.0, 200001)
    peak = 0.0
    for s in scan[1:]:
        sl = theoretical_slips(0.0, math.atan(s))
        peak = max(peak, abs(mf_friction(sl, tires)[1]))
    assert peak == pytest.approx(tires.d, abs=1e-6)  # D is the asymptotic cap
    rng = np.random.default_rng(11)
    for _ in range(300):
        sl = theoretical_slips(rng.uniform(-0.5, 0.9), rng.uniform(-1.3, 1.3))
        mux, muy = mf_friction(sl, tires)
        assert math.hypot(mux, muy) <= peak + 1e-9


def test_friction_odd_symmetry(tires):
    rng = np.random.default_rng(3)
    for _ in range(100):
        lam = rng.uniform(0.0, 0.9)
        alpha = rng.uniform(-1.2, 1.2)
        sl = theoretical_slips(lam, alpha)
        mux, muy = mf_friction(sl, tires)
        neg = type(sl)(-sl.sigma_x, -sl.sigma_y, sl.sigma)
        mux2, muy2 = mf_friction(neg, tires)
        assert mux2 == pytest.approx(-mux, abs=1e-12)
        assert muy2 == pytest.approx(-muy, abs=1e-12)


# ---------------------------------------------------------------------------
# slip angles and loads


def test_slip_angles_frozen(params):
    dyn = DynamicState(8.0, -0.3, 0.4)
    af, ar = slip_angles(dyn, 0.1, params)
    assert af == pytest.approx(-0.3367713545835306, rel=1e-12)
    assert ar == pytest.approx(-0.36085132527808034, rel=1e-12)


def test_slip_angles_pure_steer(params):
    af, ar = slip_angles(DynamicState(10.0, 0.0, 0.0), 0.1, params)
    assert af == pytest.approx(-0.1, abs=1e-15)
    assert ar == 0.0


def test_slip_angles_low_speed(params):
    with pytest.raises(LowSpeedError):
        slip_angles(DynamicState(0.3, 0.0, 0.0), 0.0, params)


def test_normal_loads_static(params):
    fzf, fzr = normal_loads(0.0, params)
    # l_f = l_r so the static split is even
    assert fzf == pytest.approx(params.m * G / 2, rel=1e-12)
    assert fzr == pytest.approx(params.m * G / 2, rel=1e-12)


def test_normal_loads_transfer_frozen(params):
    fzf, fzr = normal_loads(2.0, params)
    assert fzf == pytest.approx(6436.2307692307695, rel=1e-12)
    assert fzr == pytest.approx(7297.7692307692305, rel=1e-12)
    # braking mirrors the transfer
    fzf_b, fzr_b = normal_loads(-2.0, params)
    assert fzf_b == pytest.approx(fzr, rel=1e-12)
    assert fzr_b == pytest.approx(fzf, rel=1e-12)
    assert fzf_b > params.m * G / 2


def test_normal_loads_conserve(params):
    rng = np.random.default_rng(5)
    for a_x in rng.uniform(-5.0, 5.0, 100):
        fzf, fzr = normal_loads(float(a_x), params)
        assert fzf + fzr == pytest.approx(params.m * G, rel=1e-12)


def test_normal_loads_wheel_lift(params):
    # absurd acceleration lifts the front axle; loads saturate with a warning
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        fzf, fzr = normal_loads(100.0, params)
    assert any(issubclass(x.category, RuntimeWarning) for x in w)
    assert fzf == 0.0
    assert fzr == pytest.approx(params.m * G)


# ---------------------------------------------------------------------------
# axle forces and derivatives


def test_axle_forces_zero_state(params, tires):
    f = axle_forces(DynamicState(10.0, 0.0, 0.0), ControlInput(0.0, 0.0),
                    params, tires)
    assert f.f_xf == 0.0
    assert f.f_yf == pytest.approx(0.0, abs=1e-12)
    assert f.f_xr == pytest.approx(0.0, abs=1e-12)
    assert f.f_yr == pytest.approx(0.0, abs=1e-12)
    assert f.f_zf == pytest.approx(params.m * G / 2, rel=1e-12)


def test_axle_forces_steer_sign(params, tires):
    f = axle_forces(DynamicState(10.0, 0.0, 0.0), ControlInput(0.05, 0.0),
                    params, tires)
    assert f.f_yf > 0.0
    assert f.f_yr == pytest.approx(0.0, abs=1e-9)


def test_axle_forces_frozen(params, tires):
    f = axle_forces(DynamicState(8.0, -0.3, 0.4), ControlInput(0.1, 0.15),
                    params, tires)
    assert f.f_yf == pytest.approx(2182.869092223142, rel=1e-9)
    assert f.f_yr == pytest.approx(2121.5900820708707, rel=1e-9)
    assert f.f_xr == pytest.approx(843.2949317067945, rel=1e-9)
    assert f.f_zf == pytest.approx(6737.263129999645, rel=1e-9)
    assert f.f_zr == pytest.approx(6996.736870000355, rel=1e-9)
    assert f.f_xf == 0.0


def test_full_model_derivatives_frozen(params, tires):
    d = full_model_derivatives(DynamicState(8.0, -0.3, 0.4),
                               ControlInput(0.1, 0.15), params, tires)
    assert d[0] == pytest.approx(-0.3576464773522896, rel=1e-9)
    assert d[1] == pytest.approx(-0.01567328800946316, rel=1e-7, abs=1e-12)
    assert d[2] == pytest.approx(0.0398313565989763, rel=1e-7, abs=1e-12)


def test_full_model_straight_drive(params, tires):
    d = full_model_derivatives(DynamicState(10.0, 0.0, 0.0),
                               ControlInput(0.0, 0.2), params, tires)
    assert d[0] > 0.0          # drive slip accelerates
    assert d[1] == pytest.approx(0.0, abs=1e-12)
    assert d[2] == pytest.approx(0.0, abs=1e-12)


def test_full_model_left_right_symmetry(params, tires):
    # negating (beta, psidot, delta) negates (betadot, psiddot), keeps vdot
    rng = np.random.default_rng(13)
    for _ in range(100):
        v = rng.uniform(2.0, 20.0)
        beta = rng.uniform(-0.5, 0.5)
        psidot = rng.uniform(-0.8, 0.8)
        delta = rng.uniform(-0.4, 0.4)
        lam = rng.uniform(0.0, 0.6)
        a = full_model_derivatives(DynamicState(v, beta, psidot),
                                   ControlInput(delta, lam), params, tires)
        b = full_model_derivatives(DynamicState(v, -beta, -psidot),
                                   ControlInput(-delta, lam), params, tires)
        assert b[0] == pytest.approx(a[0], rel=1e-9, abs=1e-12)
        assert b[1] == pytest.approx(-a[1], rel=1e-9, abs=1e-12)
        assert b[2] == pytest.approx(-a[2], rel=1e-9, abs=1e-12)


# ---------------------------------------------------------------------------
# bicycle model


def test_bicycle_forces_zero(params):
    f_yf, f_yr, f_xr = bicycle_forces(DynamicState(10.0, 0.0, 0.0),
                                      ControlInput(0.0, 0.0), params)
    assert (f_yf, f_yr, f_xr) == (0.0, 0.0, 0.0)


def test_bicycle_forces_steer(params):
    f_yf, f_yr, _ = bicycle_forces(DynamicState(10.0, 0.0, 0.0),
                                   ControlInput(0.1, 0.0), params)
    assert f_yf == pytest.approx(0.1 * params.c_f, rel=1e-12)
    assert f_yr == 0.0


def test_bicycle_drive_force_sign(params):
    # positive drive slip pushes the car forward
    _, _, f_xr = bicycle_forces(DynamicState(10.0, 0.0, 0.0),
                                ControlInput(0.0, 0.3), params)
    assert f_xr == pytest.approx(0.3 * params.c_x, rel=1e-12)


def test_bicycle_stiffness_matches_mf_slope(params, tires):
    # dF_yf/dalpha of the full axle at the origin within 10% of c_f
    eps = 1e-6
    f1 = axle_forces(DynamicState(10.0, eps, 0.0), ControlInput(0.0, 0.0),
                     params, tires)
    slope = f1.f_yf / eps  # dF/dbeta = dF/dalpha at origin
    assert abs(slope) == pytest.approx(params.c_f, rel=0.10)
    assert slope < 0.0  # force opposes the slip angle


def test_bicycle_full_model_agree_small_slip(params, tires):
    # in the linear region full and bicycle forces agree to ~15%
    dyn = DynamicState(12.0, 0.02, 0.05)
    inp = ControlInput(0.03, 0.04)
    fb_yf, fb_yr, fb_xr = bicycle_forces(dyn, inp, params)
    ff = axle_forces(dyn, inp, params, tires)
    assert ff.f_yf == pytest.approx(fb_yf, rel=0.15)
    assert ff.f_yr == pytest.approx(fb_yr, rel=0.15)
    assert ff.f_xr == pytest.approx(fb_xr, rel=0.15)


# ---------------------------------------------------------------------------
# kinematic integration and rollouts


def test_integrate_straight():
    poses = integrate_kinematics(Pose(0.0, 0.0, 0.0),
                                 [DynamicState(5.0, 0.0, 0.0)] * 11, 0.1)
    assert len(poses) == 11
    assert poses[-1].x == pytest.approx(5.0, rel=1e-12)
    assert poses[-1].y == pytest.approx(0.0, abs=1e-12)


def test_integrate_heading_offset():
    # constant beta, no yaw rate: straight line at heading psi + beta
    beta = 0.3
    poses = integrate_kinematics(Pose(0.0, 0.0, 0.2),
                                 [DynamicState(4.0, beta, 0.0)] * 21, 0.05)
    ang = math.atan2(poses[-1].y, poses[-1].x)
    assert ang == pytest.approx(0.5, abs=1e-12)
    assert poses[-1].psi == pytest.approx(0.2, abs=1e-12)


def test_integrate_circle_endpoint():
    # constant (v, psidot): circle of radius v/psidot, closed form endpoint
    v, psidot, dt, n = 8.0, 0.5, 0.025, 80
    poses = integrate_kinematics(Pose(0.0, 0.0, 0.0),
                                 [DynamicState(v, 0.0, psidot)] * (n + 1), dt)
    t = n * dt
    r = v / psidot
    x_ref = r * math.sin(psidot * t)
    y_ref = r * (1.0 - math.cos(psidot * t))
    assert poses[-1].psi == pytest.approx(psidot * t, abs=1e-12)
    assert poses[-1].x == pytest.approx(x_ref, abs=1e-3 * v * dt)
    assert poses[-1].y == pytest.approx(y_ref, abs=1e-3 * v * dt)


def test_integrate_circle_convergence():
    # halving dt shrinks the endpoint error by ~2^4 (Simpson on smooth arcs)
    v, psidot, t_final = 8.0, 0.6, 2.0
    r = v / psidot
    ref = np.array([r * math.sin(psidot * t_final),
                    r * (1.0 - math.cos(psidot * t_final))])

    def endpoint_err(n):
        dt = t_final / n
        poses = integrate_kinematics(Pose(0.0, 0.0, 0.0),
                                     [DynamicState(v, 0.0, psidot)] * (n + 1),
                                     dt)
        return np.hypot(poses[-1].x - ref[0], poses[-1].y - ref[1])

    e1, e2 = endpoint_err(40), endpoint_err(80)
    assert e1 / e2 > 10.0  # fourth order gives ~16


def test_rollout_full_convergence(params, tires):
    # RK4: halving dt improves the endpoint by roughly 2^4
    dyn0 = DynamicState(8.0, -0.2, 0.3)
    inp = ControlInput(0.08, 0.2)
    ref = rollout_full(dyn0, inp, params, tires, 1.0, 1.0 / 640)[-1]

    def err(dt):
        d = rollout_full(dyn0, inp, params, tires, 1.0, dt)[-1]
        return float(np.linalg.norm(d - ref))

    r = err(1.0 / 20) / err(1.0 / 40)
    assert r > 10.0


def test_rollout_bicycle_straight(params):
    traj = rollout_bicycle(DynamicState(10.0, 0.0, 0.0),
                           ControlInput(0.0, 0.0), params, 1.0, 0.05)
    assert traj.shape == (21, 3)
    assert traj[-1, 0] == pytest.approx(10.0, rel=1e-12)
    assert traj[-1, 1] == pytest.approx(0.0, abs=1e-12)


def test_wrap_angle():
    assert wrap_angle(math.pi + 0.1) == pytest.approx(-math.pi + 0.1)
    assert wrap_angle(-math.pi - 0.1) == pytest.approx(math.pi - 0.1)
    assert wrap_angle(0.3) == 0.3


def test_dynamic_state_rejects_nonpositive_v():
    with pytest.raises(ValueError):
        DynamicState(0.0, 0.0, 0.0)


def test_params_validate():
    with pytest.raises(ValueError):
        VehicleParams(m=-1.0)
    with pytest.raises(ValueError):
        TireParams(b=1.5, c=1.1, d=1.5, e=-0.9)
