"""Equilibrium solver and manifold tests.

The frozen equilibria below were recomputed independently (scipy fsolve on a
separate implementation of the steady-state equations) and must be matched by
the damped Newton solver.
"""
import math

import numpy as np
import pytest

from driftplan.errors import (DegenerateInputError, EmptySweepError,
                              ManifoldFormatError, NoConvergenceError,
                              OutOfDomainError)
from driftplan.esm import (Manifold, ManifoldPair, build_manifold,
                           default_delta_values, default_lambda_values,
                           load_manifold, params_hash, save_manifold,
                           solve_equilibrium, sweep_inputs)
from driftplan.vehicle import (ControlInput, DynamicState, VehicleParams,
                               full_model_derivatives, rollout_full)

FROZEN_ROOTS = [
    # (delta_deg, lambda, v, beta, psidot) from the independent solver
    (10.0, 0.1, 5.667820783561044, -0.1785014775965784, 0.42771976077371215),
    (20.0, 0.3, 4.482636213951402, -0.28267596717571225, 0.7953458929150155),
]


def test_solve_equilibrium_frozen(params, tires):
    for ddeg, lam, v, beta, psidot in FROZEN_ROOTS:
        pt = solve_equilibrium(ControlInput(math.radians(ddeg), lam),
                               params, tires)
        assert pt.dyn.v == pytest.approx(v, abs=1e-6)
        assert pt.dyn.beta == pytest.approx(beta, abs=1e-6)
        assert pt.dyn.psidot == pytest.approx(psidot, abs=1e-6)
        assert pt.residual < 1e-8
        assert pt.r_c == pytest.approx(pt.dyn.v / pt.dyn.psidot, rel=1e-12)


def test_solve_equilibrium_counter_steer(params, tires):
    # negative steer with heavy drive slip: deep counter-steer drift branch
    pt = solve_equilibrium(ControlInput(math.radians(-5.0), 0.52), params,
                           tires, guess=DynamicState(10.6, -0.47, 0.30))
    assert pt.dyn.v == pytest.approx(10.599917189349629, abs=1e-5)
    assert pt.dyn.beta == pytest.approx(-0.47178378700412504, abs=1e-6)
    assert pt.dyn.psidot == pytest.approx(0.2969711743258079, abs=1e-6)


def test_equilibrium_zeroes_derivatives(params, tires):
    pt = solve_equilibrium(ControlInput(math.radians(10.0), 0.1), params, tires)
    d = full_model_derivatives(pt.dyn, pt.inp, params, tires)
    assert max(abs(x) for x in d) < 1e-6


def test_degenerate_input(params, tires):
    with pytest.raises(DegenerateInputError):
        solve_equilibrium(ControlInput(0.0, 0.0), params, tires)


def test_no_convergence_surfaces(params, tires):
    with pytest.raises(NoConvergenceError):
        solve_equilibrium(ControlInput(math.radians(10.0), 0.1), params, tires,
                          tol=1e-16, max_iter=2)


def test_sweep_small_grid(params, tires):
    deltas = [math.radians(d) for d in (-4.0, 0.0, 4.0, 8.0)]
    lams = [0.05, 0.1]
    sweep = sweep_inputs(deltas, lams, params, tires)
    assert sweep.attempted == 8
    assert 0.0 < sweep.convergence_rate <= 1.0
    assert sweep.convergence_rate >= 0.8
    for pt in sweep.points:
        assert pt.residual < 1e-8


def test_sweep_empty_range(params, tires):
    with pytest.raises(EmptySweepError):
        sweep_inputs([], [0.1], params, tires)


def test_sweep_nothing_converges(params, tires):
    with pytest.raises(EmptySweepError):
        sweep_inputs([math.radians(10.0)], [0.1], params, tires,
                     tol=1e-16, max_iter=1)


# ---------------------------------------------------------------------------
# manifold construction and queries (session-built default manifold)


def test_manifold_domain_rules(manifold, params):
    s = manifold.samples
    assert manifold.sense == 1
    assert s.shape[0] >= 100
    assert np.all(s[:, 1] > 0.0)                      # ccw only
    assert np.all(np.abs(s[:, 5]) >= manifold.r_c_min - 1e-9)
    assert np.all(s[:, 2] <= params.v_max + 1e-9)
    # drift side: beta opposes psidot except inside the small margin
    wrong_side = s[(s[:, 0] * s[:, 1] > 0.0)]
    assert np.all(np.abs(wrong_side[:, 0]) < manifold.beta_margin)
    # stability tags are 0/1
    assert set(np.unique(s[:, 6])) <= {0.0, 1.0}


def test_manifold_snap_exact(manifold):
    for row in manifold.samples[::37]:
        out = manifold.try_query(float(row[0]), float(row[1]))
        assert out == (row[2], row[3], row[4])


def test_manifold_interpolation_linear(manifold):
    # value at a triangle centroid is the mean of its vertex values
    tri = manifold.triangles[len(manifold.triangles) // 2]
    pts = manifold.samples[tri]
    bq = float(pts[:, 0].mean())
    pq = float(pts[:, 1].mean())
    out = manifold.try_query(bq, pq)
    if out is not None:  # centroid can fall in a different (removed) triangle
        ref = pts[:, 2:5].mean(axis=0)
        assert np.allclose(out, ref, atol=1e-9)


def test_manifold_out_of_domain(manifold):
    with pytest.raises(OutOfDomainError):
        manifold.query(0.5, 0.3)   # wrong-side beta, far off the surface
    with pytest.raises(OutOfDomainError):
        manifold.query(-0.1, -0.2)  # clockwise psidot not in the ccw sheet


def test_manifold_query_many_matches_scalar(manifold):
    rng = np.random.default_rng(21)
    (b0, b1), (p0, p1) = manifold.domain_bounds()
    bq = rng.uniform(b0 - 0.1, b1 + 0.1, 300)
    pq = rng.uniform(p0 - 0.1, p1 + 0.1, 300)
    vals, ok = manifold.query_many(bq, pq)
    for i in range(bq.size):
        out = manifold.try_query(float(bq[i]), float(pq[i]))
        if out is None:
            assert not ok[i]
        else:
            assert ok[i]
            assert np.allclose(vals[i], out, atol=1e-12)


def test_manifold_interp_consistent_with_solver(manifold, params, tires):
    # interpolated (v, delta, lambda) near the sheet reproduces a true
    # equilibrium: re-solve from the interpolated state and compare v
    s = manifold.samples
    i = np.argmin(np.abs(s[:, 0] + 0.3) + np.abs(s[:, 1] - 0.35))
    beta = float(s[i, 0]) + 0.004
    psidot = float(s[i, 1]) + 0.006
    out = manifold.try_query(beta, psidot)
    assert out is not None
    v, delta, lam = out
    pt = solve_equilibrium(ControlInput(delta, lam), params, tires,
                           guess=DynamicState(v, beta, psidot))
    assert pt.dyn.v == pytest.approx(v, rel=0.02)


def test_manifold_mirror(manifold):
    mir = manifold.mirror()
    assert mir.sense == -1
    assert np.allclose(mir.samples[:, 0], -manifold.samples[:, 0])
    assert np.allclose(mir.samples[:, 1], -manifold.samples[:, 1])
    assert np.allclose(mir.samples[:, 2], manifold.samples[:, 2])
    assert np.allclose(mir.samples[:, 3], -manifold.samples[:, 3])
    assert np.allclose(mir.samples[:, 4], manifold.samples[:, 4])
    assert np.allclose(mir.samples[:, 5], -manifold.samples[:, 5])
    # query symmetry
    row = manifold.samples[10]
    out = mir.try_query(-float(row[0]), -float(row[1]))
    assert out is not None
    assert out[0] == pytest.approx(row[2], abs=1e-12)
    assert out[1] == pytest.approx(-row[3], abs=1e-12)
    assert out[2] == pytest.approx(row[4], abs=1e-12)


def test_pair_dispatch(pair, manifold):
    row = manifold.samples[5]
    assert pair.try_query(float(row[0]), float(row[1])) is not None
    assert pair.try_query(-float(row[0]), -float(row[1])) is not None
    assert pair.try_query(float(row[0]), 0.0) is None
    vals, ok = pair.query_many(np.array([row[0], -row[0], 0.3]),
                               np.array([row[1], -row[1], 0.0]))
    assert ok[0] and ok[1] and not ok[2]
    assert vals[0, 0] == pytest.approx(vals[1, 0], abs=1e-12)


def test_manifold_stability_tags_verified(manifold, params, tires):
    # spot-check: a tagged-stable sample really holds its state for 5 s
    row = manifold.samples[len(manifold.samples) // 3]
    assert row[6] == 1.0
    traj = rollout_full(DynamicState(row[2], row[0], row[1]),
                        ControlInput(row[3], row[4]), params, tires,
                        5.0, 0.025)
    ref = np.array([row[2], row[0], row[1]])
    assert np.abs(traj - ref).max() < 1e-3


def test_save_load_round_trip(manifold, tmp_path):
    path = tmp_path / "esm.txt"
    save_manifold(manifold, path)
    m2 = load_manifold(path)
    assert np.array_equal(m2.samples, manifold.samples)
    assert np.array_equal(m2.triangles, manifold.triangles)
    assert m2.sense == manifold.sense
    assert m2.params_hash == manifold.params_hash
    assert m2.r_c_min == manifold.r_c_min
    assert m2.beta_margin == manifold.beta_margin


def test_load_manifold_rejects_corrupt(manifold, tmp_path):
    path = tmp_path / "esm.txt"
    save_manifold(manifold, path)
    text = path.read_text()
    bad = tmp_path / "bad.txt"
    bad.write_text("# some other file\n" + text.split("\n", 1)[1])
    with pytest.raises(ManifoldFormatError):
        load_manifold(bad)
    bad.write_text(text[: len(text) // 2].rsplit("\n", 1)[0])
    with pytest.raises(ManifoldFormatError):
        load_manifold(bad)


def test_params_hash_sensitivity(params, tires):
    h1 = params_hash(params, tires)
    h2 = params_hash(VehicleParams(m=1401.0), tires)
    assert h1 != h2
    assert len(h1) == 16


def test_default_sweep_ranges():
    d = default_delta_values()
    l = default_lambda_values()
    assert d.min() == pytest.approx(math.radians(-30.0))
    assert d.max() == pytest.approx(math.radians(30.0))
    assert l.min() == 0.0
    assert l.max() == pytest.approx(0.9)


def test_build_manifold_rejects_thin_input(params, tires):
    from driftplan.errors import InsufficientSamplesError
    sweep = sweep_inputs([math.radians(8.0)], [0.1], params, tires)
    with pytest.raises(InsufficientSamplesError):
        build_manifold(sweep.points[:2], params, tires)
