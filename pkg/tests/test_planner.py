"""Search, heuristic, and receding-horizon tests on small instances."""
import math

import numpy as np
import pytest

from driftplan.errors import (ConfigError, InfeasibleStartError,
                              PlannerStarvedError)
from driftplan.planner import (Node, PlannerConfig, PRUNE_KEYS, SearchStats,
                               discretize, enumerate_exhaustive, expand,
                               heuristic, progress_upper_bound, reconstruct,
                               replan_loop, search, _make_root)
from driftplan.track import FrenetPose, straight_track, circle_track
from driftplan.vehicle import DynamicState, FullState, Pose


def bangbang(v0, t, v_max, a_max):
    # independent closed form of the acceleration-limited distance bound
    t1 = min(t, max(0.0, (v_max - v0) / a_max))
    return v0 * t1 + 0.5 * a_max * t1 * t1 + v_max * (t - t1)


def test_progress_upper_bound_analytic():
    for v0, t in ((5.0, 5.0), (10.0, 3.0), (24.9, 2.0), (25.0, 4.0)):
        ref = bangbang(v0, t, 25.0, 3.0)
        assert progress_upper_bound(v0, t, 25.0, 3.0) == pytest.approx(
            ref, rel=1e-12)
    assert progress_upper_bound(10.0, 0.0, 25.0, 3.0) == 0.0
    # saturated: pure v_max cruise
    assert progress_upper_bound(25.0, 4.0, 25.0, 3.0) == pytest.approx(100.0)


def test_progress_upper_bound_monotone():
    rng = np.random.default_rng(17)
    for _ in range(100):
        v = rng.uniform(0.5, 25.0)
        t = rng.uniform(0.0, 8.0)
        d = progress_upper_bound(float(v), float(t), 25.0, 3.0)
        assert d >= v * t - 1e-12          # never below constant speed
        assert d <= 25.0 * t + 1e-12       # never above the cap


def test_discretize_round_trip():
    steps = PlannerConfig().steps
    vals = (3.27, -1.94, 0.41, 7.83, -0.113, 0.217)
    idx, rem = discretize(vals, steps)
    back = reconstruct(idx, rem, steps)
    assert np.allclose(back, vals, atol=1e-12)
    for r, h in zip(rem, steps):
        assert abs(r) <= 0.5 * h + 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(t_s=0.0)
    with pytest.raises(ValueError):
        PlannerConfig(k_hor=-1)
    with pytest.raises(ValueError):
        PlannerConfig(t_plan=2.0, t_rep=1.0)
    with pytest.raises(ValueError):
        PlannerConfig(ring_radii=(0.2, 0.1), ring_counts=(4, 4))
    with pytest.raises(ValueError):
        PlannerConfig(ring_radii=(0.1,), ring_counts=(4, 4))


def test_collision_bound_geometry():
    cfg = PlannerConfig()
    assert cfg.collision_bound(12.0) == pytest.approx(5.0)
    assert cfg.d_safe(12.0) == pytest.approx(4.0)
    assert cfg.collision_bound(10.0) == pytest.approx(4.0)


def test_heuristic_edge_penalty(params):
    cfg = PlannerConfig()
    track = straight_track(300.0, 12.0)
    mid = _make_root(FullState(track.from_frenet(FrenetPose(50.0, 0.0)),
                               DynamicState(8.0, 0.0, 0.0)), track, cfg, None)
    edge = _make_root(FullState(track.from_frenet(FrenetPose(50.0, 4.5)),
                                DynamicState(8.0, 0.0, 0.0)), track, cfg, None)
    h_mid = heuristic(mid, track, cfg, params)
    h_edge = heuristic(edge, track, cfg, params)
    assert h_mid - h_edge == pytest.approx(cfg.w_edge * 0.5, abs=1e-9)


def test_search_straight_reaches_horizon(pair, params, tires):
    track = straight_track(300.0, 10.0)
    cfg = PlannerConfig(k_hor=6)
    init = FullState(track.from_frenet(FrenetPose(5.0, 0.0)),
                     DynamicState(8.0, 0.0, 0.0))
    path, stats = search(init, track, pair, params, tires, cfg)
    assert path[0].k == 0 and path[-1].k == 6
    assert len(path) == 7
    assert stats.leaf_k == 6
    assert stats.leaf_progress > 20.0       # healthy forward progress in 3 s
    assert not stats.timed_out
    # g bookkeeping: progress equals the s gain
    assert path[-1].progress == pytest.approx(path[-1].s - path[0].s, rel=1e-9)
    # f is s_opt-referenced and the heap never pops a full-depth node late
    assert stats.popped <= stats.created


def test_search_k_hor_zero(pair, params, tires):
    track = straight_track(100.0, 10.0)
    cfg = PlannerConfig(k_hor=0)
    init = FullState(track.from_frenet(FrenetPose(5.0, 0.0)),
                     DynamicState(8.0, 0.0, 0.0))
    path, stats = search(init, track, pair, params, tires, cfg)
    assert len(path) == 1
    assert path[0].mode == "init"


def test_search_infeasible_pose(pair, params, tires):
    track = straight_track(100.0, 10.0)
    cfg = PlannerConfig()
    init = FullState(Pose(50.0, 8.0, 0.0), DynamicState(8.0, 0.0, 0.0))
    with pytest.raises(InfeasibleStartError):
        search(init, track, pair, params, tires, cfg)


def test_search_infeasible_dyn_state(pair, params, tires):
    track = straight_track(100.0, 10.0)
    cfg = PlannerConfig()
    # deep sideslip at a yaw rate the manifold does not carry
    init = FullState(track.from_frenet(FrenetPose(5.0, 0.0)),
                     DynamicState(8.0, -0.5, 0.05))
    with pytest.raises(InfeasibleStartError):
        search(init, track, pair, params, tires, cfg)


def test_search_starved_root(pair, params, tires):
    # on-road but aimed straight at the boundary from next to it: every
    # primitive leaves the collision band -> no child survives
    track = straight_track(100.0, 10.0)
    cfg = PlannerConfig()
    pose = track.from_frenet(FrenetPose(50.0, 3.9))
    init = FullState(Pose(pose.x, pose.y, math.radians(80.0)),
                     DynamicState(10.0, 0.0, 0.0))
    with pytest.raises(PlannerStarvedError) as err:
        search(init, track, pair, params, tires, cfg)
    assert isinstance(err.value.stats, SearchStats)
    assert err.value.stats.expansions >= 1


def test_expand_prune_counters(pair, params, tires, manifold):
    track = circle_track(radius=25.0, width=10.0)
    cfg = PlannerConfig()
    row = manifold.samples[np.argmin(np.abs(manifold.samples[:, 5] - 25.0))]
    fp = FrenetPose(10.0, 0.0)
    pose = track.from_frenet(fp)
    st = FullState(Pose(pose.x, pose.y,
                        pose.psi - float(row[0])),  # heading minus sideslip
                   DynamicState(float(row[2]), float(row[0]), float(row[1])))
    root = _make_root(st, track, cfg, None)
    children, pruned = expand(root, pair, track, params, tires, cfg)
    assert set(pruned) == set(PRUNE_KEYS)
    assert len(children) > 0
    assert all(c.k == 1 for c in children)
    assert all(c.sibling_count == len(children) for c in children)
    # rule iii bound: candidate speed jumps stay under a_max * t_s
    for c in children:
        assert abs(c.state.dyn.v - st.dyn.v) < cfg.a_max * cfg.t_s


def test_exhaustive_matches_search_on_tiny_instance(pair, params, tires,
                                                    manifold):
    track = straight_track(200.0, 10.0)
    cfg = PlannerConfig(k_hor=2, ring_radii=(0.08,), ring_counts=(3,),
                        include_current=False, use_bicycle=False,
                        w_smooth=0.0, w_edge=0.0, w_sibling=0.0)
    row = manifold.samples[len(manifold.samples) // 2]
    pose = track.from_frenet(FrenetPose(20.0, 0.0))
    st = FullState(Pose(pose.x, pose.y, pose.psi - float(row[0])),
                   DynamicState(float(row[2]), float(row[0]), float(row[1])))
    path, stats = search(st, track, pair, params, tires, cfg)
    best, tree, nodes = enumerate_exhaustive(st, track, pair, params, tires,
                                             cfg)
    assert path[-1].k == best.k
    assert path[-1].f == pytest.approx(best.f, abs=1e-12)
    assert len(nodes) >= stats.created


def test_replan_loop_straight(pair, params, tires):
    track = straight_track(300.0, 10.0)
    cfg = PlannerConfig(k_hor=6)
    init = FullState(track.from_frenet(FrenetPose(5.0, 0.0)),
                     DynamicState(8.0, 0.0, 0.0))
    log = replan_loop(init, track, pair, params, tires, cfg,
                      stop=lambda st, prog: prog >= 60.0, max_cycles=12)
    assert not log.starved
    assert log.progress >= 60.0
    assert log.cycles <= 12
    n = log.t.size
    assert n == 1 + log.cycles * int(round(cfg.t_rep / cfg.t_s)) * cfg.n_sub
    assert np.allclose(np.diff(log.t), cfg.t_s / cfg.n_sub)
    assert log.mode[0] == "init"
    assert set(log.mode[1:]) <= {"esm", "bicycle"}
    assert np.all(np.abs(log.psi) <= math.pi + 1e-9)
    assert len(log.cycle_stats) == log.cycles
    assert len(log.cycle_walls) == log.cycles
    # the car sped up meaningfully on the straight
    assert log.v[-1] > log.v[0] + 2.0


def test_replan_loop_rejects_bad_periods(pair, params, tires):
    track = straight_track(100.0, 10.0)
    init = FullState(track.from_frenet(FrenetPose(5.0, 0.0)),
                     DynamicState(8.0, 0.0, 0.0))
    cfg = PlannerConfig(t_rep=0.7, t_plan=0.7)
    with pytest.raises(ConfigError):
        replan_loop(init, track, pair, params, tires, cfg)


def test_replan_loop_starved_flag(pair, params, tires):
    track = straight_track(100.0, 10.0)
    cfg = PlannerConfig()
    pose = track.from_frenet(FrenetPose(50.0, 3.9))
    init = FullState(Pose(pose.x, pose.y, math.radians(80.0)),
                     DynamicState(10.0, 0.0, 0.0))
    log = replan_loop(init, track, pair, params, tires, cfg, max_cycles=3)
    assert log.starved
    assert log.cycles == 0
    assert log.t.size == 1  # only the initial sample
    assert len(log.cycle_stats) == 1


def test_search_stats_lines(pair, params, tires):
    track = straight_track(200.0, 10.0)
    cfg = PlannerConfig(k_hor=3)
    init = FullState(track.from_frenet(FrenetPose(5.0, 0.0)),
                     DynamicState(8.0, 0.0, 0.0))
    _, stats = search(init, track, pair, params, tires, cfg)
    text = stats.lines()
    assert any(ln.startswith("expansions ") for ln in text)
    assert any(ln.startswith("pruned_collision ") for ln in text)
