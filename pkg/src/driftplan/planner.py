"""Hybrid A* over motion primitives for maximum road progress.

Nodes live on a six-state grid (x, y, psi, v, beta, psidot) but carry the
exact continuous state as grid remainders, so expansion never accumulates
rounding error.  Expansion has two modes: sampling the steady-state manifold
around the current (beta, psidot) for drift maneuvers, and constant-input
bicycle rollouts near the origin of the slip plane for ordinary driving
(accelerating, braking, mild cornering).  Cost is negated road progress, so
the best-first loop is a plain min-heap A*.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfeasibleStartError, PlannerStarvedError
from .track import Track
from .vehicle import (ControlInput, DynamicState, FullState, Pose,
                      TireParams, VehicleParams, wrap_angle)

__all__ = [
    "PlannerConfig",
    "Node",
    "SearchStats",
    "ReplanLog",
    "expand",
    "collision_check",
    "heuristic",
    "progress_upper_bound",
    "search",
    "replan_loop",
    "enumerate_exhaustive",
]

MODE_ESM = "esm"
MODE_BICYCLE = "bicycle"

PRUNE_KEYS = ("domain", "sign", "accel", "vbound", "region", "collision",
              "duplicate")


@dataclass
class PlannerConfig:
    # grid steps per state
    step_x: float = 0.5            # [m]
    step_y: float = 0.5            # [m]
    step_psi: float = math.radians(5.0)
    step_v: float = 0.25           # [m/s]
    step_beta: float = 0.02        # [rad]
    step_psidot: float = 0.05      # [rad/s]
    # primitive timing and search horizon
    t_s: float = 0.5               # primitive duration [s]
    n_sub: int = 20                # samples per primitive = n_sub + 1
    k_hor: int = 12                # horizon depth (6 s at defaults)
    n_timeout: int = 8000          # OPEN size cap
    # manifold sampling pattern, radii in normalized (beta, psidot) units
    ring_radii: tuple = (0.05, 0.15)
    ring_counts: tuple = (8, 8)
    include_current: bool = True
    beta_scale: float = 1.0
    psidot_scale: float = 2.0
    # bicycle expansion region and input grid
    use_bicycle: bool = True
    beta_lin: float = 0.1          # [rad]
    psidot_lin: float = 0.3       # [rad/s]
    delta_lin_max: float = 0.08    # [rad]
    # c_x * 0.61 / m = 2.992 m/s^2, just under a_max so the heuristic's
    # bang-bang profile stays a tight bound on what bicycle children achieve
    lambda_lin_max: float = 0.61
    n_delta: int = 3
    n_lambda: int = 5
    # pruning and heuristic
    a_max: float = 3.0             # accel/decel envelope [m/s^2]
    w_smooth: float = 0.05
    w_edge: float = 0.5
    w_sibling: float = 0.1
    edge_buffer: float = 1.0       # penalty-free band ends this far inside the margin [m]
    half_width: float = 0.9        # vehicle half-width [m]
    clearance: float = 0.1         # extra collision clearance [m]
    # receding horizon
    t_rep: float = 1.0             # replan period [s]
    t_plan: float = 1.0            # planning-time compensation [s]

    def __post_init__(self):
        for name in ("step_x", "step_y", "step_psi", "step_v", "step_beta",
                     "step_psidot", "t_s", "t_rep", "t_plan"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.k_hor < 0 or self.n_sub < 1:
            raise ValueError("k_hor must be >= 0 and n_sub >= 1")
        if self.t_plan > self.t_rep + 1e-12:
            raise ValueError("t_plan must be <= t_rep")
        radii = tuple(self.ring_radii)
        if any(r <= 0.0 for r in radii) or list(radii) != sorted(set(radii)):
            raise ValueError("ring_radii must be positive and increasing")
        if len(radii) != len(tuple(self.ring_counts)):
            raise ValueError("ring_radii and ring_counts length mismatch")

    @property
    def steps(self):
        return (self.step_x, self.step_y, self.step_psi,
                self.step_v, self.step_beta, self.step_psidot)

    def collision_bound(self, width: float) -> float:
        """Largest |d| that does not collide (footprint margin applied)."""
        return 0.5 * width - self.half_width - self.clearance

    def d_safe(self, width: float) -> float:
        """|d| below this attracts no edge penalty."""
        return self.collision_bound(width) - self.edge_buffer


def discretize(values, steps):
    """State -> (grid indexes, remainders); exact state = idx*step + rem."""
    idx = tuple(int(math.floor(v / h + 0.5)) for v, h in zip(values, steps))
    rem = tuple(v - i * h for v, i, h in zip(values, idx, steps))
    return idx, rem


def reconstruct(idx, rem, steps):
    return tuple(i * h + r for i, r, h in zip(idx, rem, steps))


class Node:
    """Search node: grid cell plus exact state and incoming primitive."""

    __slots__ = ("idx", "rem", "parent_idx", "g", "f", "k", "sibling_count",
                 "mode", "state", "s", "d", "inputs", "dyn_samples",
                 "pose_samples", "parent", "seq", "retired", "h_value")

    def __init__(self, idx, rem, parent_idx, g, k, mode, state, s, d, inputs,
                 dyn_samples, pose_samples, parent):
        self.idx = idx
        self.rem = rem
        self.parent_idx = parent_idx
        self.g = g                  # negated progress [m], min-ordering
        self.f = 0.0
        self.k = k
        self.sibling_count = 1
        self.mode = mode
        self.state = state
        self.s = s                  # unwrapped arc length of this search [m]
        self.d = d
        self.inputs = inputs        # (delta, lambda) at the primitive endpoint
        self.dyn_samples = dyn_samples
        self.pose_samples = pose_samples
        self.parent = parent
        self.seq = -1
        self.retired = False
        self.h_value = 0.0

    @property
    def progress(self) -> float:
        return -self.g

    def state_vector(self):
        p, dyn = self.state.pose, self.state.dyn
        return (p.x, p.y, p.psi, dyn.v, dyn.beta, dyn.psidot)


def progress_upper_bound(v: float, t_rem: float, v_max: float,
                         a_max: float) -> float:
    """Distance of the bang-bang profile: full acceleration to v_max, hold."""
    t1 = min(t_rem, max(0.0, (v_max - v) / a_max))
    return v * t1 + 0.5 * a_max * t1 * t1 + v_max * (t_rem - t1)


def heuristic(node: Node, track: Track, config: PlannerConfig,
              params: VehicleParams) -> float:
    """Optimistic remaining progress [m] minus shaping penalties.

    The base term assumes travel along the centerline at the bang-bang speed
    profile.  Penalties discourage rough state jumps, the road edge band, and
    lonely branches (few surviving siblings signal a fragile corridor).
    """
    t_rem = (config.k_hor - node.k) * config.t_s
    h = progress_upper_bound(node.state.dyn.v, t_rem, params.v_max, config.a_max)
    if node.parent is not None:
        pd = node.parent.state.dyn
        nd = node.state.dyn
        h -= config.w_smooth * (abs(nd.v - pd.v) + abs(nd.beta - pd.beta)
                                + abs(nd.psidot - pd.psidot))
    h -= config.w_edge * max(0.0, abs(node.d) - config.d_safe(track.width))
    h -= config.w_sibling / (1.0 + node.sibling_count)
    return h


def collision_check(d_samples: np.ndarray, track: Track,
                    config: PlannerConfig) -> bool:
    """True iff any sampled lateral offset leaves the inflated road band."""
    return bool(np.any(np.abs(d_samples) > config.collision_bound(track.width)))


def _integrate_kin_batch(x0, y0, psi0, v, beta, psidot, dt):
    """Row-wise form of the kinematic integrator for (c, n) sample arrays.

    Summation order per row matches the scalar integrator exactly, so logged
    primitives replay bit for bit.
    """
    c, n = v.shape
    dpsidot = psidot[:, 1:] - psidot[:, :-1]
    psi = np.empty((c, n))
    psi[:, 0] = psi0
    np.cumsum(0.5 * (psidot[:, :-1] + psidot[:, 1:]) * dt, axis=1,
              out=psi[:, 1:])
    psi[:, 1:] += psi0

    psi_mid = psi[:, :-1] + dt * (0.5 * psidot[:, :-1] + 0.125 * dpsidot)
    v_mid = 0.5 * (v[:, :-1] + v[:, 1:])
    beta_mid = 0.5 * (beta[:, :-1] + beta[:, 1:])

    h0 = psi[:, :-1] + beta[:, :-1]
    hm = psi_mid + beta_mid
    h1 = psi[:, 1:] + beta[:, 1:]
    dx = dt / 6.0 * (v[:, :-1] * np.cos(h0) + 4.0 * v_mid * np.cos(hm)
                     + v[:, 1:] * np.cos(h1))
    dy = dt / 6.0 * (v[:, :-1] * np.sin(h0) + 4.0 * v_mid * np.sin(hm)
                     + v[:, 1:] * np.sin(h1))

    x = np.empty((c, n))
    y = np.empty((c, n))
    x[:, 0] = x0
    y[:, 0] = y0
    np.cumsum(dx, axis=1, out=x[:, 1:])
    np.cumsum(dy, axis=1, out=y[:, 1:])
    x[:, 1:] += x0
    y[:, 1:] += y0
    return x, y, psi


def _bicycle_grid(dyn0: DynamicState, deltas: np.ndarray, lams: np.ndarray,
                  params: VehicleParams, t_s: float, n_sub: int):
    """RK4 rollouts of the linear bicycle model over a whole input grid.

    Vectorized equivalent of rollout_bicycle lane by lane.  Returns
    (dyn (g, n_sub+1, 3), valid (g,)); lanes that fall below v_eps or blow
    up are flagged instead of raising.
    """
    m, c_f, c_r, c_x = params.m, params.c_f, params.c_r, params.c_x
    l_f, l_r, j_z = params.l_f, params.l_r, params.j_z
    dt = t_s / n_sub

    # axle forces are linear in (b, p/v, delta); fold them into five
    # constants so each RK4 stage costs a handful of ufuncs
    a0 = c_f + c_r
    a1 = c_f * l_f - c_r * l_r
    a2 = c_f * l_f * l_f + c_r * l_r * l_r
    d0 = c_f * deltas
    d1 = c_f * l_f * deltas
    fxr_m = c_x * lams / m

    def deriv(v, b, p):
        q = p / v
        return (p * v * b + fxr_m,
                (-a0 * b - a1 * q + d0) / (m * v) - p,
                (-a1 * b - a2 * q + d1) / j_z)

    g = deltas.size
    out = np.empty((g, n_sub + 1, 3))
    v = np.full(g, dyn0.v)
    b = np.full(g, dyn0.beta)
    p = np.full(g, dyn0.psidot)
    out[:, 0, 0], out[:, 0, 1], out[:, 0, 2] = v, b, p
    with np.errstate(all="ignore"):
        for i in range(1, n_sub + 1):
            k1 = deriv(v, b, p)
            k2 = deriv(v + 0.5 * dt * k1[0], b + 0.5 * dt * k1[1],
                       p + 0.5 * dt * k1[2])
            k3 = deriv(v + 0.5 * dt * k2[0], b + 0.5 * dt * k2[1],
                       p + 0.5 * dt * k2[2])
            k4 = deriv(v + dt * k3[0], b + dt * k3[1], p + dt * k3[2])
            v = v + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            b = b + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            p = p + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            out[:, i, 0], out[:, i, 1], out[:, i, 2] = v, b, p
    valid = (np.isfinite(out).all(axis=(1, 2))
             & (out[:, :, 0] >= params.v_eps).all(axis=1))
    return out, valid


def _ring_targets(beta0: float, psidot0: float, config: PlannerConfig):
    """(beta, psidot) endpoint candidates around the current slip state."""
    pts = []
    if config.include_current:
        pts.append((beta0, psidot0))
    for r, cnt in zip(config.ring_radii, config.ring_counts):
        for j in range(cnt):
            ang = 2.0 * math.pi * j / cnt
            pts.append((beta0 + r * config.beta_scale * math.cos(ang),
                        psidot0 + r * config.psidot_scale * math.sin(ang)))
    return pts


def expand(node: Node, manifold, track: Track, params: VehicleParams,
           tires: TireParams, config: PlannerConfig, s_opt: float = 0.0):
    """Generate surviving children of a node.

    ESM mode samples the manifold by the ring pattern and transitions the
    dynamic states linearly over t_s; bicycle mode (only inside the linear
    region) rolls out a grid of constant (delta, lambda) inputs.  Pruning:
    (i) out-of-domain manifold queries, (ii) beta*psidot > 0 beyond the
    margin, (iii) |dv|/t_s >= a_max, speed bounds, bicycle children leaving
    the linear region, and off-road primitives.  Returns (children, pruned
    counters); an empty child list is valid.
    """
    pruned = dict.fromkeys(PRUNE_KEYS, 0)
    dyn0 = node.state.dyn
    pose0 = node.state.pose
    dt = config.t_s / config.n_sub
    n_samp = config.n_sub + 1
    tau = np.linspace(0.0, 1.0, n_samp)

    # candidate primitives: (dyn array (n_samp, 3), inputs, mode)
    cands = []

    targets = _ring_targets(dyn0.beta, dyn0.psidot, config)
    tb = np.array([t[0] for t in targets])
    tp = np.array([t[1] for t in targets])
    vals, ok = manifold.query_many(tb, tp)
    margin = getattr(manifold, "beta_margin", 0.05)
    for (b1, p1), (v1, delta, lam), good in zip(targets, vals, ok):
        if not good:
            pruned["domain"] += 1                        # rule i
            continue
        if b1 * p1 > 0.0 and abs(b1) >= margin:
            pruned["sign"] += 1                          # rule ii
            continue
        if abs(v1 - dyn0.v) / config.t_s >= config.a_max:
            pruned["accel"] += 1                         # rule iii
            continue
        if v1 > params.v_max or v1 < params.v_eps:
            pruned["vbound"] += 1
            continue
        dyn = np.empty((n_samp, 3))
        dyn[:, 0] = dyn0.v + tau * (v1 - dyn0.v)
        dyn[:, 1] = dyn0.beta + tau * (b1 - dyn0.beta)
        dyn[:, 2] = dyn0.psidot + tau * (p1 - dyn0.psidot)
        cands.append((dyn, ControlInput(float(delta), float(lam)), MODE_ESM))

    in_linear = (abs(dyn0.beta) < config.beta_lin
                 and abs(dyn0.psidot) < config.psidot_lin)
    if config.use_bicycle and in_linear:
        dd, ll = np.meshgrid(
            np.linspace(-config.delta_lin_max, config.delta_lin_max,
                        config.n_delta),
            np.linspace(-config.lambda_lin_max, config.lambda_lin_max,
                        config.n_lambda), indexing="ij")
        dd = dd.ravel()
        ll = ll.ravel()
        dyn_grid, valid = _bicycle_grid(dyn0, dd, ll, params,
                                        config.t_s, config.n_sub)
        for gi in range(dd.size):
            if not valid[gi]:
                pruned["vbound"] += 1
                continue
            dyn = dyn_grid[gi]
            v1, b1, p1 = dyn[-1]
            if not (abs(b1) < config.beta_lin
                    and abs(p1) < config.psidot_lin):
                pruned["region"] += 1
                continue
            if abs(v1 - dyn0.v) / config.t_s >= config.a_max:
                pruned["accel"] += 1
                continue
            if v1 > params.v_max or v1 < params.v_eps:
                pruned["vbound"] += 1
                continue
            cands.append((dyn, ControlInput(float(dd[gi]), float(ll[gi])),
                          MODE_BICYCLE))

    if not cands:
        return [], pruned

    # pose integration and road projection, batched over all candidates
    dyn_stack = np.stack([c[0] for c in cands])
    xs, ys, psis = _integrate_kin_batch(
        pose0.x, pose0.y, pose0.psi, dyn_stack[:, :, 0],
        dyn_stack[:, :, 1], dyn_stack[:, :, 2], dt)
    xy_all = np.stack([xs.ravel(), ys.ravel()], axis=1)
    # window covers the longest primitive (v_max * t_s) plus drift excursions
    # window: longest primitive reach (v_max * t_s = 12.5 m) plus margin
    s_all, d_all = track.project_many(xy_all, hint_s=node.s, window=16.0)
    s_all = s_all.reshape(len(cands), n_samp)
    d_all = d_all.reshape(len(cands), n_samp)

    children = []
    for i, (dyn, inp, mode) in enumerate(cands):
        if collision_check(d_all[i], track, config):
            pruned["collision"] += 1
            continue
        pose_arr = np.stack([xs[i], ys[i], psis[i]], axis=1)
        state = FullState(Pose(float(pose_arr[-1, 0]), float(pose_arr[-1, 1]),
                               float(pose_arr[-1, 2])),
                          DynamicState(float(dyn[-1, 0]), float(dyn[-1, 1]),
                                       float(dyn[-1, 2])))
        idx, rem = discretize(
            (state.pose.x, state.pose.y, state.pose.psi,
             state.dyn.v, state.dyn.beta, state.dyn.psidot), config.steps)
        g = node.g - (float(s_all[i, -1]) - node.s)
        child = Node(idx, rem, node.idx, g, node.k + 1, mode, state,
                     float(s_all[i, -1]), float(d_all[i, -1]), inp,
                     dyn, pose_arr, node)
        children.append(child)

    # sibling count and cost are set once pruning is settled (lazy form)
    for child in children:
        child.sibling_count = len(children)
        child.h_value = heuristic(child, track, config, params)
        child.f = s_opt + child.g - child.h_value
    return children, pruned


@dataclass
class SearchStats:
    expansions: int = 0
    created: int = 0
    popped: int = 0
    peak_open: int = 0
    pruned: dict = field(default_factory=lambda: dict.fromkeys(PRUNE_KEYS, 0))
    wall_time: float = 0.0
    timed_out: bool = False
    leaf_k: int = 0
    leaf_f: float = 0.0
    leaf_progress: float = 0.0
    all_nodes: list = field(default_factory=list)  # filled only on request

    def lines(self):
        out = [f"expansions {self.expansions}",
               f"created {self.created}",
               f"popped {self.popped}",
               f"peak_open {self.peak_open}",
               f"wall_time_s {self.wall_time:.3f}",
               f"timed_out {int(self.timed_out)}",
               f"leaf_k {self.leaf_k}",
               f"leaf_f {self.leaf_f!r}",
               f"leaf_progress_m {self.leaf_progress!r}"]
        out += [f"pruned_{k} {v}" for k, v in self.pruned.items()]
        return out


def _make_root(initial: FullState, track: Track, config: PlannerConfig,
               root_inputs: ControlInput | None) -> Node:
    fp = track.to_frenet(initial.pose)
    if not track.on_road(fp):
        raise InfeasibleStartError(f"initial pose off-road (d = {fp.d:.2f} m)")
    idx, rem = discretize(
        (initial.pose.x, initial.pose.y, initial.pose.psi,
         initial.dyn.v, initial.dyn.beta, initial.dyn.psidot), config.steps)
    inputs = root_inputs if root_inputs is not None else ControlInput(0.0, 0.0)
    return Node(idx, rem, None, 0.0, 0, "init", initial, fp.s, fp.d, inputs,
                None, None, None)


def _check_start_coverage(initial: FullState, manifold,
                          config: PlannerConfig) -> None:
    dyn = initial.dyn
    in_linear = (abs(dyn.beta) < config.beta_lin
                 and abs(dyn.psidot) < config.psidot_lin)
    if in_linear:
        return
    if manifold.try_query(dyn.beta, dyn.psidot) is None:
        raise InfeasibleStartError(
            "initial dynamic state neither on the manifold nor in the "
            f"bicycle region: beta={dyn.beta:.3f} psidot={dyn.psidot:.3f}")


def search(initial: FullState, track: Track, manifold,
           params: VehicleParams, tires: TireParams, config: PlannerConfig,
           root_inputs: ControlInput | None = None, keep_nodes: bool = False):
    """Best-first search to the horizon; returns (path, stats).

    path is the node chain root..leaf where the leaf is the node closest to
    the horizon (max k, ties by lower f, then earlier insertion).  Duplicate
    grid cells at equal depth keep the lower-f entry.  Termination: a full-
    depth node is popped, OPEN runs dry, or OPEN exceeds n_timeout.
    keep_nodes retains every surviving node on stats.all_nodes (plotting).
    """
    t0 = time.perf_counter()
    _check_start_coverage(initial, manifold, config)
    root = _make_root(initial, track, config, root_inputs)
    s_opt = progress_upper_bound(initial.dyn.v, config.k_hor * config.t_s,
                                 params.v_max, config.a_max)
    root.h_value = heuristic(root, track, config, params)
    root.f = s_opt + root.g - root.h_value

    stats = SearchStats(created=1)
    if config.k_hor == 0:
        stats.wall_time = time.perf_counter() - t0
        stats.leaf_f = root.f
        return [root], stats

    seq = 0
    root.seq = seq
    heap = [(root.f, -root.k, root.seq, root)]
    nodes = {(root.idx, root.k): root}
    closed = set()
    live_open = 1
    stats.peak_open = 1

    terminal = None
    while heap:
        f, negk, _, node = heapq.heappop(heap)
        if node.retired:
            continue
        live_open -= 1
        key = (node.idx, node.k)
        if key in closed:
            continue
        stats.popped += 1
        if node.k >= config.k_hor:
            terminal = node
            break
        closed.add(key)

        children, pruned = expand(node, manifold, track, params, tires,
                                  config, s_opt=s_opt)
        stats.expansions += 1
        for k_, v_ in pruned.items():
            stats.pruned[k_] += v_

        for child in children:
            ckey = (child.idx, child.k)
            if ckey in closed:
                stats.pruned["duplicate"] += 1
                continue
            old = nodes.get(ckey)
            if old is not None and not old.retired:
                if child.f < old.f:
                    old.retired = True
                    live_open -= 1
                else:
                    stats.pruned["duplicate"] += 1
                    continue
            seq += 1
            child.seq = seq
            nodes[ckey] = child
            heapq.heappush(heap, (child.f, -child.k, child.seq, child))
            live_open += 1
            stats.created += 1
        stats.peak_open = max(stats.peak_open, live_open)
        if live_open > config.n_timeout:
            stats.timed_out = True
            break

    if terminal is None:
        alive = [n for n in nodes.values() if not n.retired]
        terminal = min(alive, key=lambda n: (-n.k, n.f, n.seq))

    stats.wall_time = time.perf_counter() - t0
    stats.leaf_k = terminal.k
    stats.leaf_f = terminal.f
    stats.leaf_progress = terminal.progress
    if keep_nodes:
        stats.all_nodes = sorted(nodes.values(), key=lambda n: n.seq)
    if terminal is root:
        err = PlannerStarvedError("initial expansion entirely pruned")
        err.stats = stats
        raise err

    path = []
    n = terminal
    while n is not None:
        path.append(n)
        n = n.parent
    path.reverse()
    return path, stats


# ---------------------------------------------------------------------------
# receding horizon

@dataclass
class ReplanLog:
    """Executed-trajectory log stitched from replan cycles at t_s/n_sub."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray          # wrapped per sample
    v: np.ndarray
    beta: np.ndarray
    psidot: np.ndarray
    delta: np.ndarray
    lam: np.ndarray
    mode: list
    cycle_stats: list
    cycle_walls: list
    progress: float          # cumulative road distance [m]
    final_state: FullState
    starved: bool
    cycles: int


def replan_loop(initial: FullState, track: Track, manifold,
                params: VehicleParams, tires: TireParams,
                config: PlannerConfig, stop=None, max_cycles: int = 4000,
                root_inputs: ControlInput | None = None) -> ReplanLog:
    """Plan, execute the first t_rep of each plan, replan from the handoff.

    The next plan starts from the state the previous plan reaches at t_plan
    (perfect actuation), and the segment [0, t_rep) of the previous plan is
    appended to the log.  With the default t_plan = t_rep the log is exactly
    continuous.  stop(state, progress) is checked after each cycle.  A
    starved search ends the loop with the log so far flagged.
    """
    n_exec = int(round(config.t_rep / config.t_s))
    if abs(n_exec * config.t_s - config.t_rep) > 1e-9 or n_exec < 1:
        raise ConfigError("t_rep must be a positive multiple of t_s")
    n_hand = int(round(config.t_plan / config.t_s))
    if abs(n_hand * config.t_s - config.t_plan) > 1e-9 or n_hand < 1:
        raise ConfigError("t_plan must be a positive multiple of t_s")

    dt = config.t_s / config.n_sub
    rows_dyn = []        # (v, beta, psidot)
    rows_pose = []       # (x, y, psi)
    rows_inp = []        # (delta, lambda)
    modes = []
    cycle_stats = []
    cycle_walls = []
    starved = False

    state = initial
    inputs = root_inputs if root_inputs is not None else ControlInput(0.0, 0.0)
    progress = 0.0
    cycles = 0

    # the very first sample is the initial state itself
    rows_dyn.append((initial.dyn.v, initial.dyn.beta, initial.dyn.psidot))
    rows_pose.append((initial.pose.x, initial.pose.y, initial.pose.psi))
    rows_inp.append((inputs.delta, inputs.lam))
    modes.append("init")

    while cycles < max_cycles:
        t_c = time.perf_counter()
        try:
            path, stats = search(state, track, manifold, params, tires,
                                 config, root_inputs=inputs)
        except PlannerStarvedError as exc:
            cycle_stats.append(getattr(exc, "stats", None))
            cycle_walls.append(time.perf_counter() - t_c)
            starved = True
            break
        cycle_walls.append(time.perf_counter() - t_c)
        cycle_stats.append(stats)
        # a plan shorter than t_plan commits what it has and replans sooner;
        # only a fully starved search (no feasible child at all) aborts
        depth = len(path) - 1
        n_exec_c = min(n_exec, depth)
        n_hand_c = min(n_hand, depth)

        for node in path[1:n_exec_c + 1]:
            dyn = node.dyn_samples
            pose = node.pose_samples
            for j in range(1, config.n_sub + 1):
                rows_dyn.append((dyn[j, 0], dyn[j, 1], dyn[j, 2]))
                rows_pose.append((pose[j, 0], pose[j, 1], pose[j, 2]))
                rows_inp.append((node.inputs.delta, node.inputs.lam))
                modes.append(node.mode)

        progress += path[n_exec_c].s - path[0].s
        state = path[n_hand_c].state
        inputs = path[n_hand_c].inputs
        cycles += 1
        if stop is not None and stop(state, progress):
            break

    pose_arr = np.asarray(rows_pose)
    dyn_arr = np.asarray(rows_dyn)
    inp_arr = np.asarray(rows_inp)
    return ReplanLog(
        t=dt * np.arange(pose_arr.shape[0]),
        x=pose_arr[:, 0], y=pose_arr[:, 1],
        psi=np.array([wrap_angle(p) for p in pose_arr[:, 2]]),
        v=dyn_arr[:, 0], beta=dyn_arr[:, 1], psidot=dyn_arr[:, 2],
        delta=inp_arr[:, 0], lam=inp_arr[:, 1],
        mode=modes, cycle_stats=cycle_stats, cycle_walls=cycle_walls,
        progress=progress, final_state=state, starved=starved, cycles=cycles)


# ---------------------------------------------------------------------------
# exhaustive oracle (test instrumentation, small configs only)

class TreeNode:
    __slots__ = ("node", "children")

    def __init__(self, node):
        self.node = node
        self.children = []


def enumerate_exhaustive(initial: FullState, track: Track, manifold,
                         params: VehicleParams, tires: TireParams,
                         config: PlannerConfig,
                         root_inputs: ControlInput | None = None):
    """Expand every node to the horizon with no duplicate merging.

    Returns (best_leaf, tree_root, all_nodes).  Best leaf uses the search
    tie-break (max k, then lower f, then creation order).  Intended for tiny
    configurations; node count grows with branching^k_hor.
    """
    _check_start_coverage(initial, manifold, config)
    root = _make_root(initial, track, config, root_inputs)
    s_opt = progress_upper_bound(initial.dyn.v, config.k_hor * config.t_s,
                                 params.v_max, config.a_max)
    root.h_value = heuristic(root, track, config, params)
    root.f = s_opt + root.g - root.h_value
    root.seq = 0

    tree = TreeNode(root)
    all_nodes = [tree]
    frontier = [tree]
    seq = 0
    while frontier:
        tn = frontier.pop(0)
        if tn.node.k >= config.k_hor:
            continue
        children, _ = expand(tn.node, manifold, track, params, tires,
                             config, s_opt=s_opt)
        for child in children:
            seq += 1
            child.seq = seq
            ctn = TreeNode(child)
            tn.children.append(ctn)
            all_nodes.append(ctn)
            frontier.append(ctn)
    best = min(all_nodes, key=lambda tn: (-tn.node.k, tn.node.f, tn.node.seq))
    return best.node, tree, all_nodes
