"""Batch commands behind the CLI: manifold build/inspect, one-shot plans,
and receding-horizon lap runs with metrics and file emission.

Emitted data files (CSV, metrics) are deterministic for a given config: float
cells are written with repr, no timestamps appear, and each file header
carries the config hash.  Measured wall-clock times go to separate timing
files so the deterministic artifacts stay byte-stable run to run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigError, DriftplanError
from .esm import (ManifoldPair, build_manifold, load_manifold, save_manifold,
                  sweep_inputs)
from .planner import ReplanLog, search, replan_loop
from .track import FrenetPose, Track, load_track
from .vehicle import ControlInput, DynamicState, FullState, Pose

__all__ = [
    "BETA_DRIFT",
    "LapMetrics",
    "drift_intervals",
    "write_trajectory_csv",
    "cmd_esm_build",
    "cmd_esm_show",
    "cmd_plan",
    "cmd_lap",
]

BETA_DRIFT = 0.4  # |beta| above this counts as drifting [rad]

CSV_COLUMNS = ("t", "x", "y", "psi", "v", "beta", "psidot",
               "delta", "lambda", "s", "d", "mode")


@dataclass
class LapMetrics:
    """Summary of one receding-horizon run."""

    lap_time: float                  # simulated time [s]
    total_progress: float            # road distance [m]
    max_abs_beta: float              # [rad]
    drift_intervals: list            # [(t0, t1)] with |beta| > BETA_DRIFT
    min_edge_margin: float           # w/2 - max |d| [m]
    cycle_walls: list = field(default_factory=list)   # planning wall times [s]
    expansions: list = field(default_factory=list)    # per-cycle expansions

    def lines(self):
        out = [f"lap_time_s {self.lap_time!r}",
               f"total_progress_m {self.total_progress!r}",
               f"max_abs_beta_rad {self.max_abs_beta!r}",
               f"min_edge_margin_m {self.min_edge_margin!r}",
               f"n_drift_intervals {len(self.drift_intervals)}"]
        for t0, t1 in self.drift_intervals:
            out.append(f"drift_interval_s {t0!r} {t1!r}")
        out.append(f"n_cycles {len(self.expansions)}")
        out.append(f"total_expansions {int(sum(self.expansions))}")
        return out


def drift_intervals(t, beta, threshold: float = BETA_DRIFT):
    """Disjoint, ordered time spans where |beta| exceeds the threshold."""
    t = np.asarray(t, dtype=float)
    mask = np.abs(np.asarray(beta, dtype=float)) > threshold
    spans = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = t[i]
        elif not flag and start is not None:
            spans.append((float(start), float(t[i - 1])))
            start = None
    if start is not None:
        spans.append((float(start), float(t[-1])))
    return spans


# ---------------------------------------------------------------------------
# file emission

def _fmt(value) -> str:
    return repr(float(value))


def write_trajectory_csv(path, rows, config_hash: str) -> None:
    """Write the canonical trajectory CSV.

    rows: iterable of dicts keyed by CSV_COLUMNS ('mode' is a string, the
    rest floats).
    """
    lines = [f"# config_hash={config_hash}", ",".join(CSV_COLUMNS)]
    for row in rows:
        cells = [_fmt(row[c]) for c in CSV_COLUMNS[:-1]]
        cells.append(str(row["mode"]))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _log_rows(log: ReplanLog, track: Track):
    """Exact-projection rows for an executed log."""
    rows = []
    hint = None
    for i in range(log.t.size):
        fp = track.to_frenet(Pose(float(log.x[i]), float(log.y[i]),
                                  float(log.psi[i])), hint_s=hint)
        hint = fp.s
        rows.append({"t": log.t[i], "x": log.x[i], "y": log.y[i],
                     "psi": log.psi[i], "v": log.v[i], "beta": log.beta[i],
                     "psidot": log.psidot[i], "delta": log.delta[i],
                     "lambda": log.lam[i], "s": fp.s, "d": fp.d,
                     "mode": log.mode[i]})
    return rows


def _path_rows(path_nodes, track: Track, config):
    """Rows for a single planned path, one row per primitive sub-sample."""
    from .vehicle import wrap_angle

    dt = config.t_s / config.n_sub
    rows = []
    root = path_nodes[0]
    if len(path_nodes) > 1:
        delta0, lam0 = path_nodes[1].inputs
    else:
        delta0, lam0 = 0.0, 0.0
    fp = track.to_frenet(root.state.pose)
    hint = fp.s
    rows.append({"t": 0.0, "x": root.state.pose.x, "y": root.state.pose.y,
                 "psi": root.state.pose.psi, "v": root.state.dyn.v,
                 "beta": root.state.dyn.beta, "psidot": root.state.dyn.psidot,
                 "delta": delta0, "lambda": lam0, "s": fp.s, "d": fp.d,
                 "mode": "init"})
    for node in path_nodes[1:]:
        t0 = (node.k - 1) * config.t_s
        for j in range(1, config.n_sub + 1):
            x = float(node.pose_samples[j, 0])
            y = float(node.pose_samples[j, 1])
            psi = wrap_angle(float(node.pose_samples[j, 2]))
            fp = track.to_frenet(Pose(x, y, psi), hint_s=hint)
            hint = fp.s
            rows.append({"t": t0 + j * dt, "x": x, "y": y, "psi": psi,
                         "v": node.dyn_samples[j, 0],
                         "beta": node.dyn_samples[j, 1],
                         "psidot": node.dyn_samples[j, 2],
                         "delta": node.inputs[0], "lambda": node.inputs[1],
                         "s": fp.s, "d": fp.d, "mode": node.mode})
    return rows


# ---------------------------------------------------------------------------
# shared loading

def _require(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")
    return Path(path)


def _load_track(cfg: RunConfig) -> Track:
    return load_track(_require(cfg.track_path, "track file"))


def _load_pair(cfg: RunConfig) -> ManifoldPair:
    ccw = load_manifold(_require(cfg.manifold_path, "manifold file"),
                        cfg.vehicle, cfg.tires)
    return ManifoldPair.from_ccw(ccw)


def _initial_state(cfg: RunConfig, track: Track) -> FullState:
    init = cfg.initial
    pose = track.from_frenet(FrenetPose(init.s, init.d))
    psi = track.heading_at(init.s) - init.beta
    return FullState(Pose(pose.x, pose.y, psi),
                     DynamicState(init.v, init.beta, init.psidot))


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_esm_build(cfg: RunConfig) -> int:
    """Sweep the input grid, build and save the counter-clockwise manifold."""
    out = _outdir(cfg)
    t0 = time.perf_counter()
    sweep = sweep_inputs(cfg.esm.delta_values(), cfg.esm.lambda_values(),
                         cfg.vehicle, cfg.tires, tol=cfg.esm.tol,
                         max_iter=cfg.esm.max_iter, fd_step=cfg.esm.fd_step)
    manifold = build_manifold(sweep.points, cfg.vehicle, cfg.tires,
                              sense=1, r_c_min=cfg.esm.r_c_min,
                              beta_margin=cfg.esm.beta_margin,
                              v_max=cfg.vehicle.v_max,
                              max_edge_beta=cfg.esm.max_edge_beta,
                              max_edge_psidot=cfg.esm.max_edge_psidot,
                              stability_screen=cfg.esm.stability_screen)
    wall = time.perf_counter() - t0
    cfg.manifold_path.parent.mkdir(parents=True, exist_ok=True)
    save_manifold(manifold, cfg.manifold_path)
    for line in _manifold_summary(manifold, sweep=sweep):
        print(line)
    print(f"build_wall_s {wall:.2f}")
    print(f"saved {cfg.manifold_path}")
    (out / "esm_build.txt").write_text(
        "\n".join([f"# config_hash={cfg.config_hash}"]
                  + _manifold_summary(manifold, sweep=sweep)) + "\n",
        encoding="utf-8")
    return 0


def _manifold_summary(manifold, sweep=None):
    b = manifold.samples[:, 0]
    p = manifold.samples[:, 1]
    v = manifold.samples[:, 2]
    r = manifold.samples[:, 5]
    stable = float((manifold.samples[:, 6] > 0.5).mean())
    lines = [f"samples {manifold.n_samples}",
             f"triangles {manifold.n_triangles}",
             f"beta_range_rad {b.min()!r} {b.max()!r}",
             f"psidot_range_rad_s {p.min()!r} {p.max()!r}",
             f"v_range_m_s {v.min()!r} {v.max()!r}",
             f"r_c_range_m {r.min()!r} {r.max()!r}",
             f"stable_fraction {stable!r}"]
    if sweep is not None:
        lines.insert(0, f"sweep_convergence {sweep.convergence_rate!r}")
    return lines


def cmd_esm_show(cfg: RunConfig) -> int:
    """Print a summary of a saved manifold; optional surface plot."""
    manifold = load_manifold(_require(cfg.manifold_path, "manifold file"),
                             cfg.vehicle, cfg.tires)
    for line in _manifold_summary(manifold):
        print(line)
    if cfg.plots:
        from . import plots
        import matplotlib.pyplot as plt

        out = _outdir(cfg)
        fig, ax = plt.subplots(figsize=(7, 5))
        sc = ax.scatter(manifold.samples[:, 0], manifold.samples[:, 1],
                        c=manifold.samples[:, 2], s=8, cmap="viridis")
        fig.colorbar(sc, ax=ax, label="v [m/s]")
        ax.set_xlabel("beta [rad]")
        ax.set_ylabel("psidot [rad/s]")
        ax.set_title("equilibrium manifold (counter-clockwise sheet)")
        plots.save_figure(fig, out / "esm_surface.svg", cfg.config_hash)
        print(f"wrote {out / 'esm_surface.svg'}")
    return 0


def cmd_plan(cfg: RunConfig) -> int:
    """One search from the configured initial state; CSV + stats (+ SVG)."""
    track = _load_track(cfg)
    pair = _load_pair(cfg)
    out = _outdir(cfg)
    initial = _initial_state(cfg, track)
    path, stats = search(initial, track, pair, cfg.vehicle, cfg.tires,
                         cfg.planner, keep_nodes=cfg.plots)
    write_trajectory_csv(out / "plan.csv", _path_rows(path, track, cfg.planner),
                         cfg.config_hash)
    det = [f"# config_hash={cfg.config_hash}",
           f"leaf_k {stats.leaf_k}",
           f"leaf_progress_m {stats.leaf_progress!r}",
           f"expansions {stats.expansions}",
           f"created {stats.created}",
           f"timed_out {int(stats.timed_out)}"]
    det += [f"pruned_{k} {v}" for k, v in stats.pruned.items()]
    (out / "plan_stats.txt").write_text("\n".join(det) + "\n", encoding="utf-8")
    (out / "plan_timings.txt").write_text(
        f"wall_time_s {stats.wall_time:.3f}\n", encoding="utf-8")
    print(f"plan: depth {stats.leaf_k}, progress {stats.leaf_progress:.2f} m, "
          f"{stats.expansions} expansions, {stats.wall_time:.2f} s")
    if cfg.plots:
        from . import plots
        plots.plot_plan(track, path, stats.all_nodes, out / "plan.svg",
                        cfg.config_hash)
        print(f"wrote {out / 'plan.svg'}")
    return 0


def _metrics_from_log(log: ReplanLog, rows, track: Track) -> LapMetrics:
    if log.t.size:
        max_beta = float(np.max(np.abs(log.beta)))
        margin = 0.5 * track.width - max(abs(r["d"]) for r in rows)
        spans = drift_intervals(log.t, log.beta)
        lap_time = float(log.t[-1])
    else:
        max_beta, margin, spans, lap_time = 0.0, 0.5 * track.width, [], 0.0
    return LapMetrics(lap_time=lap_time, total_progress=log.progress,
                      max_abs_beta=max_beta, drift_intervals=spans,
                      min_edge_margin=margin,
                      cycle_walls=list(log.cycle_walls),
                      expansions=[st.expansions for st in log.cycle_stats])


def cmd_lap(cfg: RunConfig) -> int:
    """Receding-horizon run for the configured lap count."""
    track = _load_track(cfg)
    pair = _load_pair(cfg)
    out = _outdir(cfg)

    if cfg.laps == 0:
        empty = LapMetrics(0.0, 0.0, 0.0, [], 0.5 * track.width)
        (out / "lap_metrics.txt").write_text(
            "\n".join([f"# config_hash={cfg.config_hash}"] + empty.lines()) + "\n",
            encoding="utf-8")
        print("lap: 0 laps requested, nothing to run")
        return 0

    if not track.closed:
        raise ConfigError("lap mode needs a closed track")
    initial = _initial_state(cfg, track)
    goal = cfg.laps * track.length

    def stop(state, progress):
        return progress >= goal

    log = replan_loop(initial, track, pair, cfg.vehicle, cfg.tires,
                      cfg.planner, stop=stop, max_cycles=cfg.max_cycles)
    rows = _log_rows(log, track)
    write_trajectory_csv(out / "lap.csv", rows, cfg.config_hash)
    metrics = _metrics_from_log(log, rows, track)
    (out / "lap_metrics.txt").write_text(
        "\n".join([f"# config_hash={cfg.config_hash}"] + metrics.lines()) + "\n",
        encoding="utf-8")
    cyc = ["cycle expansions created leaf_k leaf_progress_m timed_out"]
    for i, st in enumerate(log.cycle_stats):
        cyc.append(f"{i} {st.expansions} {st.created} {st.leaf_k} "
                   f"{st.leaf_progress!r} {int(st.timed_out)}")
    (out / "lap_cycles.txt").write_text(
        "\n".join([f"# config_hash={cfg.config_hash}"] + cyc) + "\n",
        encoding="utf-8")
    (out / "lap_timings.txt").write_text(
        "\n".join(f"cycle {i} wall_s {w:.3f}"
                  for i, w in enumerate(log.cycle_walls)) + "\n",
        encoding="utf-8")
    print(f"lap: progress {log.progress:.1f} m over {log.cycles} cycles "
          f"({log.t[-1]:.1f} s simulated), max |beta| {metrics.max_abs_beta:.3f}, "
          f"min margin {metrics.min_edge_margin:.2f} m")
    for t0, t1 in metrics.drift_intervals:
        print(f"  drift interval {t0:.2f} .. {t1:.2f} s")
    if cfg.plots:
        from . import plots
        plots.plot_lap_trajectory(track, log.x, log.y, out / "lap.svg",
                                  cfg.config_hash)
        plots.plot_states(
            log.t,
            {"v [m/s]": log.v, "beta [rad]": log.beta,
             "psidot [rad/s]": log.psidot, "delta [rad]": log.delta,
             "lambda": log.lam},
            out / "lap_states.svg", cfg.config_hash)
        print(f"wrote {out / 'lap.svg'} and {out / 'lap_states.svg'}")
    if log.starved:
        raise DriftplanError(
            f"planner starved after {log.progress:.1f} m; partial logs written")
    return 0
