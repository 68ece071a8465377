"""Run configuration.

One INI file, one section per module, every tunable numeric default spelled
out.  `write_default_config` emits the canonical file; `load_config` reads a
user file on top of the defaults and rejects unknown sections or keys, bad
numbers, and inconsistent planner timing.  The effective settings are hashed
(sha256, first 16 hex digits) so every emitted artifact can carry a short
provenance label in its header.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .planner import PlannerConfig
from .vehicle import TireParams, VehicleParams

__all__ = [
    "EsmSettings",
    "InitialState",
    "RunConfig",
    "default_config_dict",
    "write_default_config",
    "load_config",
    "config_hash",
]


@dataclass
class EsmSettings:
    """Sweep grid and manifold build options."""

    delta_min_deg: float = -30.0
    delta_max_deg: float = 30.0
    delta_step_deg: float = 1.0
    lambda_min: float = 0.0
    lambda_max: float = 0.9
    lambda_step: float = 0.02
    tol: float = 1e-8
    max_iter: int = 50
    fd_step: float = 1e-6
    r_c_min: float = 10.0
    beta_margin: float = 0.05
    max_edge_beta: float = 0.06
    max_edge_psidot: float = 0.25
    stability_screen: bool = True

    def delta_values(self) -> np.ndarray:
        if self.delta_step_deg <= 0.0:
            raise ConfigError("[esm] delta_step_deg must be > 0")
        n = int(round((self.delta_max_deg - self.delta_min_deg) / self.delta_step_deg))
        if n < 0:
            raise ConfigError("[esm] delta range is empty")
        return np.radians(self.delta_min_deg + np.arange(n + 1) * self.delta_step_deg)

    def lambda_values(self) -> np.ndarray:
        if self.lambda_step <= 0.0:
            raise ConfigError("[esm] lambda_step must be > 0")
        n = int(round((self.lambda_max - self.lambda_min) / self.lambda_step))
        if n < 0:
            raise ConfigError("[esm] lambda range is empty")
        return self.lambda_min + np.arange(n + 1) * self.lambda_step


@dataclass
class InitialState:
    """Frenet-anchored start for `plan` and `lap` runs.

    The heading is derived, not configured: the velocity vector is laid along
    the road tangent, psi = theta(s) - beta.
    """

    s: float = 0.0
    d: float = 0.0
    v: float = 8.0
    beta: float = 0.0
    psidot: float = 0.0


@dataclass
class RunConfig:
    """Everything a command needs, already validated."""

    track_path: Path
    manifold_path: Path
    params_path: Path | None
    vehicle: VehicleParams
    tires: TireParams
    esm: EsmSettings
    planner: PlannerConfig
    mode: str = "lap"
    laps: int = 1
    out_dir: Path = Path("out")
    plots: bool = False
    initial: InitialState = field(default_factory=InitialState)
    max_cycles: int = 4000
    config_hash: str = ""


# Canonical defaults, stored as strings exactly as the default file writes
# them.  [vehicle] a_max doubles as the planner's acceleration envelope; the
# [planner] section deliberately has no a_max key.
_DEFAULTS: dict[str, dict[str, str]] = {
    "paths": {
        "track": "tracks/mixed_circuit.csv",
        "manifold": "out/esm_gravel.txt",
        "params": "",
    },
    "vehicle": {
        "m": "1400.0",
        "j_z": "2000.0",
        "l_f": "1.3",
        "l_r": "1.3",
        "h": "0.4",
        "c_f": "6867.0",
        "c_r": "6867.0",
        "c_x": "6867.0",
        "v_max": "25.0",
        "a_max": "3.0",
        "v_eps": "0.5",
    },
    "tires": {
        "b": "1.5289",
        "c": "1.0901",
        "d": "0.6",
        "e": "-0.95084",
    },
    "esm": {
        "delta_min_deg": "-30.0",
        "delta_max_deg": "30.0",
        "delta_step_deg": "1.0",
        "lambda_min": "0.0",
        "lambda_max": "0.9",
        "lambda_step": "0.02",
        "tol": "1e-8",
        "max_iter": "50",
        "fd_step": "1e-6",
        "r_c_min": "10.0",
        "beta_margin": "0.05",
        "max_edge_beta": "0.06",
        "max_edge_psidot": "0.25",
        "stability_screen": "true",
    },
    "planner": {
        "step_x": "0.5",
        "step_y": "0.5",
        "step_psi_deg": "5.0",
        "step_v": "0.25",
        "step_beta": "0.02",
        "step_psidot": "0.05",
        "t_s": "0.5",
        "n_sub": "20",
        "k_hor": "12",
        "n_timeout": "8000",
        "ring_radii": "0.05, 0.15",
        "ring_counts": "8, 8",
        "include_current": "true",
        "beta_scale": "1.0",
        "psidot_scale": "2.0",
        "use_bicycle": "true",
        "beta_lin": "0.1",
        "psidot_lin": "0.3",
        "delta_lin_max": "0.08",
        "lambda_lin_max": "0.61",
        "n_delta": "3",
        "n_lambda": "5",
        "w_smooth": "0.05",
        "w_edge": "0.5",
        "w_sibling": "0.1",
        "edge_buffer": "1.0",
        "half_width": "0.9",
        "clearance": "0.1",
        "t_rep": "1.0",
        "t_plan": "1.0",
    },
    "run": {
        "mode": "lap",
        "laps": "1",
        "out": "out",
        "plots": "false",
        "initial_s": "0.0",
        "initial_d": "0.0",
        "initial_v": "8.0",
        "initial_beta": "0.0",
        "initial_psidot": "0.0",
        "max_cycles": "4000",
    },
}

# Keys excluded from the provenance hash: where results land and whether
# figures are drawn do not change any computed number.
_UNHASHED = {("run", "out"), ("run", "plots")}


def default_config_dict() -> dict[str, dict[str, str]]:
    """Fresh copy of the canonical defaults."""
    return {sec: dict(kv) for sec, kv in _DEFAULTS.items()}


def write_default_config(path) -> None:
    """Write the canonical config file with all defaults spelled out."""
    lines = ["# driftplan run configuration (all values are the defaults)"]
    for sec, kv in _DEFAULTS.items():
        lines.append("")
        lines.append(f"[{sec}]")
        for key, val in kv.items():
            lines.append(f"{key} = {val}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def config_hash(effective: dict[str, dict[str, str]]) -> str:
    """Short provenance hash over the effective settings."""
    lines = []
    for sec in sorted(effective):
        for key in sorted(effective[sec]):
            if (sec, key) in _UNHASHED:
                continue
            lines.append(f"{sec}.{key}={effective[sec][key]}")
    blob = "\n".join(lines).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _merge(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc

    effective = default_config_dict()
    for sec in parser.sections():
        if sec not in effective:
            raise ConfigError(f"unknown config section [{sec}] in {path}")
        for key, val in parser.items(sec):
            if key not in effective[sec]:
                raise ConfigError(f"unknown key '{key}' in [{sec}] of {path}")
            effective[sec][key] = val.strip()
    return effective


def _get_float(eff, sec, key) -> float:
    raw = eff[sec][key]
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key}: not a number: {raw!r}") from exc


def _get_int(eff, sec, key) -> int:
    raw = eff[sec][key]
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key}: not an integer: {raw!r}") from exc


def _get_bool(eff, sec, key) -> bool:
    raw = eff[sec][key].lower()
    if raw in ("true", "1", "yes", "on"):
        return True
    if raw in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"[{sec}] {key}: not a boolean: {eff[sec][key]!r}")


def _get_tuple(eff, sec, key, conv) -> tuple:
    raw = eff[sec][key]
    try:
        items = tuple(conv(part.strip()) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key}: bad list: {raw!r}") from exc
    if not items:
        raise ConfigError(f"[{sec}] {key}: empty list")
    return items


def _section_floats(eff, sec) -> dict[str, float]:
    return {key: _get_float(eff, sec, key) for key in eff[sec]}


def load_config(path, *, out_override=None, plots_override: bool | None = None) -> RunConfig:
    """Load, validate and freeze a run configuration.

    Paths inside the file are resolved relative to the file's directory.
    Existence of the referenced files is checked by the command that needs
    them, not here (`esm build` writes the manifold it points at).
    """
    path = Path(path)
    eff = _merge(path)
    if out_override is not None:
        eff["run"]["out"] = str(out_override)
    if plots_override is not None:
        eff["run"]["plots"] = "true" if plots_override else "false"

    base = path.parent

    params_raw = eff["paths"]["params"].strip()
    params_path = (base / params_raw) if params_raw else None
    if params_path is not None:
        overlay = configparser.ConfigParser(interpolation=None)
        try:
            with open(params_path, "r", encoding="utf-8") as fh:
                overlay.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read parameter file {params_path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed parameter file {params_path}: {exc}") from exc
        for sec in overlay.sections():
            if sec not in ("vehicle", "tires"):
                raise ConfigError(
                    f"parameter file {params_path} may only contain [vehicle] and "
                    f"[tires], found [{sec}]")
            for key, val in overlay.items(sec):
                if key not in eff[sec]:
                    raise ConfigError(f"unknown key '{key}' in [{sec}] of {params_path}")
                eff[sec][key] = val.strip()

    try:
        vehicle = VehicleParams(**_section_floats(eff, "vehicle"))
        tires = TireParams(**_section_floats(eff, "tires"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    esm = EsmSettings(
        delta_min_deg=_get_float(eff, "esm", "delta_min_deg"),
        delta_max_deg=_get_float(eff, "esm", "delta_max_deg"),
        delta_step_deg=_get_float(eff, "esm", "delta_step_deg"),
        lambda_min=_get_float(eff, "esm", "lambda_min"),
        lambda_max=_get_float(eff, "esm", "lambda_max"),
        lambda_step=_get_float(eff, "esm", "lambda_step"),
        tol=_get_float(eff, "esm", "tol"),
        max_iter=_get_int(eff, "esm", "max_iter"),
        fd_step=_get_float(eff, "esm", "fd_step"),
        r_c_min=_get_float(eff, "esm", "r_c_min"),
        beta_margin=_get_float(eff, "esm", "beta_margin"),
        max_edge_beta=_get_float(eff, "esm", "max_edge_beta"),
        max_edge_psidot=_get_float(eff, "esm", "max_edge_psidot"),
        stability_screen=_get_bool(eff, "esm", "stability_screen"),
    )

    try:
        planner = PlannerConfig(
            step_x=_get_float(eff, "planner", "step_x"),
            step_y=_get_float(eff, "planner", "step_y"),
            step_psi=math.radians(_get_float(eff, "planner", "step_psi_deg")),
            step_v=_get_float(eff, "planner", "step_v"),
            step_beta=_get_float(eff, "planner", "step_beta"),
            step_psidot=_get_float(eff, "planner", "step_psidot"),
            t_s=_get_float(eff, "planner", "t_s"),
            n_sub=_get_int(eff, "planner", "n_sub"),
            k_hor=_get_int(eff, "planner", "k_hor"),
            n_timeout=_get_int(eff, "planner", "n_timeout"),
            ring_radii=_get_tuple(eff, "planner", "ring_radii", float),
            ring_counts=_get_tuple(eff, "planner", "ring_counts", int),
            include_current=_get_bool(eff, "planner", "include_current"),
            beta_scale=_get_float(eff, "planner", "beta_scale"),
            psidot_scale=_get_float(eff, "planner", "psidot_scale"),
            use_bicycle=_get_bool(eff, "planner", "use_bicycle"),
            beta_lin=_get_float(eff, "planner", "beta_lin"),
            psidot_lin=_get_float(eff, "planner", "psidot_lin"),
            delta_lin_max=_get_float(eff, "planner", "delta_lin_max"),
            lambda_lin_max=_get_float(eff, "planner", "lambda_lin_max"),
            n_delta=_get_int(eff, "planner", "n_delta"),
            n_lambda=_get_int(eff, "planner", "n_lambda"),
            a_max=vehicle.a_max,
            w_smooth=_get_float(eff, "planner", "w_smooth"),
            w_edge=_get_float(eff, "planner", "w_edge"),
            w_sibling=_get_float(eff, "planner", "w_sibling"),
            edge_buffer=_get_float(eff, "planner", "edge_buffer"),
            half_width=_get_float(eff, "planner", "half_width"),
            clearance=_get_float(eff, "planner", "clearance"),
            t_rep=_get_float(eff, "planner", "t_rep"),
            t_plan=_get_float(eff, "planner", "t_plan"),
        )
    except ValueError as exc:
        raise ConfigError(f"[planner] {exc}") from exc

    mode = eff["run"]["mode"].strip().lower()
    if mode not in ("plan", "lap"):
        raise ConfigError(f"[run] mode must be 'plan' or 'lap', got {mode!r}")
    laps = _get_int(eff, "run", "laps")
    if laps < 0:
        raise ConfigError("[run] laps must be >= 0")
    max_cycles = _get_int(eff, "run", "max_cycles")
    if max_cycles <= 0:
        raise ConfigError("[run] max_cycles must be > 0")
    initial = InitialState(
        s=_get_float(eff, "run", "initial_s"),
        d=_get_float(eff, "run", "initial_d"),
        v=_get_float(eff, "run", "initial_v"),
        beta=_get_float(eff, "run", "initial_beta"),
        psidot=_get_float(eff, "run", "initial_psidot"),
    )
    if initial.v <= vehicle.v_eps:
        raise ConfigError("[run] initial_v must exceed the low-speed guard v_eps")

    return RunConfig(
        track_path=base / eff["paths"]["track"],
        manifold_path=base / eff["paths"]["manifold"],
        params_path=params_path,
        vehicle=vehicle,
        tires=tires,
        esm=esm,
        planner=planner,
        mode=mode,
        laps=laps,
        out_dir=Path(eff["run"]["out"]),
        plots=_get_bool(eff, "run", "plots"),
        initial=initial,
        max_cycles=max_cycles,
        config_hash=config_hash(eff),
    )
