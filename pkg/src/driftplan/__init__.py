"""driftplan: steady-state drift equilibria and hybrid A* planning on loose surfaces."""

from . import errors
from .vehicle import (
    G,
    AxleForces,
    ControlInput,
    DynamicState,
    FullState,
    Pose,
    SlipState,
    TireParams,
    VehicleParams,
    axle_forces,
    bicycle_derivatives,
    bicycle_forces,
    full_model_derivatives,
    integrate_kinematics,
    mf_friction,
    normal_loads,
    rollout_bicycle,
    rollout_full,
    slip_angles,
    theoretical_slips,
    wrap_angle,
)
from .esm import (
    EquilibriumPoint,
    Manifold,
    ManifoldPair,
    SweepResult,
    build_manifold,
    load_manifold,
    save_manifold,
    solve_equilibrium,
    sweep_inputs,
)
from .track import (
    FrenetPose,
    Track,
    circle_track,
    load_track,
    mixed_circuit,
    save_track,
    straight_track,
    uturn_track,
)
from .planner import (
    Node,
    PlannerConfig,
    ReplanLog,
    SearchStats,
    enumerate_exhaustive,
    progress_upper_bound,
    replan_loop,
    search,
)
from .config import (
    EsmSettings,
    InitialState,
    RunConfig,
    config_hash,
    load_config,
    write_default_config,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "G",
    "AxleForces",
    "ControlInput",
    "DynamicState",
    "FullState",
    "Pose",
    "SlipState",
    "TireParams",
    "VehicleParams",
    "axle_forces",
    "bicycle_derivatives",
    "bicycle_forces",
    "full_model_derivatives",
    "integrate_kinematics",
    "mf_friction",
    "normal_loads",
    "rollout_bicycle",
    "rollout_full",
    "slip_angles",
    "theoretical_slips",
    "wrap_angle",
    "EquilibriumPoint",
    "Manifold",
    "ManifoldPair",
    "SweepResult",
    "build_manifold",
    "load_manifold",
    "save_manifold",
    "solve_equilibrium",
    "sweep_inputs",
    "FrenetPose",
    "Track",
    "circle_track",
    "load_track",
    "mixed_circuit",
    "save_track",
    "straight_track",
    "uturn_track",
    "Node",
    "PlannerConfig",
    "ReplanLog",
    "SearchStats",
    "enumerate_exhaustive",
    "progress_upper_bound",
    "replan_loop",
    "search",
    "EsmSettings",
    "InitialState",
    "RunConfig",
    "config_hash",
    "load_config",
    "write_default_config",
]
