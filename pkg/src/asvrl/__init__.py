"""Model-reference RL tracking control with collision avoidance for a
3-DOF autonomous surface vehicle."""

__version__ = "0.1.0"

from .baseline import BacksteppingGains, baseline_control
from .dynamics import (HydroParams, ReferenceState, VehicleState,
                       dynamics_matrices, nominal_derivative, rotation_matrix,
                       true_derivative, unmodeled_forces)
from .environment import (Obstacle, RewardWeights, TrackingEnv,
                          closest_approach, collision_reward, tracking_reward)
from .sac import SacConfig, Trainer, make_trainer, train
from .scenarios import ScenarioProfile, build_scenario

__all__ = [
    "BacksteppingGains", "HydroParams", "Obstacle", "ReferenceState",
    "RewardWeights", "SacConfig", "ScenarioProfile", "TrackingEnv", "Trainer",
    "VehicleState", "baseline_control", "build_scenario", "closest_approach",
    "collision_reward", "dynamics_matrices", "make_trainer",
    "nominal_derivative", "rotation_matrix", "tracking_reward", "train",
    "true_derivative", "unmodeled_forces",
]
