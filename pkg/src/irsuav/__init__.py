"""Robust joint design of UAV trajectory, IRS passive beamforming, and
ground-node power allocation for uplink rate maximization under a jammer
with imperfect location information."""

from .ao import AoOptions, AoTrace, DesignResult, alternating_optimize, evaluate_design
from .scenario import (
    PhaseSchedule,
    Position3,
    PowerSchedule,
    SystemConfig,
    Trajectory,
    UncertaintyRegion,
    initial_trajectory,
    load_config,
    save_config,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "AoOptions",
    "AoTrace",
    "DesignResult",
    "PhaseSchedule",
    "Position3",
    "PowerSchedule",
    "SystemConfig",
    "Trajectory",
    "UncertaintyRegion",
    "alternating_optimize",
    "evaluate_design",
    "initial_trajectory",
    "load_config",
    "save_config",
    "validate_config",
    "__version__",
]
