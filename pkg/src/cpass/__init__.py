"""Center-fed pinching-antenna system: channel model, analysis and beamforming optimizer."""

from .channel import ArchKind, Layout, PinchingState, SystemConfig, build_layout, place_users
from .wmmse import BeamformerState, OptimizationError, SolveReport, optimize, sum_rate

__version__ = "0.1.0"

__all__ = [
    "ArchKind",
    "BeamformerState",
    "Layout",
    "OptimizationError",
    "PinchingState",
    "SolveReport",
    "SystemConfig",
    "build_layout",
    "optimize",
    "place_users",
    "sum_rate",
]
