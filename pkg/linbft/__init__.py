"""LinBFT consensus replica, partial-synchrony simulator and transmission accounting."""

from .config import ScenarioConfig, load_scenario
from .errors import ConfigInvalid, DegenerateSweep, LinbftError, SafetyViolation
from .reports import RunReport, write_report
from .simnet import Simulator, run_scenario

__all__ = [
    "ConfigInvalid",
    "DegenerateSweep",
    "LinbftError",
    "RunReport",
    "SafetyViolation",
    "ScenarioConfig",
    "Simulator",
    "load_scenario",
    "run_scenario",
    "write_report",
]
