"""Frame-level mmWave scheduling simulator for a high-speed train served by
terrestrial base stations, a relay airship and a LEO satellite."""

from .engine import RunResult, SweepGrid, run, sweep
from .errors import (BoundsError, ParameterError, SaginError, ScenarioError, SchedulerError,
                     VerificationError)
from .scenario import ScenarioConfig, default_scenario, generate_flows, load_scenario
from .scheduler import ALGORITHMS, FrameInputs, FrameResult, Route, verify_schedule

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "BoundsError", "FrameInputs", "FrameResult", "ParameterError", "Route", "RunResult",
    "SaginError", "ScenarioConfig", "ScenarioError", "SchedulerError", "SweepGrid", "VerificationError",
    "default_scenario", "generate_flows", "load_scenario", "run", "sweep", "verify_schedule",
]
