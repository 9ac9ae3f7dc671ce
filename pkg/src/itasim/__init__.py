"""Discrete-event simulator comparing edge analytics with plain forwarding
for IoT sensor and camera streams."""

from .config import Config, ConfigError, load_config
from .engine import Engine, SchedulingInPast, fmt_seconds, to_us
from .metrics import RunSummary
from .scenarios import run_case_one, run_case_two, run_scaling, simulate

__all__ = [
    "Config", "ConfigError", "load_config", "Engine", "SchedulingInPast", "fmt_seconds",
    "to_us", "RunSummary", "run_case_one", "run_case_two", "run_scaling", "simulate",
]
__version__ = "0.1.0"
