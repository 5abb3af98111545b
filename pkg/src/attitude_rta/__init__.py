"""Run-time assurance for spacecraft attitude control.

A barrier-function safety filter (ASIF) wraps a primary attitude controller
and keeps attitude, thermal, power and actuator constraints satisfied.
"""

from .barriers import CONSTRAINT_IDS, barrier_rows, default_bounds
from .controllers import PdConfig, PdController, ZeroController
from .dynamics import FullState, step
from .filter import AsifFilter, FilterConfig, evaluate_safety
from .harness import EpisodeConfig, SampleRanges, run_campaign, run_episode
from .params import SpacecraftParams, Tuning

__version__ = "0.1.0"

__all__ = [
    "AsifFilter",
    "CONSTRAINT_IDS",
    "EpisodeConfig",
    "FilterConfig",
    "FullState",
    "PdConfig",
    "PdController",
    "SampleRanges",
    "SpacecraftParams",
    "Tuning",
    "ZeroController",
    "barrier_rows",
    "default_bounds",
    "evaluate_safety",
    "run_campaign",
    "run_episode",
    "step",
]
