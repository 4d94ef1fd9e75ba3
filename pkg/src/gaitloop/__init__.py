"""Closed-loop metronome cueing for gait: estimation, modelling, cue selection and simulation."""

from . import cue_engine, gait_estimation, mogp, slc_model, walker_sim
from .errors import GaitloopError

__version__ = "0.1.0"

__all__ = ["GaitloopError", "cue_engine", "gait_estimation", "mogp", "slc_model", "walker_sim", "__version__"]
