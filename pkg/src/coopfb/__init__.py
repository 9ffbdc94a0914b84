"""Link-level simulator and closed-form analysis toolkit for FDD multiuser
MIMO limited feedback with pairwise user cooperation."""

from .model import (
    ChannelMatrix,
    ConfigError,
    GlobalCodebook,
    LocalCodebook,
    RandomStream,
    SystemConfig,
    derive_trial_rng,
)
from .montecarlo import ExperimentResult, TrialRecord, run_experiment, run_sweep, run_trial

__version__ = "0.1.0"

__all__ = [
    "ChannelMatrix",
    "ConfigError",
    "ExperimentResult",
    "GlobalCodebook",
    "LocalCodebook",
    "RandomStream",
    "SystemConfig",
    "TrialRecord",
    "derive_trial_rng",
    "run_experiment",
    "run_sweep",
    "run_trial",
    "__version__",
]
