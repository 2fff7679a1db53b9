"""Config-driven experiment runner, plots and command line."""

from .config import SCENARIOS, ExperimentConfig, config_from_dict, validate_config
from .runner import CSV_COLUMNS, ExperimentRecord, execute, loglog_slope, run

__all__ = [
    "CSV_COLUMNS",
    "SCENARIOS",
    "ExperimentConfig",
    "ExperimentRecord",
    "config_from_dict",
    "execute",
    "loglog_slope",
    "run",
    "validate_config",
]
