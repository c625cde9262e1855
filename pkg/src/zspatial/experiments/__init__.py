"""Config-driven scenario runners and the command line interface."""

from .config import ConfigError, ExperimentConfig, PRESETS, parse_config_text
from .results import COLUMNS, ResultRow, read_csv, write_csv

__all__ = ["COLUMNS", "ConfigError", "ExperimentConfig", "PRESETS", "ResultRow", "parse_config_text",
           "read_csv", "write_csv"]
