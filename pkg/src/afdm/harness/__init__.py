"""Reproducible Monte Carlo sweeps, result files and the command line."""

from .config import (ConfigError, Csi, ExperimentConfig, ProfileSource, SnrGrid, Waveform,
                     config_from_dict, dump_config, load_config)
from .io import CSV_HEADER, emit_csv, emit_plot, format_csv, parse_csv, read_csv
from .sweep import SweepResult, SweepRow, check_config, run_ber_sweep, run_nmse_sweep

__all__ = [
    "CSV_HEADER", "ConfigError", "Csi", "ExperimentConfig", "ProfileSource", "SnrGrid",
    "SweepResult", "SweepRow", "Waveform", "check_config", "config_from_dict", "dump_config",
    "emit_csv", "emit_plot", "format_csv", "load_config", "parse_csv", "read_csv",
    "run_ber_sweep", "run_nmse_sweep",
]
