"""Experiment orchestration: configuration, sweeps, threshold calibration, CLI."""

from .config import ExperimentConfig, config_hash, load_config  # noqa: F401
from .sweeps import (  # noqa: F401
    CalibrationTable,
    SweepResult,
    SweepRow,
    calibrate_alpha,
    run_fig2,
    run_fig3,
    run_fig4,
    run_fig5,
)
