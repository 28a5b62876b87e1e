"""Zero-noise extrapolation benchmark built on stretched Rabi programs."""

from .device import DeviceModel, noiseless_model, reference_model
from .extrapolation import (
    ExtrapolationError,
    ExtrapolationResult,
    NoisePoint,
    convergence_series,
    linear_extrapolate,
    richardson_estimate,
    richardson_weights,
    richardson_weights_exact,
    variance_amplification,
)
from .harness import BenchConfig, BenchmarkError, load_config, run_benchmark
from .programs import ExperimentSpec, build_program_suite, noise_factor
from .qubit_sim import DriveSpec, MeasurementRecord, evolve, run_experiment
from .report import MitigabilityReport, render_report

__version__ = "0.1.0"

__all__ = [
    "BenchConfig",
    "BenchmarkError",
    "DeviceModel",
    "DriveSpec",
    "ExperimentSpec",
    "ExtrapolationError",
    "ExtrapolationResult",
    "MeasurementRecord",
    "MitigabilityReport",
    "NoisePoint",
    "build_program_suite",
    "convergence_series",
    "evolve",
    "linear_extrapolate",
    "load_config",
    "noise_factor",
    "noiseless_model",
    "reference_model",
    "render_report",
    "richardson_estimate",
    "richardson_weights",
    "richardson_weights_exact",
    "run_benchmark",
    "run_experiment",
    "variance_amplification",
]
