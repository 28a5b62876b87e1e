"""End-to-end mitigability benchmark: calibrate, build, measure, extrapolate."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import calibration as cal
from .device import DeviceModel, noiseless_model, reference_model
from .extrapolation import (
    ExtrapolationError,
    NoisePoint,
    convergence_series,
    estimator_error,
    richardson_estimate,
)
from .files import IngestResult, parse_calibration_data
from .fitting import FitError
from .programs import (
    DEFAULT_SHOTS,
    DEFAULT_CYCLES,
    DEFAULT_STRETCH,
    ExperimentSpec,
    build_program_suite,
    noise_factor,
)
from .qubit_sim import IntegrationError, MeasurementRecord, program_population, run_experiment
from .report import ConvergenceRow, MBlock, MeasurementRow, MitigabilityReport, clean

CONFIG_VERSION = 1
DEFAULT_LINEARITY_THRESHOLD = 3.0
PRESETS = {
    "reference": reference_model,
    "default": DeviceModel,
    "noiseless": noiseless_model,
}


class BenchmarkError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class SuiteConfig:
    cycles: List[int] = field(default_factory=lambda: list(DEFAULT_CYCLES))
    stretch: List[float] = field(default_factory=lambda: list(DEFAULT_STRETCH))
    base_period: float = 10.0
    shots: int = DEFAULT_SHOTS


@dataclass
class CalibrationConfig:
    # "simulate": run a simulated campaign on the device model
    # "file": fit data_file; "model": load a calibrated model from model_file
    # "none": treat the device model as perfectly calibrated
    source: str = "simulate"
    data_file: Optional[str] = None
    model_file: Optional[str] = None
    shots: int = 4096
    periods: List[float] = field(default_factory=lambda: list(cal.DEFAULT_CAL_PERIODS))
    decay_cycles: List[int] = field(default_factory=lambda: list(cal.DEFAULT_DECAY_CYCLES))
    t1_times: Optional[List[float]] = None
    # which model the noise factors come from: "calibrated" or "ground_truth"
    noise_factors: str = "calibrated"


@dataclass
class ExtrapolationConfig:
    weighted: bool = True
    linearity_threshold: float = DEFAULT_LINEARITY_THRESHOLD
    richardson: bool = True


@dataclass
class OutputConfig:
    dir: str = "bench-out"
    formats: List[str] = field(default_factory=lambda: ["json", "csv"])


@dataclass
class BenchConfig:
    device: DeviceModel = field(default_factory=reference_model)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    suite: SuiteConfig = field(default_factory=SuiteConfig)
    extrapolation: ExtrapolationConfig = field(default_factory=ExtrapolationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    workers: int = 1
    version: int = CONFIG_VERSION

    def __post_init__(self) -> None:
        if self.calibration.source not in ("simulate", "file", "model", "none"):
            raise ValueError(f"unknown calibration source {self.calibration.source!r}")
        if self.calibration.noise_factors not in ("calibrated", "ground_truth"):
            raise ValueError("calibration.noise_factors must be 'calibrated' or 'ground_truth'")
        if self.calibration.source == "file" and not self.calibration.data_file:
            raise ValueError("calibration.source 'file' needs calibration.data_file")
        if self.calibration.source == "model" and not self.calibration.model_file:
            raise ValueError("calibration.source 'model' needs calibration.model_file")
        if not self.suite.cycles or not self.suite.stretch:
            raise ValueError("suite needs at least one cycle count and one stretch factor")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["device"] = self.device.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        data = dict(data)
        version = data.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {version!r}")
        sections = {"calibration": CalibrationConfig, "suite": SuiteConfig,
                    "extrapolation": ExtrapolationConfig, "output": OutputConfig}
        kwargs = {}
        for name, typ in sections.items():
            sec = data.pop(name, {}) or {}
            unknown = set(sec) - set(typ.__dataclass_fields__)
            if unknown:
                raise ValueError(f"unknown keys in {name}: {sorted(unknown)}")
            kwargs[name] = typ(**sec)
        kwargs["device"] = device_from_dict(data.pop("device", {}) or {})
        for key in ("seed", "workers"):
            if key in data:
                kwargs[key] = int(data.pop(key))
        if data:
            raise ValueError(f"unknown config keys: {sorted(data)}")
        return cls(**kwargs)


def device_from_dict(d: dict) -> DeviceModel:
    """Device section: an optional ``preset`` name plus field overrides."""
    d = dict(d)
    preset = d.pop("preset", "reference")
    if preset not in PRESETS:
        raise ValueError(f"unknown device preset {preset!r}; choose from {sorted(PRESETS)}")
    unknown = set(d) - set(DeviceModel.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown device keys: {sorted(unknown)}")
    if d.get("t1", 0) is None:
        d["t1"] = math.inf
    return PRESETS[preset](**d)


def load_config(path) -> BenchConfig:
    return BenchConfig.from_dict(json.loads(Path(path).read_text()))


def _stage_seeds(seed: int):
    calib, suite = np.random.SeedSequence(seed).generate_state(2)
    return int(calib), int(suite)


def run_calibration(config: BenchConfig) -> Optional[cal.Calibration]:
    """Calibration stage; ``None`` when the source is ``"none"`` or ``"model"``."""
    cc = config.calibration
    truth = config.device
    try:
        if cc.source == "simulate":
            data = cal.simulate_calibration_data(
                truth, seed=_stage_seeds(config.seed)[0], shots=cc.shots, periods=cc.periods,
                t1_times=cc.t1_times, decay_cycles=cc.decay_cycles,
            )
            return cal.calibrate(data, truth)
        if cc.source == "file":
            doc = json.loads(Path(cc.data_file).read_text())
            data, readout = parse_calibration_data(doc, truth)
            return cal.calibrate(data, readout)
    except (FitError, ValueError, IntegrationError, OSError) as exc:
        raise BenchmarkError("calibration", str(exc)) from exc
    return None


def calibrated_model(config: BenchConfig, calibration: Optional[cal.Calibration]) -> DeviceModel:
    if calibration is not None:
        return calibration.model
    if config.calibration.source == "model":
        try:
            doc = json.loads(Path(config.calibration.model_file).read_text())
            return DeviceModel.from_dict(doc.get("model", doc))
        except (OSError, ValueError, TypeError) as exc:
            raise BenchmarkError("calibration", f"cannot load calibrated model: {exc}") from exc
    return config.device


def build_suite(config: BenchConfig, model: DeviceModel) -> List[ExperimentSpec]:
    sc = config.suite
    try:
        return build_program_suite(sc.cycles, sc.stretch, sc.base_period, model,
                                   sc.shots, _stage_seeds(config.seed)[1])
    except ValueError as exc:
        raise BenchmarkError("suite", str(exc)) from exc


def simulate_suite(model: DeviceModel, suite: Sequence[ExperimentSpec], workers: int = 1) -> List[MeasurementRecord]:
    """Run every spec on ``model``; results keep the suite's order."""
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(lambda s: run_experiment(model, s), suite))
        return [run_experiment(model, s) for s in suite]
    except (IntegrationError, ValueError) as exc:
        raise BenchmarkError("measure", str(exc)) from exc


def ideal_value(truth: DeviceModel, spec: ExperimentSpec) -> float:
    """Readout phase of ``spec``'s logical program on a noise-free copy of ``truth``."""
    clean_model = truth.with_(t1=math.inf, kappa0=0.0, kappa1=0.0)
    p1 = program_population(clean_model, spec.cycles, spec.period, spec.amplitude)
    return truth.theta0 + p1 * truth.theta_span


def _block(m: int, specs: List[ExperimentSpec], records: List[Optional[MeasurementRecord]],
           factor_model: DeviceModel, ideal: float, span: float, ex: ExtrapolationConfig) -> MBlock:
    eps = [noise_factor(s.cycles, s.period, factor_model) for s in specs]
    span2 = span * span
    rows, points, notes = [], [], []
    for s, e, r in zip(specs, eps, records):
        if r is None:
            continue
        var = None if r.variance_of_mean is None else r.variance_of_mean * span2
        rows.append(MeasurementRow(
            label=s.label, M=s.cycles, c=s.stretch, period=s.period, amplitude=s.amplitude,
            epsilon=clean(e), mean=r.mean_theta, stderr=None if var is None else clean(math.sqrt(var)),
            mean_p1=r.mean_p1, shots=r.shots,
        ))
        points.append((e, r.mean_theta, var))
    block = MBlock(M=m, ideal=ideal, noise_factors=[clean(e) for e in eps], measurements=rows, notes=notes)
    if not points:
        block.error = "no measurements"
        return block

    if any(not e > 0 for e, _, _ in points):
        # zero noise factors cannot be extrapolated; read the least-stretched program directly
        notes.append("noise factors are zero; reporting the direct measurement")
        delta = abs(ideal - points[0][1])
        block.final_delta, block.final_delta_norm = delta, delta / span
        return block
    if len(points) < 2:
        delta = abs(ideal - points[0][1])
        block.final_delta, block.final_delta_norm = delta, delta / span
        notes.append("single noise level; no extrapolation")
        return block

    nps = [NoisePoint(e, y, v) for e, y, v in points]
    try:
        series = convergence_series(nps, weighted=ex.weighted)
    except ExtrapolationError as exc:
        block.error = f"extrapolation failed: {exc}"
        return block
    for d, res in enumerate(series, start=2):
        delta = estimator_error(ideal, res)
        block.convergence.append(ConvergenceRow(
            D=d, estimate=res.estimate, stderr=clean(res.stderr), delta=delta, delta_norm=delta / span,
        ))
    full = series[-1]
    block.slope = clean(full.slope)
    block.reduced_chi2 = clean(full.chi2_red)
    if block.reduced_chi2 is not None:
        block.nonlinear = block.reduced_chi2 > ex.linearity_threshold
    block.final_delta = full.error
    block.final_delta_norm = full.error / span
    notes.extend(full.notes)
    if ex.richardson:
        try:
            rich = richardson_estimate(nps)
            rdelta = estimator_error(ideal, rich)
            block.richardson = {
                "order": rich.n_points, "estimate": clean(rich.estimate), "stderr": clean(rich.stderr),
                "amplification": clean(rich.amplification), "delta": clean(rdelta),
                "delta_norm": clean(rdelta / span),
            }
        except ExtrapolationError as exc:
            notes.append(f"richardson skipped: {exc}")
    return block


def run_benchmark(config: BenchConfig, results: Optional[IngestResult] = None,
                  calibration: Optional[cal.Calibration] = None) -> MitigabilityReport:
    """Execute the full protocol and assemble a :class:`MitigabilityReport`.

    Args:
        config: benchmark configuration.
        results: externally measured records; when omitted the suite is
            simulated on ``config.device``.
        calibration: a precomputed calibration to reuse instead of running
            the calibration stage.

    Raises:
        BenchmarkError: tagged with the failing stage. Extrapolation failures
            for individual M are recorded in the report instead.
    """
    truth = config.device
    if calibration is None:
        calibration = run_calibration(config)
    programmed = calibrated_model(config, calibration)
    factor_model = programmed if config.calibration.noise_factors == "calibrated" else truth
    suite = build_suite(config, programmed)

    diagnostics = {"unknown_labels": [], "missing_labels": []}
    if results is None:
        records = simulate_suite(truth, suite, config.workers)
    else:
        by_label = {r.label: r for r in results.records}
        records = [by_label.get(s.label) for s in suite]
        diagnostics = {"unknown_labels": list(results.unknown_labels),
                       "missing_labels": list(results.missing_labels)}

    span = abs(truth.theta_span)
    blocks = []
    for m in dict.fromkeys(config.suite.cycles):
        idx = [i for i, s in enumerate(suite) if s.cycles == m]
        specs = [suite[i] for i in idx]
        recs = [records[i] for i in idx]
        if results is not None and results.ideal_theta is not None:
            ideal = results.ideal_theta
        else:
            base = min(specs, key=lambda s: s.stretch)
            try:
                ideal = ideal_value(truth, base)
            except (IntegrationError, ValueError) as exc:
                raise BenchmarkError("ideal", str(exc)) from exc
        try:
            blocks.append(_block(m, specs, recs, factor_model, ideal, span, config.extrapolation))
        except ValueError as exc:
            raise BenchmarkError("extrapolate", f"M={m}: {exc}") from exc

    return MitigabilityReport(
        blocks=blocks,
        theta_span=span,
        model=truth.to_dict(),
        factor_model=factor_model.to_dict(),
        factor_source=config.calibration.noise_factors if calibration is not None or
        config.calibration.source == "model" else "ground_truth",
        calibration=None if calibration is None else calibration.to_dict(),
        config=config.to_dict(),
        diagnostics=diagnostics,
    )
