"""Results and calibration-data file formats."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from .calibration import CalibrationData, Series
from .device import DeviceModel
from .programs import ExperimentSpec
from .qubit_sim import MeasurementRecord

RESULTS_VERSION = 1
CALIBRATION_VERSION = 1
OBSERVABLES = ("p1", "theta")


class SchemaError(ValueError):
    """A file does not match its schema; ``field`` names the offending entry."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass
class IngestResult:
    records: List[MeasurementRecord]
    unknown_labels: List[str] = field(default_factory=list)
    missing_labels: List[str] = field(default_factory=list)
    ideal_theta: Optional[float] = None


def results_document(records: Sequence[MeasurementRecord], model: DeviceModel,
                     observable: str = "p1", ideal_theta: Optional[float] = None) -> dict:
    if observable not in OBSERVABLES:
        raise ValueError(f"observable must be one of {OBSERVABLES}")
    span2 = model.theta_span ** 2
    rows = []
    for r in records:
        if observable == "p1":
            mean, var = r.mean_p1, r.variance_of_mean
        else:
            mean = r.mean_theta
            var = None if r.variance_of_mean is None else r.variance_of_mean * span2
        rows.append({"label": r.label, "mean": mean, "variance_of_mean": var, "shots": r.shots})
    doc = {"version": RESULTS_VERSION, "observable": observable, "records": rows}
    if ideal_theta is not None:
        doc["ideal_theta"] = ideal_theta
    return doc


def write_results(records: Sequence[MeasurementRecord], path, model: DeviceModel,
                  observable: str = "p1", ideal_theta: Optional[float] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(results_document(records, model, observable, ideal_theta), indent=2) + "\n")
    return path


def _number(value, where: str, allow_none: bool = False) -> Optional[float]:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(where, f"expected a finite number, got {value!r}")
    return float(value)


def parse_results(doc: dict, suite: Sequence[ExperimentSpec], model: DeviceModel) -> IngestResult:
    """Validate a results document and link its records to ``suite`` by label.

    Records with labels not in the suite are skipped and listed in
    ``unknown_labels``; suite labels without a record go to ``missing_labels``.
    Theta readings are mapped to populations with the model's readout phases
    (clipped to ``[0, 1]``; the raw theta is kept).

    Raises:
        SchemaError: wrong version, bad observable, or an invalid field.
    """
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "expected an object")
    if doc.get("version") != RESULTS_VERSION:
        raise SchemaError("version", f"unsupported results version {doc.get('version')!r}")
    observable = doc.get("observable", "p1")
    if observable not in OBSERVABLES:
        raise SchemaError("observable", f"must be one of {OBSERVABLES}")
    rows = doc.get("records")
    if not isinstance(rows, list):
        raise SchemaError("records", "expected a list")
    by_label = {s.label: s for s in suite}
    span = model.theta_span
    records, unknown, seen = [], [], set()
    for i, row in enumerate(rows):
        where = f"records[{i}]"
        if not isinstance(row, dict):
            raise SchemaError(where, "expected an object")
        label = row.get("label")
        if not isinstance(label, str):
            raise SchemaError(f"{where}.label", "expected a string")
        mean = _number(row.get("mean"), f"{where}.mean")
        var = _number(row.get("variance_of_mean"), f"{where}.variance_of_mean", allow_none=True)
        if var is not None and var < 0:
            raise SchemaError(f"{where}.variance_of_mean", f"must be >= 0, got {var}")
        shots = row.get("shots")
        if isinstance(shots, bool) or not isinstance(shots, int) or shots < 1:
            raise SchemaError(f"{where}.shots", f"expected a positive integer, got {shots!r}")
        if label not in by_label:
            unknown.append(label)
            continue
        if label in seen:
            raise SchemaError(f"{where}.label", f"duplicate label {label!r}")
        seen.add(label)
        if observable == "p1":
            if not 0.0 <= mean <= 1.0:
                raise SchemaError(f"{where}.mean", "population must lie in [0, 1]")
            p1, theta, var_p1 = mean, model.theta0 + mean * span, var
        else:
            p1 = min(1.0, max(0.0, (mean - model.theta0) / span))
            theta, var_p1 = mean, None if var is None else var / span**2
        spec = by_label[label]
        records.append(MeasurementRecord(
            mean_p1=p1, mean_theta=theta, variance_of_mean=var_p1, shots=shots,
            label=label, cycles=spec.cycles, stretch=spec.stretch, period=spec.period,
            amplitude=spec.amplitude, seed=spec.seed,
        ))
    missing = [s.label for s in suite if s.label not in seen]
    ideal = doc.get("ideal_theta")
    if ideal is not None:
        ideal = _number(ideal, "ideal_theta")
    return IngestResult(records=records, unknown_labels=unknown, missing_labels=missing, ideal_theta=ideal)


def ingest_results(path, suite: Sequence[ExperimentSpec], model: DeviceModel) -> IngestResult:
    """Load a results file; see :func:`parse_results`."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"invalid JSON: {exc}") from exc
    return parse_results(doc, suite, model)


# -- calibration data ---------------------------------------------------------

def _series(obj, where: str, observable: str, model: DeviceModel) -> Series:
    if not isinstance(obj, dict):
        raise SchemaError(where, "expected an object")
    try:
        times = [_number(t, f"{where}.times[{i}]") for i, t in enumerate(obj["times"])]
        values = [_number(v, f"{where}.values[{i}]") for i, v in enumerate(obj["values"])]
    except KeyError as exc:
        raise SchemaError(where, f"missing field {exc.args[0]!r}") from exc
    if len(times) != len(values):
        raise SchemaError(where, "times and values differ in length")
    var = obj.get("variances")
    if var is not None:
        var = [_number(v, f"{where}.variances[{i}]") for i, v in enumerate(var)]
        if len(var) != len(values):
            raise SchemaError(f"{where}.variances", "length differs from values")
        if any(v < 0 for v in var):
            raise SchemaError(f"{where}.variances", "variances must be >= 0")
    if observable == "theta":
        span = model.theta_span
        values = [(v - model.theta0) / span for v in values]
        var = None if var is None else [v / span**2 for v in var]
    amp = obj.get("amplitude")
    period = obj.get("period")
    return Series(times=times, values=values, variances=var,
                  amplitude=None if amp is None else _number(amp, f"{where}.amplitude"),
                  period=None if period is None else _number(period, f"{where}.period"))


def calibration_data_document(data: CalibrationData) -> dict:
    return {
        "version": CALIBRATION_VERSION,
        "observable": "p1",
        "rabi": [s.to_dict() for s in data.rabi],
        "relaxation": data.relaxation.to_dict(),
        "decay": [s.to_dict() for s in data.decay],
    }


def parse_calibration_data(doc: dict, model: DeviceModel):
    """Parse a calibration-data document.

    Returns ``(data, readout_model)`` where ``readout_model`` is ``model``
    with readout phases overridden by the document's ``readout`` section.
    """
    if doc.get("version") != CALIBRATION_VERSION:
        raise SchemaError("version", f"unsupported calibration version {doc.get('version')!r}")
    readout = doc.get("readout")
    if readout:
        model = model.with_(theta0=_number(readout["theta0"], "readout.theta0"),
                            theta1=_number(readout["theta1"], "readout.theta1"))
    observable = doc.get("observable", "p1")
    if observable not in OBSERVABLES:
        raise SchemaError("observable", f"must be one of {OBSERVABLES}")
    for key in ("rabi", "relaxation", "decay"):
        if key not in doc:
            raise SchemaError(key, "missing section")
    rabi = [_series(s, f"rabi[{i}]", observable, model) for i, s in enumerate(doc["rabi"])]
    decay = [_series(s, f"decay[{i}]", observable, model) for i, s in enumerate(doc["decay"])]
    for i, s in enumerate(rabi + decay):
        if s.amplitude is None:
            raise SchemaError(f"series {i}", "amplitude is required for Rabi and decay curves")
    relax = _series(doc["relaxation"], "relaxation", observable, model)
    return CalibrationData(rabi=rabi, relaxation=relax, decay=decay), model
