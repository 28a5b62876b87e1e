"""Mitigability report structure and its JSON/CSV renderings."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence

REPORT_VERSION = 1
MEASUREMENT_COLUMNS = ("M", "c", "label", "period", "amplitude", "epsilon", "mean", "stderr", "mean_p1", "shots")
CONVERGENCE_COLUMNS = ("M", "D", "estimate", "stderr", "delta", "delta_norm")


def clean(x):
    """NaN/inf become None so reports compare equal after a JSON round trip."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class MeasurementRow:
    label: str
    M: int
    c: float
    period: float
    amplitude: float
    epsilon: Optional[float]
    mean: float
    stderr: Optional[float]
    mean_p1: float
    shots: int


@dataclass
class ConvergenceRow:
    D: int
    estimate: float
    stderr: Optional[float]
    delta: float
    delta_norm: float


@dataclass
class MBlock:
    M: int
    ideal: Optional[float]
    noise_factors: List[Optional[float]]
    measurements: List[MeasurementRow]
    convergence: List[ConvergenceRow] = field(default_factory=list)
    slope: Optional[float] = None
    reduced_chi2: Optional[float] = None
    nonlinear: Optional[bool] = None
    final_delta: Optional[float] = None
    final_delta_norm: Optional[float] = None
    richardson: Optional[dict] = None
    error: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "MBlock":
        d = dict(d)
        d["measurements"] = [MeasurementRow(**m) for m in d["measurements"]]
        d["convergence"] = [ConvergenceRow(**r) for r in d["convergence"]]
        return cls(**d)


@dataclass
class MitigabilityReport:
    """Per-M convergence blocks plus model and calibration provenance."""

    blocks: List[MBlock]
    theta_span: float
    model: dict
    factor_model: dict
    factor_source: str
    calibration: Optional[dict] = None
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    version: int = REPORT_VERSION

    def block(self, m: int) -> MBlock:
        for b in self.blocks:
            if b.M == m:
                return b
        raise KeyError(m)

    def scores(self) -> dict:
        """Normalized estimator error at full dataset size, keyed by M."""
        return {b.M: b.final_delta_norm for b in self.blocks}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MitigabilityReport":
        d = dict(d)
        d["blocks"] = [MBlock.from_dict(b) for b in d["blocks"]]
        allowed = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in allowed})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def load_report(path) -> MitigabilityReport:
    return MitigabilityReport.from_dict(json.loads(Path(path).read_text()))


def measurement_rows(report: MitigabilityReport) -> List[dict]:
    return [asdict(m) for b in report.blocks for m in b.measurements]


def convergence_rows(report: MitigabilityReport) -> List[dict]:
    return [{"M": b.M, **asdict(r)} for b in report.blocks for r in b.convergence]


def _write_csv(path: Path, columns: Sequence[str], rows: List[dict]) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return path


def render_report(report: MitigabilityReport, out_dir, formats: Sequence[str] = ("json", "csv")) -> List[Path]:
    """Write ``report.json`` and/or ``measurements.csv`` + ``convergence.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "json":
            path = out / "report.json"
            path.write_text(report.to_json())
            written.append(path)
        elif fmt == "csv":
            written.append(_write_csv(out / "measurements.csv", MEASUREMENT_COLUMNS, measurement_rows(report)))
            written.append(_write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, convergence_rows(report)))
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return written
