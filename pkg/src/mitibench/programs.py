"""Stretched Rabi program suites, noise factors and schedule files."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .device import DEFAULT_BASE_PERIOD, DEFAULT_DT_SECONDS, DeviceModel, period_to_amplitude, total_rate

SCHEDULE_VERSION = 1
DEFAULT_CYCLES = (5, 20, 40, 80, 160)
DEFAULT_STRETCH = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5)
DEFAULT_SHOTS = 1024


@dataclass(frozen=True)
class ExperimentSpec:
    """One logical program: ``cycles`` Rabi cycles at period ``stretch * base_period``."""

    label: str
    cycles: int
    stretch: float
    base_period: float
    period: float
    amplitude: float
    shots: int = DEFAULT_SHOTS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if self.stretch < 1:
            raise ValueError("stretch factor must be >= 1")
        if not self.base_period > 0:
            raise ValueError("base period must be > 0")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be > 0")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")

    @property
    def duration(self) -> float:
        return self.cycles * self.period


def spec_label(cycles: int, stretch: float) -> str:
    return f"M{cycles}_c{stretch:g}"


def build_program_suite(
    cycles: Sequence[int] = DEFAULT_CYCLES,
    stretch: Sequence[float] = DEFAULT_STRETCH,
    base_period: float = DEFAULT_BASE_PERIOD,
    model: Optional[DeviceModel] = None,
    shots: int = DEFAULT_SHOTS,
    seed: int = 0,
) -> List[ExperimentSpec]:
    """Every (M, c) combination, ordered by M then c.

    Amplitudes come from inverting ``model``'s power law at ``c * base_period``.
    Each spec gets an independent seed derived from ``seed`` and its index.

    Raises:
        ValueError: duplicate or sub-unity stretch factors, or ``base_period <= 0``.
    """
    model = model or DeviceModel()
    stretch = [float(c) for c in stretch]
    if len(set(stretch)) != len(stretch):
        raise ValueError("stretch factors must be distinct")
    if any(c < 1 for c in stretch):
        raise ValueError("stretch factors must be >= 1")
    if not base_period > 0:
        raise ValueError("base period must be > 0")
    n = len(cycles) * len(stretch)
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(n)] if n else []
    suite = []
    for m in cycles:
        for c in stretch:
            period = c * base_period
            suite.append(ExperimentSpec(
                label=spec_label(int(m), c), cycles=int(m), stretch=c,
                base_period=float(base_period), period=period,
                amplitude=period_to_amplitude(model, period),
                shots=int(shots), seed=seeds[len(suite)],
            ))
    return suite


def noise_factor(cycles: int, period: float, model: DeviceModel) -> float:
    """Integrated error ``M * tau * (1/T1 + gamma(amplitude(tau)))`` of a program."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    if not period > 0:
        raise ValueError("period must be > 0")
    return cycles * period * total_rate(model, period_to_amplitude(model, period))


# -- schedule files ----------------------------------------------------------

def schedule_document(suite: Sequence[ExperimentSpec], dt_seconds: float = DEFAULT_DT_SECONDS) -> dict:
    return {
        "version": SCHEDULE_VERSION,
        "dt_seconds": dt_seconds,
        "programs": [
            {
                "label": s.label,
                "M": s.cycles,
                "c": s.stretch,
                "base_period_dt": s.base_period,
                "period_dt": s.period,
                "amplitude": s.amplitude,
                "duration_dt": s.duration,
                "shots": s.shots,
                "seed": s.seed,
            }
            for s in suite
        ],
    }


def export_schedules(suite: Sequence[ExperimentSpec], path, dt_seconds: float = DEFAULT_DT_SECONDS) -> Path:
    """Write ``suite`` as a schedule JSON file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(schedule_document(suite, dt_seconds), indent=2) + "\n")
    return path


def suite_from_document(doc: dict) -> Tuple[List[ExperimentSpec], float]:
    if doc.get("version") != SCHEDULE_VERSION:
        raise ValueError(f"unsupported schedule version {doc.get('version')!r}")
    suite = []
    for i, p in enumerate(doc.get("programs", [])):
        try:
            suite.append(ExperimentSpec(
                label=p["label"], cycles=int(p["M"]), stretch=float(p["c"]),
                base_period=float(p.get("base_period_dt", p["period_dt"] / p["c"])),
                period=float(p["period_dt"]), amplitude=float(p["amplitude"]),
                shots=int(p["shots"]), seed=int(p.get("seed", 0)),
            ))
        except KeyError as exc:
            raise ValueError(f"programs[{i}]: missing field {exc.args[0]!r}") from exc
    return suite, float(doc.get("dt_seconds", DEFAULT_DT_SECONDS))


def import_schedules(path) -> Tuple[List[ExperimentSpec], float]:
    """Read a schedule file back into specs and ``dt_seconds``."""
    return suite_from_document(json.loads(Path(path).read_text()))


def spec_dict(spec: ExperimentSpec) -> dict:
    return asdict(spec)
