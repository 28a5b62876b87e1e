"""Driven single-qubit dynamics with amplitude-dependent relaxation.

The rotating-frame Hamiltonian is ``H = omega * sigma_x + detuning * sigma_z``
where ``omega`` is the Rabi frequency the device produces for a given drive
amplitude. Dissipation is amplitude damping toward the ground state at rate
``gamma`` (longitudinal ``gamma``, transverse ``gamma / 2``), written as Bloch
equations with ``z = +1`` for ``|0>``:

    dx/dt = -2*detuning*y - gamma/2 * x
    dy/dt =  2*detuning*x - 2*omega*z - gamma/2 * y
    dz/dt =  2*omega*y + gamma * (1 - z)

The excited population is ``P1 = (1 - z) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .device import DeviceModel, rabi_frequency, total_rate

STEPS_PER_PERIOD = 800
STEPS_PER_DECAY_TIME = 50


class IntegrationError(RuntimeError):
    """Raised when the integrator produces non-finite values."""


@dataclass(frozen=True)
class DriveSpec:
    """A square drive pulse.

    Args:
        amplitude: control amplitude (mapped to a Rabi frequency by the device).
        duration: pulse length in dt.
        detuning: drive-qubit detuning in rad/dt; ``None`` uses the model's.
        noise_scale: multiplier on all dissipative rates.
    """

    amplitude: float
    duration: float
    detuning: Optional[float] = None
    noise_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")


@dataclass(frozen=True)
class BlochState:
    x: float = 0.0
    y: float = 0.0
    z: float = 1.0

    def __post_init__(self) -> None:
        if self.x * self.x + self.y * self.y + self.z * self.z > 1.0 + 1e-9:
            raise ValueError("Bloch vector norm exceeds 1")

    @classmethod
    def ground(cls) -> "BlochState":
        return cls(0.0, 0.0, 1.0)

    @classmethod
    def excited(cls) -> "BlochState":
        return cls(0.0, 0.0, -1.0)

    @property
    def p1(self) -> float:
        return 0.5 * (1.0 - self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), 3)
    final: BlochState
    step: float

    @property
    def p1(self) -> np.ndarray:
        return 0.5 * (1.0 - self.states[:, 2])


@dataclass
class MeasurementRecord:
    """Shot-averaged readout of one program.

    ``variance_of_mean`` is in population units; multiply by
    ``theta_span**2`` for readout-phase units.
    """

    mean_p1: float
    mean_theta: float
    variance_of_mean: Optional[float]
    shots: int
    label: str = ""
    cycles: Optional[int] = None
    stretch: Optional[float] = None
    period: Optional[float] = None
    amplitude: Optional[float] = None
    seed: Optional[int] = None
    exact_p1: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean_p1 <= 1.0:
            raise ValueError(f"mean_p1 must lie in [0, 1], got {self.mean_p1}")
        if self.variance_of_mean is not None and self.variance_of_mean < 0:
            raise ValueError("variance_of_mean must be >= 0")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")


def rabi_population(gamma_drive: float, detuning: float, t: float) -> float:
    """Excited-state population ``G^2/(G^2+D^2) * sin^2(w t)``, ``w = sqrt(G^2+D^2)``."""
    w2 = gamma_drive * gamma_drive + detuning * detuning
    if w2 == 0.0:
        return 0.0
    return gamma_drive * gamma_drive / w2 * math.sin(math.sqrt(w2) * t) ** 2


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _generator(omega: float, detuning: float, gamma: float) -> np.ndarray:
    """Homogeneous 4x4 generator of the affine Bloch equations."""
    return np.array([
        [-0.5 * gamma, -2.0 * detuning, 0.0, 0.0],
        [2.0 * detuning, -0.5 * gamma, -2.0 * omega, 0.0],
        [0.0, 2.0 * omega, -gamma, gamma],
        [0.0, 0.0, 0.0, 0.0],
    ])


def _rk4_propagator(gen: np.ndarray, h: float) -> np.ndarray:
    # the right-hand side is linear, so one RK4 step is a fixed matrix
    rhs = lambda v: gen @ v
    return np.column_stack([rk4_step(rhs, col, h) for col in np.eye(4)])


def dissipation_rate(model: DeviceModel, drive: DriveSpec) -> float:
    """Relaxation rate felt during ``drive``.

    The drive-induced part ``kappa0 + kappa1 * amplitude`` exists only while
    the drive is on; an undriven qubit relaxes at the bare ``1/T1``.
    """
    base = total_rate(model, drive.amplitude) if drive.amplitude > 0 else model.bare_rate
    return drive.noise_scale * base


def default_step(model: DeviceModel, drive: DriveSpec) -> float:
    """Largest step used when the caller does not choose one."""
    omega = rabi_frequency(model, drive.amplitude) if drive.amplitude > 0 else 0.0
    det = model.detuning if drive.detuning is None else drive.detuning
    gamma = dissipation_rate(model, drive)
    candidates = []
    w = math.hypot(omega, det)
    if w > 0:
        candidates.append(2.0 * math.pi / w / STEPS_PER_PERIOD)
    if gamma > 0:
        candidates.append(1.0 / (gamma * STEPS_PER_DECAY_TIME))
    if not candidates:
        return max(drive.duration, 1.0)
    return min(candidates)


def evolve(
    model: DeviceModel,
    drive: DriveSpec,
    initial: BlochState = BlochState(),
    times: Optional[Sequence[float]] = None,
    step: Optional[float] = None,
) -> Trajectory:
    """Integrate the Bloch equations with fixed-step RK4.

    The step is shrunk so the pulse duration is an integer number of steps.
    Sample times that fall between grid points are reached with one partial
    RK4 step from the preceding grid point.

    Args:
        model: device parameters (Rabi frequency map and relaxation rates).
        drive: pulse amplitude, duration and noise scale.
        initial: starting Bloch vector.
        times: sample times in ``[0, drive.duration]``; defaults to the end
            point only.
        step: maximum integration step in dt.

    Raises:
        IntegrationError: if the state becomes non-finite.
    """
    duration = drive.duration
    sample_times = np.array([duration] if times is None else times, dtype=float)
    if sample_times.size and (sample_times.min() < 0 or sample_times.max() > duration * (1 + 1e-12)):
        raise ValueError("sample times must lie in [0, duration]")
    h_max = default_step(model, drive) if step is None else float(step)
    if not h_max > 0:
        raise ValueError("step must be > 0")
    n_total = max(1, math.ceil(duration / h_max - 1e-9)) if duration > 0 else 1
    h = duration / n_total if duration > 0 else h_max

    omega = rabi_frequency(model, drive.amplitude) if drive.amplitude > 0 else 0.0
    det = model.detuning if drive.detuning is None else drive.detuning
    gamma = dissipation_rate(model, drive)
    gen = _generator(omega, det, gamma)
    prop = _rk4_propagator(gen, h)

    def state_at(t: float, cache: dict) -> np.ndarray:
        n = int(math.floor(t / h + 1e-9))
        n = min(n, n_total)
        rem = t - n * h
        if n != cache["n"]:
            cache["v"] = np.linalg.matrix_power(prop, n - cache["n"]) @ cache["v"]
            cache["n"] = n
        v = cache["v"]
        if rem > 1e-12 * max(h, 1.0):
            v = _rk4_propagator(gen, rem) @ v
        return v

    v0 = np.append(initial.as_array(), 1.0)
    order = np.argsort(sample_times, kind="stable")
    states = np.empty((sample_times.size, 3))
    cache = {"n": 0, "v": v0}
    # overflow is reported below as an IntegrationError
    with np.errstate(over="ignore", invalid="ignore"):
        for idx in order:
            states[idx] = state_at(sample_times[idx], cache)[:3]
        final_v = state_at(duration, cache)[:3]

    if not (np.all(np.isfinite(states)) and np.all(np.isfinite(final_v))):
        raise IntegrationError(
            f"non-finite state (step={h}, duration={duration}, omega={omega}, gamma={gamma})"
        )
    final = BlochState(*_clip_norm(final_v))
    return Trajectory(times=sample_times, states=states, final=final, step=h)


def _clip_norm(v: np.ndarray) -> np.ndarray:
    # guards against roundoff pushing |r| a few ulps past 1
    n = float(np.linalg.norm(v))
    return v / n if n > 1.0 else v


def sample_shots(p1: float, shots: int, seed: int, model: DeviceModel, **meta) -> MeasurementRecord:
    """Draw ``shots`` single-shot outcomes with excited probability ``p1``.

    The outcome count is drawn from the binomial distribution, which is the
    exact law of the sum of independent Bernoulli trials.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if not -1e-9 <= p1 <= 1.0 + 1e-9:
        raise ValueError(f"p1 must lie in [0, 1], got {p1}")
    p = min(1.0, max(0.0, p1))
    rng = np.random.default_rng(seed)
    k = int(rng.binomial(shots, p))
    mean = k / shots
    sample_var = k * (shots - k) / (shots * (shots - 1)) if shots > 1 else 0.0
    return MeasurementRecord(
        mean_p1=mean,
        mean_theta=model.theta0 + mean * model.theta_span,
        variance_of_mean=sample_var / shots,
        shots=shots,
        seed=seed,
        **meta,
    )


def peak_time(cycles: int, period: float) -> float:
    """Population maximum closest to the end of an ``cycles``-cycle program."""
    return cycles * period - 0.25 * period


def program_population(model: DeviceModel, cycles: int, period: float, amplitude: float,
                       noise_scale: float = 1.0, step: Optional[float] = None) -> float:
    """Noise-free (pre-sampling) excited population read out at the final peak."""
    drive = DriveSpec(amplitude=amplitude, duration=cycles * period, noise_scale=noise_scale)
    traj = evolve(model, drive, BlochState.ground(), times=[peak_time(cycles, period)], step=step)
    return float(traj.p1[0])


def run_experiment(model: DeviceModel, spec, step: Optional[float] = None) -> MeasurementRecord:
    """Simulate one stretched Rabi program and sample its readout.

    ``spec`` is an :class:`~mitibench.programs.ExperimentSpec`. The pulse runs
    for ``M * tau`` at the programmed amplitude; the device's own power law
    sets the actual Rabi frequency, so a miscalibrated program drifts off the
    scheduled peak.
    """
    p1 = program_population(model, spec.cycles, spec.period, spec.amplitude, step=step)
    return sample_shots(
        p1, spec.shots, spec.seed, model,
        label=spec.label, cycles=spec.cycles, stretch=spec.stretch,
        period=spec.period, amplitude=spec.amplitude, exact_p1=p1,
    )
