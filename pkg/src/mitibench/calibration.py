"""Recover the device model from Rabi, relaxation and driven-decay data.

Pipeline: fit sinusoids to Rabi oscillations at several amplitudes, fit the
period-vs-amplitude power law, measure the bare T1 from undriven relaxation,
fit the decay envelope of continuous driving at each amplitude, and regress
the drive-dependent part of the decay rate on amplitude.

Driven-envelope rates are *effective* rates. Under amplitude damping and a
strong resonant drive the peak contrast ``2*P1 - 1`` decays at
``(gamma + gamma/2) / 2 = 0.75 * gamma``, so the fitted rates sit at
:data:`ENVELOPE_RATE_RATIO` times the injected Lindblad rate. Noise factors
built from the same fitted rates are rescaled uniformly, which leaves
zero-noise intercepts unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .device import DeviceModel, NATURAL_POWER_A
from .fitting import FitError, FitResult, finish, fit_line, gauss_newton
from .qubit_sim import BlochState, DriveSpec, evolve, peak_time, sample_shots

ENVELOPE_RATE_RATIO = 0.75
# Documented bias bound: the fitted kappa1 lies within this relative band of
# ENVELOPE_RATE_RATIO * kappa1 when the envelope decays over the ladder.
KAPPA1_BIAS_TOLERANCE = 0.10
# Envelope points must clear this many standard errors (and MIN_CONTRAST)
# to enter the log-linear decay fit.
CONTRAST_SIGMAS = 3.0
MIN_CONTRAST = 0.02


# -- fitters -----------------------------------------------------------------

def fit_sinusoid(times: Sequence[float], values: Sequence[float], variances=None) -> FitResult:
    """Fit ``offset + amplitude * sin^2(2*pi*t/period + phase)``.

    The period is initialised from a least-squares periodogram scan and then
    refined by Gauss-Newton.

    Raises:
        ValueError: fewer than 8 points.
        FitError: no oscillation present or the refinement is singular.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 8 or y.size != t.size:
        raise ValueError("fit_sinusoid needs at least 8 points")
    order = np.argsort(t)
    t, y = t[order], y[order]
    sig = None
    if variances is not None:
        var = np.asarray(variances, dtype=float)[order]
        if np.all(var > 0):
            sig = np.sqrt(var)
    span = t[-1] - t[0]
    if span <= 0:
        raise ValueError("times must span a positive interval")
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise FitError("constant series: no oscillation to fit", amplitude=0.0)

    # sin^2(u) = (1 - cos 2u) / 2, scan the angular frequency of cos(2u)
    dt_med = float(np.median(np.diff(t)))
    w_lo = math.pi / span
    w_hi = math.pi / dt_med
    grid = np.arange(w_lo, w_hi, (2 * math.pi / span) / 20.0)
    # batched least squares of y on [1, cos(wt), sin(wt)] for every grid w
    C = np.cos(np.outer(grid, t))
    S = np.sin(np.outer(grid, t))
    sc, ss, scs = C.sum(1), S.sum(1), (C * S).sum(1)
    scc = (C * C).sum(1)
    xtx = np.empty((grid.size, 3, 3))
    xtx[:, 0] = np.column_stack([np.full(grid.size, float(t.size)), sc, ss])
    xtx[:, 1] = np.column_stack([sc, scc, scs])
    xtx[:, 2] = np.column_stack([ss, scs, t.size - scc])
    xty = np.column_stack([np.full(grid.size, y.sum()), C @ y, S @ y])
    ok = np.linalg.cond(xtx) < 1e12
    if not np.any(ok):
        raise FitError("periodogram scan is ill-conditioned")
    coefs = np.zeros((grid.size, 3))
    coefs[ok] = np.linalg.solve(xtx[ok], xty[ok][..., None])[..., 0]
    # at a least-squares solution rss = y.y - coef.X'y
    rss = np.where(ok, float(y @ y) - np.sum(coefs * xty, axis=1), np.inf)
    k = int(np.argmin(rss))
    w, (c0, c1, s1) = grid[k], coefs[k]
    r = math.hypot(c1, s1)
    if r <= 1e-9 * max(1.0, abs(c0)):
        raise FitError("no oscillation detected", amplitude=2 * r)
    psi = math.atan2(s1, c1)
    x0 = np.array([2 * r, 4 * math.pi / w, (-psi - math.pi) / 2, c0 - r])

    def model(p):
        return p[3] + p[0] * np.sin(2 * math.pi * t / p[1] + p[2]) ** 2

    def residual(p):
        res = model(p) - y
        return res / sig if sig is not None else res

    def jacobian(p):
        u = 2 * math.pi * t / p[1] + p[2]
        s2u = np.sin(2 * u)
        J = np.column_stack([
            np.sin(u) ** 2,
            -p[0] * s2u * 2 * math.pi * t / p[1] ** 2,
            p[0] * s2u,
            np.ones_like(t),
        ])
        return J / sig[:, None] if sig is not None else J

    x, J, converged, n_iter = gauss_newton(residual, jacobian, x0)
    amp, period, phase, offset = x
    if amp < 0:
        # -A sin^2(u) = -A + A sin^2(u + pi/2) with A > 0
        amp, phase, offset = -amp, phase + math.pi / 2, offset + amp
    phase = phase % math.pi
    res = finish(["amplitude", "period", "phase", "offset"],
                 np.array([amp, period, phase, offset]), J, residual(x),
                 weighted=sig is not None, converged=converged and period > 0,
                 n_iter=n_iter, rss_raw=float(np.sum((model(x) - y) ** 2)))
    if not period > 0:
        res.message = "non-positive period"
    return res


def fit_power_law(amplitudes: Sequence[float], periods: Sequence[float]) -> FitResult:
    """Fit ``period = a * amplitude**b`` by linear regression in log-log space."""
    g = np.asarray(amplitudes, dtype=float)
    tau = np.asarray(periods, dtype=float)
    if g.size < 3 or tau.size != g.size:
        raise ValueError("fit_power_law needs at least 3 points")
    if np.any(g <= 0) or np.any(tau <= 0):
        raise ValueError("amplitudes and periods must be positive")
    line = fit_line(np.log(g), np.log(tau))
    a = math.exp(line.intercept)
    se = np.sqrt(np.clip(np.diag(line.cov), 0.0, None))
    se = np.where(np.isfinite(se), se, 0.0)
    return FitResult(
        params={"a": a, "b": line.slope},
        stderr={"a": a * float(se[0]), "b": float(se[1])},
        rss=line.rss,
        chi2_red=line.chi2_red,
        converged=True,
    )


def fit_exponential_decay(times: Sequence[float], values: Sequence[float],
                          variances=None, refine: bool = True) -> FitResult:
    """Fit ``amplitude * exp(-rate * t)`` with no offset.

    A (variance-weighted) regression of ``log(value)`` on ``t`` provides the
    starting point; Gauss-Newton on the linear-scale residuals refines it.

    Raises:
        ValueError: fewer than 3 points or a non-positive value.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 3 or y.size != t.size:
        raise ValueError("fit_exponential_decay needs at least 3 points")
    if np.any(y <= 0):
        raise ValueError("decay values must be positive")
    var = None
    if variances is not None:
        v = np.asarray(variances, dtype=float)
        if np.all(v > 0):
            var = v
    log_var = var / y**2 if var is not None else None
    line = fit_line(t, np.log(y), log_var)
    x0 = np.array([math.exp(line.intercept), -line.slope])
    sig = np.sqrt(var) if var is not None else None

    def residual(p):
        res = p[0] * np.exp(-p[1] * t) - y
        return res / sig if sig is not None else res

    def jacobian(p):
        e = np.exp(-p[1] * t)
        J = np.column_stack([e, -p[0] * t * e])
        return J / sig[:, None] if sig is not None else J

    if refine and np.any(np.abs(residual(x0)) > 1e-14 * np.max(np.abs(y))):
        x, J, converged, n_iter = gauss_newton(residual, jacobian, x0)
    else:
        x, J, converged, n_iter = x0, jacobian(x0), True, 0
    res = finish(["amplitude", "rate"], x, J, residual(x), weighted=sig is not None,
                 converged=converged, n_iter=n_iter,
                 rss_raw=float(np.sum((x[0] * np.exp(-x[1] * t) - y) ** 2)))
    return res


def measure_t1(times: Sequence[float], p1: Sequence[float], variances=None) -> FitResult:
    """Bare relaxation time from an undriven decay of ``|1>``.

    A rate at or below zero (no measurable decay) reports ``t1 = inf``.
    """
    fit = fit_exponential_decay(times, p1, variances)
    rate = fit.params["rate"]
    rate_se = fit.stderr["rate"]
    if rate > 0:
        t1, t1_se = 1.0 / rate, rate_se / rate**2
    else:
        t1, t1_se = math.inf, math.inf
    fit.params["t1"] = t1
    fit.stderr["t1"] = t1_se
    if not rate > 0:
        fit.message = "no decay resolved; T1 reported as infinite"
    return fit


def extract_amplitude_noise(amplitudes: Sequence[float], rates: Sequence[float],
                            t1: float, rate_variances=None) -> FitResult:
    """Linear law ``rate - 1/t1 = kappa0 + kappa1 * amplitude``.

    Raises:
        FitError: fewer than two distinct amplitudes.
    """
    g = np.asarray(amplitudes, dtype=float)
    r = np.asarray(rates, dtype=float)
    if g.size != r.size:
        raise ValueError("amplitudes and rates must have equal length")
    if np.unique(g).size < 2:
        raise FitError("need at least two distinct amplitudes", amplitudes=g.tolist())
    bare = 0.0 if math.isinf(t1) else 1.0 / t1
    line = fit_line(g, r - bare, rate_variances)
    se = np.sqrt(np.clip(np.diag(line.cov), 0.0, None))
    se = np.where(np.isfinite(se), se, 0.0)
    return FitResult(
        params={"kappa0": line.intercept, "kappa1": line.slope},
        stderr={"kappa0": float(se[0]), "kappa1": float(se[1])},
        rss=line.rss,
        chi2_red=line.chi2_red,
        converged=True,
    )


# -- calibration data --------------------------------------------------------

@dataclass
class Series:
    """One measured curve in population units."""

    times: List[float]
    values: List[float]
    variances: Optional[List[float]] = None
    amplitude: Optional[float] = None
    period: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class CalibrationData:
    rabi: List[Series]
    relaxation: Series
    decay: List[Series]


@dataclass
class Calibration:
    model: DeviceModel
    power_law: FitResult
    t1: FitResult
    amplitude_noise: FitResult
    periods: List[dict]
    decay_rates: List[dict]
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def finite(rows):
            return [{k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                     for k, v in row.items()} for row in rows]
        return {
            "model": self.model.to_dict(),
            "power_law": self.power_law.to_dict(),
            "t1": self.t1.to_dict(),
            "amplitude_noise": self.amplitude_noise.to_dict(),
            "periods": finite(self.periods),
            "decay_rates": finite(self.decay_rates),
            "notes": list(self.notes),
        }


def envelope_contrast(series: Series):
    """Peak populations to contrast ``2*P1 - 1``, dropping unresolved points."""
    p = np.asarray(series.values, dtype=float)
    t = np.asarray(series.times, dtype=float)
    c = 2.0 * p - 1.0
    if series.variances is None:
        keep = c > MIN_CONTRAST
        return t[keep], c[keep], None
    var = 4.0 * np.asarray(series.variances, dtype=float)
    keep = (c > MIN_CONTRAST) & (c > CONTRAST_SIGMAS * np.sqrt(var))
    return t[keep], c[keep], var[keep]


def calibrate(data: CalibrationData, readout: DeviceModel) -> Calibration:
    """Fit the full device model from calibration curves.

    ``readout`` supplies the fields that are not fitted here (readout phases,
    detuning and ``dt_seconds``).
    """
    notes: List[str] = []
    periods = []
    for s in data.rabi:
        fit = fit_sinusoid(s.times, s.values, s.variances)
        if not fit.converged:
            raise FitError(f"Rabi fit did not converge at amplitude {s.amplitude}")
        periods.append({"amplitude": s.amplitude, "period": fit.params["period"],
                        "period_stderr": fit.stderr["period"]})
    power = fit_power_law([p["amplitude"] for p in periods], [p["period"] for p in periods])

    t1_fit = measure_t1(data.relaxation.times, data.relaxation.values, data.relaxation.variances)
    t1 = t1_fit.params["t1"]
    if t1_fit.message:
        notes.append(t1_fit.message)

    rates = []
    for s in data.decay:
        t, c, var = envelope_contrast(s)
        if t.size < 3:
            notes.append(f"decay at amplitude {s.amplitude}: fewer than 3 resolved peaks, skipped")
            continue
        fit = fit_exponential_decay(t, c, var)
        rates.append({"amplitude": s.amplitude, "rate": fit.params["rate"],
                      "rate_stderr": fit.stderr["rate"], "converged": fit.converged,
                      "points": int(t.size)})
    if len(rates) < 2:
        raise FitError("fewer than two amplitudes produced a decay rate", rates=rates)
    rate_var = [r["rate_stderr"] ** 2 for r in rates]
    noise = extract_amplitude_noise([r["amplitude"] for r in rates],
                                    [r["rate"] for r in rates], t1,
                                    rate_var if all(v > 0 for v in rate_var) else None)
    kappa0 = noise.params["kappa0"]
    kappa1 = noise.params["kappa1"]
    if kappa1 < 0:
        notes.append(f"fitted kappa1={kappa1:.3e} < 0 clamped to 0")
        kappa1 = 0.0
    floor = 0.0 if math.isinf(t1) else -1.0 / t1
    if kappa0 < floor:
        notes.append(f"fitted kappa0={kappa0:.3e} below -1/T1 clamped")
        kappa0 = floor

    model = readout.with_(t1=t1, kappa0=kappa0, kappa1=kappa1,
                          power_a=power.params["a"], power_b=power.params["b"])
    return Calibration(model=model, power_law=power, t1=t1_fit, amplitude_noise=noise,
                       periods=periods, decay_rates=rates, notes=notes)


# -- simulated calibration campaigns -----------------------------------------

def _sample_series(model: DeviceModel, p1s, times, shots: int, seed: int, **extra) -> Series:
    seeds = np.random.SeedSequence(seed).generate_state(len(p1s))
    recs = [sample_shots(float(p), shots, int(s), model) for p, s in zip(p1s, seeds)]
    return Series(times=[float(t) for t in times], values=[r.mean_p1 for r in recs],
                  variances=[r.variance_of_mean for r in recs], **extra)


def simulate_rabi_series(model: DeviceModel, amplitude: float, shots: int, seed: int,
                         n_points: int = 200, n_periods: float = 20.0,
                         nominal_a: float = NATURAL_POWER_A) -> Series:
    """Sampled Rabi oscillation over ``n_periods`` of the nominal ``2*pi/amplitude`` period."""
    guess = nominal_a / amplitude
    times = np.linspace(0.0, n_periods * guess, n_points)
    traj = evolve(model, DriveSpec(amplitude, times[-1]), BlochState.ground(), times=times)
    return _sample_series(model, traj.p1, times, shots, seed, amplitude=amplitude)


def simulate_relaxation(model: DeviceModel, times: Sequence[float], shots: int, seed: int) -> Series:
    """Undriven decay of ``|1>`` sampled at ``times``."""
    times = np.asarray(times, dtype=float)
    traj = evolve(model, DriveSpec(0.0, float(times.max())), BlochState.excited(), times=times)
    return _sample_series(model, traj.p1, times, shots, seed)


def simulate_decay_envelope(model: DeviceModel, amplitude: float, period: float,
                            cycles: Sequence[int], shots: int, seed: int) -> Series:
    """Peak populations of continuous driving after each cycle count."""
    cycles = sorted(int(m) for m in cycles)
    times = np.array([peak_time(m, period) for m in cycles])
    traj = evolve(model, DriveSpec(amplitude, cycles[-1] * period), BlochState.ground(), times=times)
    return _sample_series(model, traj.p1, times, shots, seed, amplitude=amplitude, period=period)


DEFAULT_CAL_PERIODS = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0)
DEFAULT_DECAY_CYCLES = (1, 2, 3, 4, 6, 8, 11, 16, 23, 32, 45, 64, 91, 128, 181, 256, 362, 512)


def simulate_calibration_data(
    model: DeviceModel,
    seed: int,
    shots: int = 4096,
    periods: Sequence[float] = DEFAULT_CAL_PERIODS,
    t1_times: Optional[Sequence[float]] = None,
    decay_cycles: Sequence[int] = DEFAULT_DECAY_CYCLES,
    nominal_a: float = NATURAL_POWER_A,
) -> CalibrationData:
    """Run a simulated calibration campaign on ``model``.

    Amplitudes are chosen from the nominal ``2*pi/tau`` law; decay envelopes
    are scheduled with the periods fitted from the Rabi data, the way a
    hardware campaign would program them.
    """
    ss = np.random.SeedSequence(seed)
    s_rabi, s_t1, s_decay = (int(x) for x in ss.generate_state(3))
    amps = [nominal_a / tau for tau in periods]
    rabi_seeds = np.random.SeedSequence(s_rabi).generate_state(len(amps))
    rabi = [simulate_rabi_series(model, g, shots, int(s), nominal_a=nominal_a)
            for g, s in zip(amps, rabi_seeds)]
    if t1_times is None:
        t1_times = np.linspace(0.0, 2.0 * (model.t1 if math.isfinite(model.t1) else 20000.0), 9)
    relax = simulate_relaxation(model, t1_times, shots, s_t1)
    decay_seeds = np.random.SeedSequence(s_decay).generate_state(len(amps))
    decay = []
    for series, s in zip(rabi, decay_seeds):
        fitted_period = fit_sinusoid(series.times, series.values, series.variances).params["period"]
        decay.append(simulate_decay_envelope(model, series.amplitude, fitted_period,
                                             decay_cycles, shots, int(s)))
    return CalibrationData(rabi=rabi, relaxation=relax, decay=decay)
