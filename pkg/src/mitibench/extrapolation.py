"""Zero-noise extrapolation: Richardson elimination and linear fits.

Richardson weights for scale factors ``a_i`` are the Lagrange basis
polynomials evaluated at zero,

    b_i = prod_{j != i} a_j / (a_j - a_i),

which satisfy ``sum b_i = 1`` and ``sum b_i a_i**k = 0`` for ``k = 1..n-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np

from .fitting import FitError, fit_line

# Above this order the variance cost sum(b_i^2) is usually prohibitive.
HIGH_ORDER = 4


class ExtrapolationError(ValueError):
    """Scale factors or noise levels that cannot be extrapolated."""


@dataclass(frozen=True)
class NoisePoint:
    epsilon: float
    value: float
    variance: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"noise factor must be > 0, got {self.epsilon}")
        if self.variance is not None and self.variance < 0:
            raise ValueError("variance must be >= 0")


@dataclass
class ExtrapolationResult:
    weights: List[float]
    scale_factors: List[float]
    estimate: float
    variance: float
    amplification: float
    method: str
    variance_source: str = "shot-noise"
    slope: Optional[float] = None
    chi2_red: Optional[float] = None
    weighted: bool = False
    error: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance) if self.variance >= 0 else math.nan

    @property
    def n_points(self) -> int:
        return len(self.weights)


def _check_factors(a: Sequence) -> None:
    if len(a) == 0:
        raise ExtrapolationError("need at least one scale factor")
    if any(not x > 0 for x in a):
        raise ExtrapolationError("scale factors must be positive")
    if len(set(a)) != len(a):
        raise ExtrapolationError("scale factors must be distinct (duplicate makes the system singular)")


def richardson_weights(a_factors: Sequence[float]) -> List[float]:
    """Richardson weights for distinct positive scale factors.

    Near-coincident factors give weights of order 1e7 or more, where the
    rounding of the weights alone breaks ``sum(b) == 1`` by ~1e-8. The
    smallest-magnitude weight absorbs that residual, so constant signals are
    reproduced to working precision; the absolute perturbation equals the
    rounding error already carried by the large weights.
    """
    a = [float(x) for x in a_factors]
    _check_factors(a)
    weights = []
    for i, ai in enumerate(a):
        b = 1.0
        for j, aj in enumerate(a):
            if j != i:
                b *= aj / (aj - ai)
        weights.append(b)
    k = min(range(len(weights)), key=lambda i: abs(weights[i]))
    weights[k] = math.fsum([1.0] + [-w for i, w in enumerate(weights) if i != k])
    return weights


def richardson_weights_exact(a_factors: Sequence) -> List[Fraction]:
    """Same as :func:`richardson_weights` in exact rational arithmetic."""
    a = [Fraction(x) for x in a_factors]
    _check_factors(a)
    weights = []
    for i, ai in enumerate(a):
        b = Fraction(1)
        for j, aj in enumerate(a):
            if j != i:
                b *= aj / (aj - ai)
        weights.append(b)
    return weights


def variance_amplification(weights: Sequence[float]) -> float:
    """Sample-count multiplier ``sum(b_i^2)`` needed to keep the variance."""
    if len(weights) == 0:
        raise ValueError("weights must be non-empty")
    return float(sum(w * w for w in weights))


def _variances(points: Sequence[NoisePoint]) -> Optional[np.ndarray]:
    if any(p.variance is None for p in points):
        return None
    return np.array([p.variance for p in points], dtype=float)


def richardson_estimate(points: Sequence[NoisePoint]) -> ExtrapolationResult:
    """Order-``n`` Richardson estimate from ``n`` noise points.

    Scale factors are normalized to the least noisy point. The propagated
    variance is ``sum(b_i^2 * var_i)``; it is NaN when variances are missing.
    """
    if len(points) == 0:
        raise ExtrapolationError("need at least one noise point")
    eps0 = min(p.epsilon for p in points)
    a = [p.epsilon / eps0 for p in points]
    if len({p.epsilon for p in points}) != len(points):
        raise ExtrapolationError("noise factors must be distinct")
    b = richardson_weights(a)
    y = np.array([p.value for p in points])
    est = float(np.dot(b, y))
    var = _variances(points)
    if var is None:
        variance, source = math.nan, "none"
    else:
        variance, source = float(np.dot(np.square(b), var)), "shot-noise"
    res = ExtrapolationResult(
        weights=b, scale_factors=a, estimate=est, variance=variance,
        amplification=variance_amplification(b), method=f"richardson-{len(points)}",
        variance_source=source,
    )
    if len(points) > HIGH_ORDER:
        res.notes.append(f"high-order elimination: variance amplified {res.amplification:.4g}x")
    return res


def linear_extrapolate(points: Sequence[NoisePoint], weighted: bool = True) -> ExtrapolationResult:
    """Least-squares line in the noise factor, evaluated at zero noise.

    Inverse-variance weighting is used when ``weighted`` is set and every
    point carries a positive variance; otherwise the fit is unweighted. The
    intercept is a linear combination ``sum(h_i * y_i)`` of the data with
    ``sum(h_i) = 1``; ``h`` is reported as the weights and the shot-noise
    variance ``sum(h_i^2 * var_i)`` is propagated whenever variances exist.
    Without variances the residual scatter sets the error (NaN for two
    points).

    Raises:
        ExtrapolationError: fewer than two points or all noise factors equal.
    """
    if len(points) < 2:
        raise ExtrapolationError("linear extrapolation needs at least two points")
    eps = np.array([p.epsilon for p in points])
    y = np.array([p.value for p in points])
    var = _variances(points)
    try:
        line = fit_line(eps, y, var if weighted else None)
    except FitError as exc:
        raise ExtrapolationError(str(exc)) from exc
    h = line.influence
    if var is not None:
        variance, source = float(np.dot(h * h, var)), "shot-noise"
    else:
        variance, source = float(line.cov[0, 0]), "residual"
    res = ExtrapolationResult(
        weights=[float(x) for x in h],
        scale_factors=[float(e / eps.min()) for e in eps],
        estimate=line.intercept,
        variance=variance,
        amplification=variance_amplification(h),
        method="linear-lsq",
        variance_source=source,
        slope=line.slope,
        chi2_red=line.chi2_red,
        weighted=line.weighted,
    )
    if weighted and not line.weighted:
        res.notes.append("unweighted fit: a variance was missing or zero")
    return res


def convergence_series(points: Sequence[NoisePoint], weighted: bool = True) -> List[ExtrapolationResult]:
    """Linear extrapolations using the ``D`` least-noisy points, ``D = 2..n``."""
    if len(points) < 2:
        raise ExtrapolationError("need at least two points")
    ordered = sorted(points, key=lambda p: p.epsilon)
    return [linear_extrapolate(ordered[:d], weighted=weighted) for d in range(2, len(ordered) + 1)]


def estimator_error(ideal: float, result: ExtrapolationResult) -> float:
    """``|ideal - estimate|``; also stored on ``result.error``."""
    delta = abs(ideal - result.estimate)
    result.error = delta
    return delta
