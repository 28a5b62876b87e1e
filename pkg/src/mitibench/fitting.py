"""Least-squares primitives shared by calibration and extrapolation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

MAX_ITER = 100
XTOL = 1e-10


class FitError(RuntimeError):
    """A fit could not produce trustworthy parameters.

    ``diagnostics`` carries whatever state was available when it failed.
    """

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class FitResult:
    params: Dict[str, float]
    stderr: Dict[str, float]
    rss: float
    chi2_red: float
    converged: bool
    n_iter: int = 0
    message: str = ""
    extra: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.params[key]

    def to_dict(self) -> dict:
        return {
            "params": {k: _json_float(v) for k, v in self.params.items()},
            "stderr": {k: _json_float(v) for k, v in self.stderr.items()},
            "rss": _json_float(self.rss),
            "chi2_red": _json_float(self.chi2_red),
            "converged": self.converged,
            "n_iter": self.n_iter,
            "message": self.message,
        }


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _weights(variances, n: int) -> Optional[np.ndarray]:
    """Inverse-variance weights, or None when any variance is missing or zero."""
    if variances is None:
        return None
    var = np.asarray(variances, dtype=float)
    if var.shape != (n,):
        raise ValueError("variances must match the data length")
    if np.any(~np.isfinite(var)) or np.any(var <= 0):
        return None
    return 1.0 / var


@dataclass
class LineFit:
    """Result of fitting ``y = intercept + slope * x``.

    ``influence`` holds the coefficients ``h`` with ``intercept = sum(h * y)``;
    they sum to one, so they play the same role as extrapolation weights.
    """

    intercept: float
    slope: float
    cov: np.ndarray
    influence: np.ndarray
    rss: float
    chi2_red: float
    weighted: bool
    residuals: np.ndarray


def fit_line(x: Sequence[float], y: Sequence[float], variances=None) -> LineFit:
    """Weighted (inverse-variance) or ordinary least-squares straight line.

    With usable variances the covariance uses them as absolute errors and
    ``chi2_red`` is the weighted residual sum over ``n - 2``. Without them the
    covariance is scaled by the residual variance and ``chi2_red`` is NaN.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2 or y.size != n:
        raise ValueError("need at least two (x, y) pairs")
    if np.ptp(x) == 0:
        raise FitError("all abscissae are equal; slope is undetermined", x=x.tolist())
    w = _weights(variances, n)
    weighted = w is not None
    if w is None:
        w = np.ones(n)
    X = np.column_stack([np.ones(n), x])
    xtwx = X.T @ (w[:, None] * X)
    try:
        inv = np.linalg.inv(xtwx)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular normal equations", x=x.tolist()) from exc
    hat = inv @ (X.T * w)  # rows give each coefficient as a combination of y
    beta = hat @ y
    resid = y - X @ beta
    rss = float(np.sum(w * resid * resid))
    dof = n - 2
    if weighted:
        cov = inv
        chi2 = rss / dof if dof > 0 else math.nan
    else:
        s2 = rss / dof if dof > 0 else math.nan
        cov = inv * s2
        chi2 = math.nan
    return LineFit(
        intercept=float(beta[0]),
        slope=float(beta[1]),
        cov=cov,
        influence=hat[0],
        rss=float(np.sum(resid * resid)),
        chi2_red=chi2,
        weighted=weighted,
        residuals=resid,
    )


def gauss_newton(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float],
    max_iter: int = MAX_ITER,
    xtol: float = XTOL,
):
    """Minimize ``sum(residual(x)**2)`` by Gauss-Newton with step halving.

    Returns ``(x, J, converged, n_iter)`` where ``J`` is the Jacobian at the
    solution. Convergence means the relative parameter change fell below
    ``xtol``.

    Raises:
        FitError: if the Jacobian is rank deficient.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    f = float(r @ r)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = jacobian(x)
        if np.linalg.matrix_rank(J) < x.size:
            raise FitError("rank-deficient Jacobian", x=x.tolist(), iteration=it)
        dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        alpha = 1.0
        while True:
            x_new = x + alpha * dx
            r_new = residual(x_new)
            f_new = float(r_new @ r_new)
            if np.isfinite(f_new) and f_new <= f:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                x_new, r_new, f_new = x, r, f
                break
        scale = np.maximum(np.abs(x_new), 1e-300)
        rel = float(np.max(np.abs(x_new - x) / scale))
        x, r, f = x_new, r_new, f_new
        if rel < xtol or f == 0.0:
            converged = True
            break
        # a stalled line search at the roundoff floor counts as converged
        if alpha < 1e-12:
            converged = float(np.max(np.abs(dx) / scale)) < 1e-6
            break
    return x, jacobian(x), converged, it


def finish(names, x, J, residuals, weighted: bool, converged: bool, n_iter: int,
           message: str = "", rss_raw: Optional[float] = None) -> FitResult:
    """Package a nonlinear fit: covariance from ``(J^T J)^-1`` and chi-square."""
    n, p = J.shape
    chi = float(residuals @ residuals)
    dof = n - p
    try:
        inv = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        inv = np.full((p, p), math.nan)
    if weighted:
        cov = inv
        chi2 = chi / dof if dof > 0 else math.nan
    else:
        cov = inv * (chi / dof if dof > 0 else 0.0)
        chi2 = math.nan
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        params={k: float(v) for k, v in zip(names, x)},
        stderr={k: float(v) for k, v in zip(names, se)},
        rss=chi if rss_raw is None else rss_raw,
        chi2_red=chi2,
        converged=converged,
        n_iter=n_iter,
        message=message,
    )
