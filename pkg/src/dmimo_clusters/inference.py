"""Distribution fitting and the censored estimator for complete VR length.

Observed visibility-region lengths are window-censored: regions touching an
edge of the panel array (or the UE route) extend beyond it, and regions
spanning the whole window are censored on both sides. Modeling the complete
length as exponential with mean ``lambda_y``, the estimator maximizes a
likelihood whose per-region terms depend on the censoring class:

* interior regions contribute the exponential density at the observed length,
* one-sided censored regions contribute the survival probability,
* full-span regions contribute the overshoot-weighted tail integral,

and a normalization term accounts for where regions of a given length can
sit while still being observable (overlap of at least ``delta0``, the
minimum resolvable region length). With ``n0 = |c11| - |c00|``,
``gamma = sum(L_v - delta0)`` and ``n`` observations, the stationarity
condition of the profiled log-likelihood

    J(a) = n0*ln(a) - gamma/a - n*ln(L - delta0 + a)

is the quadratic ``(n - n0)*a^2 - B*a - C = 0`` with
``B = n0*(L - delta0) + gamma`` and ``C = gamma*(L - delta0)``; the closed
form returns its positive root. A bracketed numeric maximization of J runs
alongside and the relative difference is reported as a residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .visibility import CENSOR_BOTH, CENSOR_END, CENSOR_NONE, CENSOR_START, VrObservation


@dataclass(frozen=True)
class ShiftedPoissonFit:
    """1-shift Poisson fit for counts that are always >= 1.

    The reported pmf is the properly normalized Po(n-1; lam):
    lam^(n-1) * exp(-lam) / (n-1)!.
    """

    lam: float
    sample_size: int
    log_likelihood: float


def fit_shifted_poisson(counts: Sequence[int]) -> ShiftedPoissonFit:
    arr = np.asarray(counts, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no counts to fit")
    if np.any(arr < 1):
        raise ValueError("shifted-Poisson counts must all be >= 1")
    lam = float(arr.mean() - 1.0)
    shifted = arr - 1.0
    if lam > 0:
        loglik = float(np.sum(shifted * math.log(lam) - lam
                              - np.array([math.lgamma(k + 1.0) for k in shifted])))
    else:
        loglik = 0.0 if np.all(shifted == 0) else float("-inf")
    return ShiftedPoissonFit(lam=lam, sample_size=int(arr.size), log_likelihood=loglik)


@dataclass(frozen=True)
class ExponentialFit:
    lam: float            # mean parameter, meters
    sample_size: int


def fit_exponential(lengths: Sequence[float]) -> ExponentialFit:
    """Maximum-likelihood exponential mean (the sample mean)."""
    arr = np.asarray(lengths, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no lengths to fit")
    if np.any(arr < 0):
        raise ValueError("lengths must be non-negative")
    return ExponentialFit(lam=float(arr.mean()), sample_size=int(arr.size))


@dataclass(frozen=True)
class LogNormalFit:
    mu: float
    sigma: float
    sample_size: int


def fit_lognormal(samples: Sequence[float]) -> LogNormalFit:
    """Mean and standard deviation of the log-domain samples."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no samples to fit")
    if np.any(arr <= 0):
        raise ValueError("log-normal samples must be positive")
    logs = np.log(arr)
    return LogNormalFit(
        mu=float(logs.mean()),
        sigma=float(np.sqrt(np.mean((logs - logs.mean()) ** 2))),
        sample_size=int(arr.size),
    )


@dataclass
class CensoredMleResult:
    lambda_y: float               # estimated mean complete VR length, meters
    n0: int                       # |c11| - |c00|
    gamma: float                  # sum of (L_v - delta0)
    n_observations: int
    window: float                 # L, meters
    delta0: float
    residual: float               # |closed form - numeric| / numeric
    degenerate: bool = False
    method: str = "closed_form"
    class_counts: Dict[str, int] = field(default_factory=dict)


def _profiled_loglik(a: float, n0: float, gamma: float, n: int, window: float,
                     delta0: float) -> float:
    if a <= 0:
        return float("-inf")
    return n0 * math.log(a) - gamma / a - n * math.log(window - delta0 + a)


def _numeric_maximizer(n0: float, gamma: float, n: int, window: float, delta0: float,
                       hint: Optional[float] = None) -> float:
    hi = 1e4 * max(window, 1.0)
    if hint is not None and math.isfinite(hint):
        hi = max(hi, 10.0 * hint)
    res = minimize_scalar(
        lambda a: -_profiled_loglik(a, n0, gamma, n, window, delta0),
        bounds=(1e-9, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x)


def censored_vr_mle(vrs: Sequence[VrObservation], window: float, delta0: float
                    ) -> CensoredMleResult:
    """Estimate the mean complete VR length from censored observed lengths.

    `window` is the span between the first and last index position (meters);
    `delta0` the minimum complete/observable VR length. When every
    observation spans the full window the likelihood has no interior
    maximum, so the closed form degenerates and the bounded numeric
    maximizer is returned with a diagnostic flag.
    """
    if not vrs:
        raise ValueError("no VR observations")
    if not window > delta0 >= 0:
        raise ValueError(f"need window > delta0 >= 0, got window={window}, delta0={delta0}")
    counts = {CENSOR_NONE: 0, CENSOR_END: 0, CENSOR_START: 0, CENSOR_BOTH: 0}
    for vr in vrs:
        if vr.censor_class not in counts:
            raise ValueError(f"unknown censor class {vr.censor_class!r}")
        counts[vr.censor_class] += 1
    n = len(vrs)
    n0 = counts[CENSOR_BOTH] - counts[CENSOR_NONE]
    gamma = float(sum(vr.length - delta0 for vr in vrs))
    span = window - delta0

    m = n - n0
    closed = float("nan")
    if m > 0:
        b = n0 * span + gamma
        c = gamma * span
        disc = b * b + 4.0 * m * c
        if disc >= 0.0:
            closed = (b + math.sqrt(disc)) / (2.0 * m)

    numeric = _numeric_maximizer(n0, gamma, n, window, delta0,
                                 hint=closed if math.isfinite(closed) else None)
    if math.isfinite(closed) and closed > 0:
        residual = abs(closed - numeric) / max(abs(numeric), 1e-300)
        return CensoredMleResult(
            lambda_y=closed, n0=n0, gamma=gamma, n_observations=n, window=window,
            delta0=delta0, residual=residual, degenerate=False, method="closed_form",
            class_counts=counts,
        )
    return CensoredMleResult(
        lambda_y=numeric, n0=n0, gamma=gamma, n_observations=n, window=window,
        delta0=delta0, residual=float("nan"), degenerate=True, method="numeric_fallback",
        class_counts=counts,
    )


@dataclass(frozen=True)
class VrRadius:
    side: str
    radius: float


def vr_radius(mean_complete_length: float, side: str = "") -> VrRadius:
    """Radius of the circular-region model whose mean chord equals the input.

    The mean chord of a circle of radius R over parallel chords is
    (pi/2) * R, so R = (2/pi) * E{Y}.
    """
    if mean_complete_length < 0:
        raise ValueError("mean length must be non-negative")
    return VrRadius(side=side, radius=(2.0 / math.pi) * mean_complete_length)
