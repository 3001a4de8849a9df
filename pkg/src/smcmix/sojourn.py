"""Gamma sojourn-time density and weighted (penalized) estimation.

The penalized fit maximizes

    sum_i w_i * ln f(x_i; a, lambda)  -  c * (a + ln a)

over shape ``a`` and rate ``lambda``.  The penalty is free of ``lambda``,
so the rate is profiled out exactly (``lambda = a * sum(w) / sum(w x)``)
and the problem reduces to a one-dimensional search in ``a``.  Shrinking
``a`` prevents the unbounded spikes that weighted gamma likelihoods
develop when a weighted sample degenerates toward equal durations.

The sojourn family sits behind this small density/fit interface so that a
discrete-time family (e.g. negative binomial) could be added later without
touching the EM driver; only the gamma family ships.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, polygamma, psi

from .core import GammaParams
from .errors import DegenerateSample, NonConvergence

# Search bracket for the shape parameter and tolerance on the profile
# objective's derivative at the returned point.
SHAPE_MIN = 1e-3
SHAPE_MAX = 1e4
DERIV_TOL = 1e-8

_MAX_NEWTON_ITER = 200


@dataclass(frozen=True, eq=False)
class WeightedSample:
    """Positive durations with nonnegative weights (responsibilities)."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        if values.ndim != 1 or weights.ndim != 1 or values.shape != weights.shape:
            raise ValueError("values and weights must be 1-D and of equal length")
        if not np.all(values > 0.0):
            raise ValueError("durations must be strictly positive")
        if not np.all(weights >= 0.0):
            raise ValueError("weights must be nonnegative")
        if float(weights.sum()) <= 0.0:
            raise ValueError("total weight must be positive")


def gamma_log_density(t: float, p: GammaParams) -> float:
    """Log density of a gamma distribution with shape ``p.shape`` and rate
    ``p.rate`` evaluated at ``t > 0``."""
    if t <= 0.0:
        raise ValueError("gamma log-density is only defined for t > 0")
    a, lam = p.shape, p.rate
    return (a - 1.0) * math.log(t) + a * math.log(lam) - lam * t - float(gammaln(a))


def _moments(sample: WeightedSample) -> tuple[float, float]:
    w, x = sample.weights, sample.values
    sw = float(w.sum())
    mean = float(np.dot(w, x)) / sw
    var = float(np.dot(w, (x - mean) ** 2)) / sw
    return mean, var


def fit_gamma_mom(sample: WeightedSample) -> GammaParams:
    """Method-of-moments fit: shape = mean^2/var, rate = mean/var.

    Raises :class:`DegenerateSample` when the weighted variance vanishes
    (all effective durations equal); callers fall back to a pooled fit.
    """
    mean, var = _moments(sample)
    if var <= 1e-12 * mean * mean:
        raise DegenerateSample("weighted variance is zero; no moment fit exists")
    rate = mean / var
    shape = rate * mean  # keeps shape/rate == mean to rounding
    return GammaParams(shape=shape, rate=rate)


def _suff_stats(sample: WeightedSample) -> tuple[float, float, float, int]:
    w, x = sample.weights, sample.values
    sw = float(w.sum())
    swx = float(np.dot(w, x))
    swlog = float(np.dot(w, np.log(x)))
    n_pos = int(np.count_nonzero(w > 0.0))
    return sw, swlog, swx, n_pos


def _profile_objective(a: float, sw: float, swlog: float, swx: float, c: float) -> float:
    lam = a * sw / swx
    value = (a - 1.0) * swlog + a * sw * math.log(lam) - a * sw - sw * float(gammaln(a))
    if c > 0.0:
        value -= c * (a + math.log(a))
    return value


def _profile_deriv(a: float, sw: float, s: float, c: float) -> float:
    return sw * (math.log(a) - float(psi(a)) - s) - c * (1.0 + 1.0 / a)


def _profile_deriv2(a: float, sw: float, c: float) -> float:
    return sw * (1.0 / a - float(polygamma(1, a))) + c / (a * a)


def _solve_shape(sw: float, swlog: float, swx: float, c: float) -> float:
    """Root of the profile objective's derivative via safeguarded Newton."""
    s = math.log(swx / sw) - swlog / sw
    if s <= 1e-12:
        if c == 0.0:
            raise DegenerateSample(
                "sample variance is numerically zero; the unpenalized "
                "likelihood has no maximizer"
            )
        s = max(s, 0.0)

    lo, hi = SHAPE_MIN, SHAPE_MAX
    f_lo = _profile_deriv(lo, sw, s, c)
    f_hi = _profile_deriv(hi, sw, s, c)
    if f_lo <= 0.0 or f_hi >= 0.0:
        raise NonConvergence(
            f"shape search bracket [{SHAPE_MIN:g}, {SHAPE_MAX:g}] exhausted"
        )

    # Classical closed-form starting point; exact for the unweighted MLE
    # up to the log-gamma expansion it is derived from.
    if s > 0.0:
        a = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    else:
        a = hi / 2.0
    a = min(max(a, lo * 1.0001), hi * 0.9999)

    for _ in range(_MAX_NEWTON_ITER):
        f = _profile_deriv(a, sw, s, c)
        if abs(f) <= DERIV_TOL:
            return a
        if f > 0.0:
            lo = a
        else:
            hi = a
        fp = _profile_deriv2(a, sw, c)
        a_new = a - f / fp if fp < 0.0 else math.nan
        a = a_new if (np.isfinite(a_new) and lo < a_new < hi) else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            break
    f = _profile_deriv(a, sw, s, c)
    if abs(f) <= DERIV_TOL:
        return a
    raise NonConvergence("shape search failed to meet the derivative tolerance")


def _pmle_from_stats(sw: float, swlog: float, swx: float, penalty_c: float) -> GammaParams:
    shape = _solve_shape(sw, swlog, swx, penalty_c)
    rate = shape * sw / swx
    return GammaParams(shape=shape, rate=rate)


def fit_gamma_pmle(sample: WeightedSample, penalty_c: float) -> GammaParams:
    """Weighted penalized maximum-likelihood gamma fit.

    ``penalty_c`` is the penalty weight (zero gives the plain weighted MLE;
    the EM driver passes ``1/sqrt(total visited-state count)``).  The
    returned shape satisfies ``|d objective / d shape| <= 1e-8`` and the
    rate is the exact profile maximizer given the shape.
    """
    if penalty_c < 0.0:
        raise ValueError("penalty_c must be nonnegative")
    sw, swlog, swx, n_pos = _suff_stats(sample)
    if n_pos < 2:
        raise DegenerateSample("need at least two positive-weight observations")
    return _pmle_from_stats(sw, swlog, swx, penalty_c)
