"""Normal-family quantiles and the Kolmogorov-Smirnov distance."""

from __future__ import annotations

import math
from statistics import NormalDist
from typing import Callable

import numpy as np
from scipy.special import ndtr

_SQRT2 = math.sqrt(2.0)
_STD = NormalDist()


def normal_cdf(x):
    """Standard normal CDF; vectorized, accurate in both tails."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    return ndtr(np.asarray(x, dtype=float))


def normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def normal_quantile(p: float) -> float:
    """Inverse of :func:`normal_cdf` on (0, 1).

    Starts from Wichura's AS 241 approximation and takes one Newton step on
    the CDF, evaluated in whichever tail keeps full relative precision.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly inside (0, 1), got {p!r}")
    x = _STD.inv_cdf(p)
    if p < 0.5:
        resid = 0.5 * math.erfc(-x / _SQRT2) - p
    else:
        resid = (1.0 - p) - 0.5 * math.erfc(x / _SQRT2)
    dens = normal_pdf(x)
    if dens > 0.0:
        x -= resid / dens
    return x


def half_normal_quantile(p: float) -> float:
    """Quantile of ``|N(0, 1)|``."""
    return normal_quantile(0.5 * (1.0 + p))


def chi2_1_quantile(p: float) -> float:
    """Quantile of the chi-square law with one degree of freedom."""
    return half_normal_quantile(p) ** 2


def half_normal_cdf(x):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return 2.0 * normal_cdf(x) - 1.0


def chi2_1_cdf(x):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return half_normal_cdf(np.sqrt(x))


def ks_distance(sample, reference_cdf: Callable) -> float:
    """Sup-distance between the empirical CDF of ``sample`` and ``reference_cdf``.

    ``sample`` must be sorted ascending. Both one-sided limits of the step
    function are compared at every sample point.
    """
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("sample must be a nonempty 1-d array")
    if np.any(np.diff(x) < 0):
        raise ValueError("sample must be sorted")
    m = x.size
    f = np.asarray(reference_cdf(x), dtype=float)
    upper = np.arange(1, m + 1) / m - f
    lower = f - np.arange(m) / m
    return float(max(upper.max(), lower.max()))


def qq_pairs(sample, quantile: Callable[[float], float], levels: int = 199):
    """Empirical vs reference quantiles at ``levels`` evenly spaced probabilities."""
    probs = np.arange(1, levels + 1) / (levels + 1)
    emp = np.quantile(np.asarray(sample, dtype=float), probs)
    ref = np.array([quantile(p) for p in probs])
    return probs, emp, ref
