"""Quasi-maximum-likelihood estimation of the discount parameter alpha.

The estimator maximizes the Ewens-Pitman likelihood with ``theta = 0``,
which depends on the data only through ``(k_n, {k_{n,j}})``. Its stationary
condition ``Psi_n(x) = 0`` has a unique root on (0, 1) whenever
``1 < k_n < n`` because ``Psi_n`` is strictly decreasing with limits
``+inf`` at 0 and ``-inf`` at 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

from gplab.errors import BoundaryError, ConfigError, NumericalError
from gplab.partition import SuffStats
from gplab.sibuya import fisher_info, psi_n
from gplab.stats import normal_quantile

ROOT_TOL = 1e-12
MAX_ITER = 200
BRACKET = (1e-12, 1.0 - 1e-12)


class Boundary(enum.Enum):
    INTERIOR = "Interior"
    ALL_ONE_BLOCK = "AllOneBlock"
    ALL_SINGLETONS = "AllSingletons"


@dataclass(frozen=True)
class QmleResult:
    """Estimate of alpha with solver diagnostics.

    ``residual`` is ``|Psi_n(alpha_hat)|`` (zero at a boundary).
    """

    alpha_hat: float
    boundary: Boundary
    iterations: int
    residual: float

    @property
    def interior(self) -> bool:
        return self.boundary is Boundary.INTERIOR

    def to_dict(self) -> dict:
        return {"alpha_hat": self.alpha_hat, "boundary": self.boundary.value,
                "iterations": self.iterations, "residual": self.residual}


class Interval(NamedTuple):
    lower: float
    upper: float
    center: float
    half_width: float


def qmle(stats: SuffStats) -> QmleResult:
    """Root of ``Psi_n`` on (0, 1), or the boundary value when ``k_n in {1, n}``."""
    n, k = stats.n, stats.k_n
    if k == 1:
        return QmleResult(0.0, Boundary.ALL_ONE_BLOCK, 0, 0.0)
    if k == n:
        return QmleResult(1.0, Boundary.ALL_SINGLETONS, 0, 0.0)

    lo, hi = BRACKET
    f_lo, _ = psi_n(lo, stats)
    f_hi, _ = psi_n(hi, stats)
    if not (f_lo > 0.0 > f_hi):
        raise NumericalError(f"score does not change sign on [{lo}, {hi}]")

    x = min(max(naive_estimate(stats), 0.01), 0.99)
    for it in range(1, MAX_ITER + 1):
        f, df = psi_n(x, stats)
        if abs(f) <= ROOT_TOL:
            return QmleResult(x, Boundary.INTERIOR, it, abs(f))
        if f > 0.0:
            lo = x
        else:
            hi = x
        x_new = x - f / df
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        assert lo < x_new < hi, "iterate escaped the bracket"
        if x_new == x:
            break
        x = x_new
    f, _ = psi_n(x, stats)
    if abs(f) <= ROOT_TOL:
        return QmleResult(x, Boundary.INTERIOR, MAX_ITER, abs(f))
    raise NumericalError(f"root solver stalled at x={x!r} with |Psi_n|={abs(f):.3g}")


def naive_estimate(stats: SuffStats) -> float:
    """``log k_n / log n`` (1 when ``n = 1``)."""
    if stats.n == 1:
        return 1.0
    return math.log(stats.k_n) / math.log(stats.n)


def two_sided_quantile(eps: float) -> float:
    """``tau_{1 - eps/2}``, the upper ``eps/2`` standard normal quantile."""
    if not 0.0 < eps < 1.0:
        raise ConfigError(f"eps must lie in (0, 1), got {eps!r}")
    return normal_quantile(1.0 - eps / 2.0)


def ci_alpha(stats: SuffStats, result: QmleResult, eps: float = 0.05) -> Interval:
    """Asymptotic ``1 - eps`` interval ``alpha_hat +- tau / sqrt(k_n i(alpha_hat))``."""
    if not result.interior:
        raise BoundaryError("CI undefined at boundary")
    tau = two_sided_quantile(eps)
    a = result.alpha_hat
    hw = tau / math.sqrt(stats.k_n * fisher_info(a).value)
    return Interval(max(a - hw, 0.0), min(a + hw, 1.0), a, hw)
