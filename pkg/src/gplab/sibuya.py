"""The Sibuya law, its Fisher information, and the score functions of alpha.

The Sibuya pmf ``p_alpha(j) = alpha * prod_{i<j}(i - alpha) / j!`` is the
limiting block-size distribution of a Gibbs partition. Its tail decays like
``j**-(1 + alpha)``, so series against it converge slowly; every infinite sum
here is split into an exact partial sum and an Euler-Maclaurin tail whose
integral is evaluated by quadrature after the substitution ``u = y**-alpha``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import digamma, gammaln, poch, polygamma

from gplab.partition import SuffStats

MAX_TERMS = 10**7
_FIRST_CUT = 1024
_ASYMPTOTIC_FROM = 100.0


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


def _bernoulli_poly(x: float) -> list[float]:
    """``[B_2(x), ..., B_6(x)]``."""
    return [
        x * x - x + 1 / 6,
        x**3 - 1.5 * x * x + 0.5 * x,
        x**4 - 2 * x**3 + x * x - 1 / 30,
        x**5 - 2.5 * x**4 + 5 / 3 * x**3 - x / 6,
        x**6 - 3 * x**5 + 2.5 * x**4 - 0.5 * x * x + 1 / 42,
    ]


def log_gamma_ratio(y, a: float, b: float):
    """``log Gamma(y + a) - log Gamma(y + b)``, stable for very large ``y``.

    Differences of ``gammaln`` lose about ``eps * y log y`` absolute, so small
    arguments use the Pochhammer symbol and large ones the asymptotic series
    in Bernoulli polynomials.
    """
    y = np.asarray(y, dtype=float)
    big = y > _ASYMPTOTIC_FROM
    out = np.empty_like(y)
    small = ~big
    out[small] = np.log(poch(y[small] + b, a - b))
    if np.any(big):
        yb = y[big]
        acc = (a - b) * np.log(yb)
        inv = 1.0 / yb
        pw = inv
        for m, (ba, bb) in enumerate(zip(_bernoulli_poly(a), _bernoulli_poly(b)), start=1):
            acc = acc + (-1) ** (m + 1) * (ba - bb) / (m * (m + 1)) * pw
            pw = pw * inv
        out[big] = acc
    return out if out.ndim else float(out)


def sibuya_log_pmf(alpha: float, j):
    """Log pmf, defined for real ``j >= 1`` through the gamma function."""
    _check_alpha(alpha)
    return (math.log(alpha) - gammaln(1.0 - alpha)
            + log_gamma_ratio(np.asarray(j, dtype=float), -alpha, 1.0))


def sibuya_pmf(alpha: float, j):
    """``alpha * prod_{i=1}^{j-1} (i - alpha) / j!``."""
    j = np.asarray(j)
    if np.any(j < 1):
        raise ValueError("the Sibuya law lives on j >= 1")
    return np.exp(sibuya_log_pmf(alpha, j))


def sibuya_pmf_table(alpha: float, jmax: int) -> np.ndarray:
    """``[p(1), ..., p(jmax)]`` by the recurrence ``p(j+1) = p(j) (j - alpha) / (j + 1)``."""
    _check_alpha(alpha)
    j = np.arange(1, jmax, dtype=float)
    ratios = np.concatenate(([alpha], (j - alpha) / (j + 1)))
    return np.cumprod(ratios)


def sibuya_survival(alpha: float, j):
    """``P(J > j) = prod_{i=1}^{j} (1 - alpha / i)``; decreasing in real ``j >= 0``."""
    _check_alpha(alpha)
    j = np.asarray(j, dtype=float)
    return np.exp(log_gamma_ratio(j, 1.0 - alpha, 1.0) - gammaln(1.0 - alpha))


def sibuya_score(alpha: float, j):
    """``d/d alpha log p_alpha(j) = 1/alpha - sum_{i<j} 1/(i - alpha)``."""
    j = np.asarray(j, dtype=float)
    return 1.0 / alpha - (digamma(j - alpha) - digamma(1.0 - alpha))


def sample_sibuya(alpha: float, size: int, rng: np.random.Generator,
                  table_size: int = 1 << 16) -> np.ndarray:
    """Inverse-CDF draws from the Sibuya law (float array; values can be huge)."""
    _check_alpha(alpha)
    v = 1.0 - rng.random(size)  # target survival level, in (0, 1]
    surv = sibuya_survival(alpha, np.arange(table_size + 1))
    # first j with P(J > j) <= v
    out = np.searchsorted(-surv, -v, side="left").astype(float)
    tail = out > table_size
    if np.any(tail):
        out[tail] = _survival_inverse(alpha, v[tail], float(table_size))
    return out


def _survival_inverse(alpha, v, lo):
    """Smallest integer ``j`` with ``P(J > j) <= v`` for targets beyond ``lo``."""
    log_v = np.log(v)
    log_s = lambda y: log_gamma_ratio(y, 1.0 - alpha, 1.0) - gammaln(1.0 - alpha)
    a = np.full(v.shape, math.log(lo))
    b = np.maximum(a + 1.0, (gammaln(1.0 - alpha) + 50.0 - log_v) / alpha)
    for _ in range(200):
        mid = 0.5 * (a + b)
        above = log_s(np.exp(mid)) > log_v
        a = np.where(above, mid, a)
        b = np.where(above, b, mid)
    j = np.ceil(np.exp(b))
    # bisection leaves b within a hair of the crossing; fix integer rounding
    step_back = log_s(j - 1.0) <= log_v
    return np.where(step_back, j - 1.0, j)


# -- series against the Sibuya pmf ------------------------------------------

@dataclass(frozen=True)
class SeriesValue:
    value: float
    truncation_j: int
    tail_bound: float


def sibuya_series(alpha: float, g: Callable, dg: Callable, tol: float = 1e-13,
                  start: int = _FIRST_CUT, max_terms: int = MAX_TERMS) -> SeriesValue:
    """``sum_{j>=1} p_alpha(j) g(j)`` for smooth, slowly varying ``g``.

    ``g`` and its derivative ``dg`` must accept real arrays. The sum is taken
    exactly up to ``J`` and the remainder from the Euler-Maclaurin formula
    through the first-derivative term; ``tail_bound`` bounds what is left
    (the third-derivative term, doubled) plus the quadrature error.
    """
    _check_alpha(alpha)
    if tol <= 0:
        raise ValueError("tol must be positive")
    cut = int(start)
    while True:
        j = np.arange(1, cut + 1, dtype=float)
        terms = sibuya_pmf_table(alpha, cut) * g(j)
        partial = math.fsum(terms)
        tail, err = _em_tail(alpha, g, dg, float(cut), tol)
        if err < tol / 2 or cut >= max_terms:
            break
        cut = min(4 * cut, max_terms)
    if err >= tol / 2:
        raise ArithmeticError(f"series tolerance {tol} unreachable within {max_terms} terms")
    return SeriesValue(partial + tail, cut, err)


def _em_tail(alpha, g, dg, cut, tol):
    """Euler-Maclaurin estimate of ``sum_{j > cut} p(j) g(j)`` and its error bound."""
    lp0 = math.log(alpha) - gammaln(1.0 - alpha)

    def f(y):
        return np.exp(lp0 + log_gamma_ratio(y, -alpha, 1.0)) * g(y)

    def integrand(u):
        # y = u**(-1/alpha); dy = (1/alpha) u**(-1/alpha - 1) du
        if u <= 0.0:
            return 0.0
        log_y = -math.log(u) / alpha
        log_jac = (1.0 + alpha) * log_y - math.log(alpha)
        if log_y > 700.0:
            # y**-(1+alpha) cancels the Jacobian; g is flat out here
            log_p = lp0 - (1.0 + alpha) * log_y
            y = math.exp(700.0)
        else:
            y = math.exp(log_y)
            log_p = lp0 + float(log_gamma_ratio(np.array([y]), -alpha, 1.0)[0])
        return math.exp(log_p + log_jac) * float(g(np.array([y]))[0])

    integral, qerr = integrate.quad(integrand, 0.0, cut ** -alpha, epsabs=tol * 1e-2,
                                    epsrel=1e-12, limit=400)
    y = np.array([cut])
    f0 = float(f(y)[0])
    p0 = math.exp(lp0 + float(log_gamma_ratio(y, -alpha, 1.0)[0]))
    dlogp = float(digamma(cut - alpha) - digamma(cut + 1.0))
    f1 = p0 * (dlogp * float(g(y)[0]) + float(dg(y)[0]))
    tail = integral - 0.5 * f0 - f1 / 12.0
    # third-derivative term for an integrand decaying like y**-s
    s = max(-cut * f1 / f0, 1.0) if f0 != 0.0 else 3.0
    em_err = 2.0 * s * (s + 1) * (s + 2) * abs(f0) / (720.0 * cut**3)
    return tail, em_err + qerr


# -- Fisher information ------------------------------------------------------

@dataclass(frozen=True)
class FisherInfo:
    """Fisher information of the Sibuya family at ``alpha``."""

    alpha: float
    value: float
    truncation_j: int
    tail_bound: float

    def __float__(self) -> float:
        return self.value


def fisher_info(alpha: float, tol: float = 1e-12, form: str = "single") -> FisherInfo:
    """``i(alpha) = 1/alpha**2 + sum_j p(j) / (alpha (j - alpha))``.

    ``form="double"`` evaluates the equivalent
    ``1/alpha**2 + sum_j p(j) sum_{i<j} 1/(i - alpha)**2`` instead.
    """
    return _fisher_cached(float(alpha), float(tol), form)


@functools.lru_cache(maxsize=4096)
def _fisher_cached(alpha, tol, form):
    _check_alpha(alpha)
    if form == "single":
        s = sibuya_series(alpha, lambda y: 1.0 / (alpha * (y - alpha)),
                          lambda y: -1.0 / (alpha * (y - alpha) ** 2), tol)
    elif form == "double":
        c = float(polygamma(1, 1.0 - alpha))
        s = sibuya_series(alpha, lambda y: c - polygamma(1, y - alpha),
                          lambda y: -polygamma(2, y - alpha), tol)
    else:
        raise ValueError(f"unknown form {form!r}")
    return FisherInfo(alpha, 1.0 / alpha**2 + s.value, s.truncation_j, s.tail_bound)


# -- score functions ---------------------------------------------------------

def _check_x(x: float) -> None:
    if not 0.0 < x < 1.0:
        raise ValueError(f"x must lie in (0, 1), got {x!r}")


def psi(x: float, alpha: float, tol: float = 1e-12) -> float:
    """Population score ``1/x - sum_j p_alpha(j) sum_{i<j} 1/(i - x)``; root at ``alpha``."""
    _check_x(x)
    c = float(digamma(1.0 - x))
    s = sibuya_series(alpha, lambda y: digamma(y - x) - c,
                      lambda y: polygamma(1, y - x), tol)
    return 1.0 / x - s.value


def psi_derivative(x: float, alpha: float, tol: float = 1e-12) -> float:
    """``-1/x**2 - sum_j p_alpha(j) sum_{i<j} 1/(i - x)**2``."""
    _check_x(x)
    c = float(polygamma(1, 1.0 - x))
    s = sibuya_series(alpha, lambda y: c - polygamma(1, y - x),
                      lambda y: -polygamma(2, y - x), tol)
    return -1.0 / x**2 - s.value


def psi_n(x: float, stats: SuffStats) -> tuple[float, float]:
    """Empirical score and its derivative at ``x``.

    ``(k-1)/(x k) - sum_j (k_{n,j}/k) sum_{i<j} 1/(i - x)``; the inner sums
    are digamma / trigamma differences.
    """
    _check_x(x)
    js, cs = stats.arrays()
    k = stats.k_n
    weights = cs / k
    inner = digamma(js - x) - digamma(1.0 - x)
    inner2 = polygamma(1, 1.0 - x) - polygamma(1, js - x)
    value = (k - 1) / (x * k) - float(np.dot(weights, inner))
    deriv = -(k - 1) / (x * x * k) - float(np.dot(weights, inner2))
    return value, deriv
