"""Predictive simplex estimators, divergences and subset confidence intervals.

Index 0 of every simplex is the probability that the next element opens a
new block; index ``i >= 1`` is the probability that it joins block ``i``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from gplab.errors import BoundaryError, ConfigError, MembershipError
from gplab.partition import PartitionState, SuffStats, make_rng
from gplab.qmle import two_sided_quantile
from gplab.sibuya import fisher_info

SUM_TOL = 1e-10
MAX_ATTEMPTS = 10**6
_BATCH = 256


class SimplexKind(enum.Enum):
    QMLE_ZERO = "QmleZero"
    FREQUENCY = "Frequency"
    QMLE_THETA = "QmleTheta"


class CIKind(enum.Enum):
    UNIFORM = "Uniform"
    LOCAL = "Local"


@dataclass(frozen=True)
class SimplexPair:
    """True predictive simplex and an estimate of it on indices ``0..k_n``.

    ``boundary`` flags estimates with a zero entry (the frequency estimator
    always, the QMLE one when ``alpha_hat = 0``) or a degenerate ``alpha_hat = 1``.
    """

    truth: np.ndarray
    estimate: np.ndarray
    kind: SimplexKind
    theta: float | None = None
    boundary: bool = False

    def __post_init__(self):
        t, e = self.truth, self.estimate
        if t.shape != e.shape:
            raise ValueError("truth and estimate must be aligned")
        if np.any(t <= 0.0):
            raise ValueError("true simplex must be strictly positive")
        for name, p in (("truth", t), ("estimate", e)):
            if abs(math.fsum(p) - 1.0) > SUM_TOL:
                raise ValueError(f"{name} does not sum to 1")


def simplex_estimate(block_sizes, alpha_hat: float, kind: SimplexKind = SimplexKind.QMLE_ZERO,
                     theta: float | None = None) -> np.ndarray:
    """Estimated predictive simplex from block sizes alone."""
    sizes = np.asarray(block_sizes, dtype=float)
    n, k = sizes.sum(), sizes.size
    if not 0.0 <= alpha_hat <= 1.0:
        raise ConfigError(f"alpha_hat must lie in [0, 1], got {alpha_hat!r}")
    out = np.empty(k + 1)
    if kind is SimplexKind.FREQUENCY:
        out[0] = 0.0
        out[1:] = sizes / n
    elif kind is SimplexKind.QMLE_ZERO:
        out[0] = k * alpha_hat / n
        out[1:] = (sizes - alpha_hat) / n
    elif kind is SimplexKind.QMLE_THETA:
        if theta is None or theta <= -alpha_hat:
            raise ConfigError("QmleTheta needs theta > -alpha_hat")
        out[0] = (theta + k * alpha_hat) / (n + theta)
        out[1:] = (sizes - alpha_hat) / (n + theta)
    else:
        raise ConfigError(f"unknown simplex kind {kind!r}")
    return out


def estimate_simplex(state: PartitionState, alpha_hat: float,
                     kind: SimplexKind = SimplexKind.QMLE_ZERO,
                     theta: float | None = None) -> SimplexPair:
    """Pair the true simplex of ``state`` with an estimate of the given kind."""
    est = simplex_estimate(state.block_sizes, alpha_hat, kind, theta)
    boundary = bool(np.any(est == 0.0)) or alpha_hat >= 1.0
    return SimplexPair(state.true_simplex(), est, kind, theta, boundary)


# -- divergences ---------------------------------------------------------------

def _kl_f(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0)), 0.0)


F_CATALOG: dict[str, Callable] = {
    "kl": _kl_f,
    "tv": lambda x: 0.5 * np.abs(np.asarray(x, dtype=float) - 1.0),
    "chi2": lambda x: (np.asarray(x, dtype=float) - 1.0) ** 2,
    "hellinger": lambda x: (np.sqrt(np.asarray(x, dtype=float)) - 1.0) ** 2,
}


def tabulated_f(xs: Sequence[float], fs: Sequence[float]) -> Callable:
    """Piecewise-linear ``f`` through the points ``(xs, fs)``; ``xs`` must cover the ratios."""
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if xs.ndim != 1 or xs.shape != fs.shape or np.any(np.diff(xs) <= 0):
        raise ConfigError("tabulated f needs increasing xs and matching fs")
    if not xs[0] <= 1.0 <= xs[-1] or abs(np.interp(1.0, xs, fs)) > 1e-12:
        raise ConfigError("tabulated f must satisfy f(1) = 0")

    def f(x):
        x = np.asarray(x, dtype=float)
        if np.any((x < xs[0]) | (x > xs[-1])):
            raise ValueError("ratio outside the tabulated range")
        return np.interp(x, xs, fs)

    return f


def f_divergence(pair: SimplexPair, f: str | Callable = "kl") -> float:
    """``sum_i p_i f(p_hat_i / p_i)``."""
    fn = F_CATALOG[f] if isinstance(f, str) else f
    ratio = pair.estimate / pair.truth
    vals = np.asarray(fn(ratio), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("f is undefined at some ratio")
    return float(np.dot(pair.truth, vals))


def tv_distance(p, q) -> float:
    """``(1/2) sum |p_i - q_i|`` for aligned probability vectors."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("probability vectors must be aligned")
    return 0.5 * float(np.abs(p - q).sum())


def tv(pair: SimplexPair) -> float:
    """Total variation ``(1/2) sum |p_hat_i - p_i|``."""
    return tv_distance(pair.estimate, pair.truth)


def kl(pair: SimplexPair) -> float:
    """``KL(p_hat || p)`` with ``0 log 0 = 0``."""
    return f_divergence(pair, "kl")


def tv_subset(pair: SimplexPair) -> np.ndarray:
    """The index set ``{i : p_hat_i > p_i}`` that attains the total variation."""
    return np.flatnonzero(pair.estimate > pair.truth)


def subset_mass(p: np.ndarray, subset) -> float:
    return float(np.sum(p[np.asarray(subset, dtype=np.int64)]))


# -- confidence intervals ------------------------------------------------------

@dataclass(frozen=True)
class SubsetCI:
    subset: tuple[int, ...]
    center: float
    half_width: float
    kind: CIKind

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    def covers(self, value: float) -> bool:
        return abs(value - self.center) <= self.half_width


def _check_interior(alpha_hat: float) -> None:
    if not 0.0 < alpha_hat < 1.0:
        raise BoundaryError("CI undefined at boundary")


def _scale(alpha_hat: float, eps: float) -> float:
    """``tau_{1-eps/2} / sqrt(i(alpha_hat))``."""
    return two_sided_quantile(eps) / math.sqrt(fisher_info(alpha_hat).value)


def uniform_ci(stats: SuffStats, alpha_hat: float, eps: float = 0.05) -> float:
    """Half-width ``sqrt(k)/n * tau / sqrt(i)``, valid simultaneously for every subset of ``{0..k}``."""
    _check_interior(alpha_hat)
    return math.sqrt(stats.k_n) / stats.n * _scale(alpha_hat, eps)


def _sizes_of(block_sizes) -> np.ndarray:
    if isinstance(block_sizes, PartitionState):
        return block_sizes.block_sizes
    return np.asarray(block_sizes, dtype=np.int64)


def in_local_family(block_sizes, subset, delta_n: float) -> bool:
    """Mean block size over ``subset`` (1-based) is at most ``n * delta_n``."""
    sizes = _sizes_of(block_sizes)
    idx = np.asarray(subset, dtype=np.int64)
    if idx.size == 0:
        return False
    return float(sizes[idx - 1].mean()) <= sizes.sum() * delta_n


def uniform_subset_ci(block_sizes, alpha_hat: float, eps: float, subset) -> SubsetCI:
    """The uniform interval around ``p_hat(I)`` for any ``I`` in ``{0..k}``."""
    sizes = _sizes_of(block_sizes)
    idx = np.unique(np.asarray(subset, dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] > sizes.size):
        raise ConfigError(f"subset indices must lie in 0..{sizes.size}")
    hw = uniform_ci(SuffStats.from_block_sizes(sizes), alpha_hat, eps)
    center = subset_mass(simplex_estimate(sizes, alpha_hat), idx)
    return SubsetCI(tuple(idx.tolist()), center, hw, CIKind.UNIFORM)


def local_ci(block_sizes, alpha_hat: float, eps: float, subset, delta_n: float) -> SubsetCI:
    """Interval for ``p_n(I)`` with half-width ``|I| / (n sqrt(k)) * tau / sqrt(i)``."""
    _check_interior(alpha_hat)
    sizes = _sizes_of(block_sizes)
    n, k = int(sizes.sum()), sizes.size
    idx = np.unique(np.asarray(subset, dtype=np.int64))
    if idx.size == 0:
        raise MembershipError("subset is empty")
    if idx[0] == 0:
        raise ConfigError("the local interval excludes the new-block index 0")
    if idx[0] < 1 or idx[-1] > k:
        raise ConfigError(f"subset indices must lie in 1..{k}")
    if delta_n < 1.0 / k:
        raise ConfigError("delta_n must be at least 1/k_n")
    if not in_local_family(sizes, idx, delta_n):
        raise MembershipError("subset fails the mean block size test")
    center = float(np.sum(sizes[idx - 1] - alpha_hat)) / n
    hw = idx.size / (n * math.sqrt(k)) * _scale(alpha_hat, eps)
    return SubsetCI(tuple(idx.tolist()), center, hw, CIKind.LOCAL)


def delta_rule(k: int, n: int, rule: str = "k_pow") -> float:
    """``k^-0.51`` (``"k_pow"``) or ``max(1/(sqrt(k) log n), 1/k)`` (``"sqrt_log"``)."""
    if rule == "k_pow":
        return k ** -0.51
    if rule == "sqrt_log":
        if n < 2:
            return 1.0
        return max(1.0 / (math.sqrt(k) * math.log(n)), 1.0 / k)
    raise ConfigError(f"unknown delta rule {rule!r}")


def sample_subset_In(block_sizes, delta_n: float, rng=None,
                     max_attempts: int = MAX_ATTEMPTS) -> tuple[int, ...]:
    """Uniform draw from the admissible family by rejection.

    Each index of ``1..k`` is kept independently with probability 1/2; empty
    sets and sets failing the mean-size test are rejected.
    """
    sizes = _sizes_of(block_sizes).astype(float)
    k = sizes.size
    if delta_n < 1.0 / k:
        raise ConfigError("delta_n must be at least 1/k_n")
    rng = make_rng(rng)
    limit = sizes.sum() * delta_n
    tried = 0
    while tried < max_attempts:
        b = min(_BATCH, max_attempts - tried)
        keep = rng.random((b, k)) < 0.5
        cnt = keep.sum(axis=1)
        tot = keep @ sizes
        ok = (cnt > 0) & (tot <= limit * cnt)
        if ok.any():
            first = int(np.argmax(ok))
            return tuple((np.flatnonzero(keep[first]) + 1).tolist())
        tried += b
    raise MembershipError(
        f"no admissible subset in {max_attempts} attempts (acceptance rate < {1 / max_attempts:.1e})")
