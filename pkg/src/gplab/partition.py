"""Sequential sampling of exchangeable Gibbs partitions.

The partition of ``[n]`` is stored through its block sizes only (in order of
creation); the law is exchangeable, so every statistic of interest is a
function of the sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from scipy.special import gammaln

from gplab import _kernels
from gplab.errors import ConfigError, NumericalError
from gplab.mixing import MixingSpec, ParticleMeasure, discretize

CHUNK = 1 << 16
MAX_EXACT_N = 10


def replicate_seed(master_seed: int, replicate: int) -> np.random.SeedSequence:
    """Independent seed for ``replicate`` derived from ``master_seed``."""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(replicate),))


def make_rng(seed=None) -> np.random.Generator:
    """Counter-based (Philox) generator from an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class SuffStats:
    """``(n, k_n, {j: k_{n,j}})``: block count and size histogram.

    ``size_counts`` maps a block size ``j`` to the number of blocks of that
    size; only nonzero entries are stored, in increasing ``j``.
    """

    n: int
    k_n: int
    size_counts: dict

    def __post_init__(self):
        clean = {int(j): int(c) for j, c in sorted(self.size_counts.items()) if int(c) != 0}
        object.__setattr__(self, "size_counts", clean)
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if any(j < 1 or c < 0 for j, c in clean.items()):
            raise ConfigError("size counts must have j >= 1 and nonnegative counts")
        if sum(clean.values()) != self.k_n:
            raise ConfigError(f"size counts sum to {sum(clean.values())}, expected k_n={self.k_n}")
        if sum(j * c for j, c in clean.items()) != self.n:
            raise ConfigError("sum of j * k_{n,j} must equal n")

    @classmethod
    def from_block_sizes(cls, block_sizes) -> SuffStats:
        sizes = np.asarray(block_sizes, dtype=np.int64)
        js, cs = np.unique(sizes, return_counts=True)
        return cls(int(sizes.sum()), int(sizes.size), dict(zip(js.tolist(), cs.tolist())))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct sizes and their counts as integer arrays."""
        js = np.fromiter(self.size_counts.keys(), dtype=np.int64, count=len(self.size_counts))
        cs = np.fromiter(self.size_counts.values(), dtype=np.int64, count=len(self.size_counts))
        return js, cs

    def to_dict(self) -> dict:
        return {"n": self.n, "k_n": self.k_n,
                "size_counts": {str(j): c for j, c in self.size_counts.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> SuffStats:
        return cls(int(d["n"]), int(d["k_n"]),
                   {int(j): int(c) for j, c in d["size_counts"].items()})

    def csv_row(self, replicate_id: int) -> list[str]:
        """``replicate_id, n, k_n`` followed by sparse ``j:count`` cells."""
        return [str(replicate_id), str(self.n), str(self.k_n)] + [
            f"{j}:{c}" for j, c in self.size_counts.items()]

    @classmethod
    def from_csv_row(cls, row) -> tuple[int, SuffStats]:
        rid, n, k = int(row[0]), int(row[1]), int(row[2])
        counts = {}
        for cell in row[3:]:
            if not cell:
                continue
            j, _, c = cell.partition(":")
            counts[int(j)] = int(c)
        return rid, cls(n, k, counts)


class Assignment(NamedTuple):
    """Where element ``n + 1`` went: a fresh block or block ``block`` (0-based)."""

    new_block: bool
    block: int


class PartitionState:
    """A Gibbs partition of ``[n]`` that can be grown one element at a time.

    Parameters
    ----------
    alpha : float
        Discount parameter in (0, 1).
    mixing : MixingSpec
        Mixing distribution of the Ewens-Pitman strength ``theta``.
    seed : int, SeedSequence or Generator, optional
        Source of randomness; equal seeds give equal trajectories.
    capacity : int
        Initial buffer size; buffers grow on demand.
    """

    def __init__(self, alpha: float, mixing: MixingSpec, seed=None, capacity: int = 1024):
        mixing.check_alpha(alpha)
        self.alpha = float(alpha)
        self.mixing = mixing
        pm = discretize(mixing)
        self._theta = pm.nodes
        self._w = pm.weights
        self._w /= self._w.sum()
        cap = max(int(capacity), 2)
        self._sizes = np.zeros(cap, dtype=np.int64)
        self._members = np.zeros(cap, dtype=np.int64)
        self._counts = np.zeros(cap + 2, dtype=np.int64)
        self._ints = np.array([1, 1, 0], dtype=np.int64)
        self._sizes[0] = 1
        self._counts[1] = 1
        self.rng = make_rng(seed)

    @classmethod
    def from_block_sizes(cls, block_sizes, alpha: float, mixing: MixingSpec,
                         seed=None) -> PartitionState:
        """State whose blocks have the given sizes, tilted exactly to ``(n, k)``."""
        sizes = np.asarray(block_sizes, dtype=np.int64)
        if sizes.ndim != 1 or sizes.size == 0 or np.any(sizes < 1):
            raise ConfigError("block sizes must be a nonempty list of positive integers")
        n, k = int(sizes.sum()), int(sizes.size)
        state = cls(alpha, mixing, seed=seed, capacity=2 * n)
        state._sizes[:k] = sizes
        state._sizes[k:] = 0
        state._counts[:] = 0
        np.add.at(state._counts, sizes, 1)
        state._members[: n - k] = np.repeat(np.arange(k), sizes - 1)
        state._ints[:] = (n, k, n - k)
        pm = discretize(mixing).tilt(n, k, alpha)
        state._w = pm.weights
        state._w /= state._w.sum()
        return state

    # -- views --------------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self._ints[0])

    @property
    def k(self) -> int:
        return int(self._ints[1])

    @property
    def block_sizes(self) -> np.ndarray:
        return self._sizes[: self.k].copy()

    @property
    def size_counts(self) -> dict[int, int]:
        nz = np.flatnonzero(self._counts[: self.n + 1])
        return dict(zip(nz.tolist(), self._counts[nz].tolist()))

    @property
    def pm(self) -> ParticleMeasure:
        """The tilted mixing measure at the current ``(n, k)``."""
        with np.errstate(divide="ignore"):
            return ParticleMeasure(self._theta.copy(), np.log(self._w))

    def suff_stats(self) -> SuffStats:
        return SuffStats(self.n, self.k, self.size_counts)

    def diversity(self) -> float:
        """``k_n / n**alpha``."""
        return self.k / self.n ** self.alpha

    def copy(self, seed=None) -> PartitionState:
        other = object.__new__(PartitionState)
        other.alpha, other.mixing = self.alpha, self.mixing
        other._theta = self._theta
        for name in ("_w", "_sizes", "_members", "_counts", "_ints"):
            setattr(other, name, getattr(self, name).copy())
        other.rng = make_rng(seed) if seed is not None else _clone_rng(self.rng)
        return other

    # -- predictive probabilities -------------------------------------------

    def ratios(self) -> tuple[float, float]:
        """``(v_{n+1,k+1}/v_{n,k}, v_{n+1,k}/v_{n,k})`` under the current tilt."""
        n, k, a = self.n, self.k, self.alpha
        q = self._w / (self._theta + n)
        return float(np.dot(q, self._theta + k * a)), float(q.sum())

    def true_simplex(self) -> np.ndarray:
        """Predictive probabilities ``[p_new, p_1, ..., p_k]`` for element ``n + 1``."""
        p_new, r_ex = self.ratios()
        out = np.empty(self.k + 1)
        out[0] = p_new
        out[1:] = r_ex * (self._sizes[: self.k] - self.alpha)
        return out

    # -- dynamics -----------------------------------------------------------

    def _reserve(self, n_target: int) -> None:
        cap = self._sizes.size
        if n_target <= cap:
            return
        new_cap = max(n_target, 2 * cap)
        for name in ("_sizes", "_members"):
            buf = np.zeros(new_cap, dtype=np.int64)
            buf[:cap] = getattr(self, name)
            setattr(self, name, buf)
        counts = np.zeros(new_cap + 2, dtype=np.int64)
        counts[: self._counts.size] = self._counts
        self._counts = counts

    def _advance(self, u: np.ndarray) -> int:
        b = _kernels.advance(self._sizes, self._members, self._counts, self._theta,
                             self._w, self._ints, self.alpha, u)
        if b == _kernels.WEIGHT_CORRUPTION:
            raise NumericalError(f"predictive probability left [0, 1] at n={self.n}")
        return int(b)

    def step(self) -> Assignment:
        """Assign element ``n + 1`` and return where it went."""
        self._reserve(self.n + 1)
        k_before = self.k
        b = self._advance(self.rng.random((1, 3)))
        if b == -1:
            return Assignment(True, k_before)
        return Assignment(False, b)

    def run_to(self, n_target: int) -> SuffStats:
        """Advance to ``n_target`` elements and return the sufficient statistics."""
        if n_target < self.n:
            raise ValueError(f"cannot run backwards from n={self.n} to {n_target}")
        self._reserve(n_target)
        while self.n < n_target:
            m = min(CHUNK, n_target - self.n)
            self._advance(self.rng.random((m, 3)))
        return self.suff_stats()

    def sample_next(self, draws: int, rng=None) -> np.ndarray:
        """``draws`` independent assignments of element ``n + 1`` (state untouched).

        Entries are block indices, ``-1`` meaning a new block.
        """
        rng = self.rng if rng is None else make_rng(rng)
        out = np.empty(draws, dtype=np.int64)
        _kernels.draw_next(self._members, self._theta, self._w, self._ints, self.alpha,
                           rng.random((draws, 3)), out)
        return out


def diversity_limit_mean(theta: float, alpha: float) -> float:
    """``E[lim k_n / n**alpha] = Gamma(theta + 1) / (alpha Gamma(theta + alpha))`` for a point mass."""
    return math.exp(gammaln(theta + 1.0) - gammaln(theta + alpha)) / alpha


def expected_blocks(theta: float, alpha: float, n: int) -> float:
    """Exact ``E[k_n]`` for a point mass at ``theta``.

    ``k_n + theta/alpha`` grows in mean by the factor ``(theta + n + alpha) / (theta + n)``
    per step, which telescopes to a gamma ratio.
    """
    if theta == 0.0:
        return math.exp(gammaln(n + alpha) - gammaln(n) - gammaln(1.0 + alpha))
    log_r = (gammaln(theta + n + alpha) + gammaln(theta + 1.0)
             - gammaln(theta + 1.0 + alpha) - gammaln(theta + n))
    return (1.0 + theta / alpha) * math.exp(log_r) - theta / alpha


def diversity_moment_band(mixing: MixingSpec, alpha: float) -> tuple[float, float]:
    """Bounds on ``E[lim k_n / n**alpha]`` from the ends of the mixing support."""
    lo, hi = mixing.support_lower(), mixing.support_upper()
    upper = math.inf if math.isinf(hi) else diversity_limit_mean(hi, alpha)
    return diversity_limit_mean(lo, alpha), upper


def _clone_rng(rng: np.random.Generator) -> np.random.Generator:
    bg = type(rng.bit_generator)()
    bg.state = rng.bit_generator.state
    return np.random.Generator(bg)


# -- exact small-n law ------------------------------------------------------

class ExactPartition(NamedTuple):
    labels: tuple[int, ...]
    sizes: tuple[int, ...]
    probability: float


def set_partitions(n: int) -> Iterator[tuple[int, ...]]:
    """All set partitions of ``[n]`` as restricted growth strings."""
    if n < 1:
        raise ValueError("n must be positive")
    labels = [0] * n

    def rec(i: int, k: int):
        if i == n:
            yield tuple(labels)
            return
        for b in range(k + 1):
            labels[i] = b
            yield from rec(i + 1, max(k, b + 1))

    yield from rec(1, 1)


def labels_to_sizes(labels) -> tuple[int, ...]:
    """Block sizes in order of each block's least element."""
    return tuple(np.bincount(np.asarray(labels, dtype=np.int64)).tolist())


def log_block_weight(sizes, alpha: float) -> float:
    """``log prod_blocks prod_{i<|U|} (i - alpha)``."""
    sizes = np.asarray(sizes, dtype=float)
    return float(np.sum(gammaln(sizes - alpha) - gammaln(1.0 - alpha)))


def enumerate_exact(n: int, alpha: float, mixing: MixingSpec) -> list[ExactPartition]:
    """Probability of every set partition of ``[n]`` from the closed-form law."""
    if n > MAX_EXACT_N:
        raise ValueError(f"exact enumeration limited to n <= {MAX_EXACT_N}")
    if not mixing.exact:
        raise ValueError("exact enumeration needs a dirac or atoms mixing")
    mixing.check_alpha(alpha)
    pm = discretize(mixing)
    log_v = {k: pm.mixture_log_v(n, k, alpha) for k in range(1, n + 1)}
    out = []
    for labels in set_partitions(n):
        sizes = labels_to_sizes(labels)
        logp = log_v[len(sizes)] + log_block_weight(sizes, alpha)
        out.append(ExactPartition(labels, sizes, math.exp(logp)))
    return out


def path_probability(labels, alpha: float, mixing: MixingSpec) -> float:
    """Product of one-step predictive probabilities along a labelled trajectory.

    Uses the log-space particle update rather than closed-form weights, so it
    is an independent route to the law computed by :func:`enumerate_exact`.
    """
    pm = discretize(mixing)
    sizes = [1]
    prob = 1.0
    for n, lab in enumerate(labels[1:], start=1):
        k = len(sizes)
        if lab == k:
            prob *= pm.ratio_new_block(n, k, alpha)
            pm.update_after_step(n, k, alpha, True)
            sizes.append(1)
        elif 0 <= lab < k:
            prob *= pm.ratio_existing(n) * (sizes[lab] - alpha)
            pm.update_after_step(n, k, alpha, False)
            sizes[lab] += 1
        else:
            raise ValueError("labels must form a restricted growth string")
    return prob


def sample_partitions(n: int, alpha: float, mixing: MixingSpec, reps: int, seed=None) -> np.ndarray:
    """``reps`` independent partitions of ``[n]`` as restricted growth strings."""
    mixing.check_alpha(alpha)
    pm = discretize(mixing)
    w0 = pm.weights / pm.weights.sum()
    rng = make_rng(seed)
    out = np.empty((reps, n), dtype=np.int64)
    u = rng.random((reps, max(n - 1, 0), 3))
    status = _kernels.sample_labels(pm.nodes, w0, float(alpha), n, u, out)
    if status == _kernels.WEIGHT_CORRUPTION:
        raise NumericalError("predictive probability left [0, 1]")
    return out
