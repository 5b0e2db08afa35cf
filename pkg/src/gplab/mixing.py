"""Mixing distributions over the Ewens-Pitman strength parameter.

A :class:`MixingSpec` is the declarative description read from configuration
files; :func:`discretize` turns it into a :class:`ParticleMeasure`, a fixed set
of nodes with log weights. Tilting that measure by the Ewens-Pitman weight
``v_{n,k}(alpha, theta)`` gives the predictive probabilities of the partition.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln, logsumexp

from gplab.errors import ConfigError
from gplab.stats import normal_quantile

KINDS = ("dirac", "atoms", "uniform", "halfnormal", "halft")
DEFAULT_NODES = 128
DEFAULT_Q_TRUNC = 1.0 - 1e-6


@dataclass(frozen=True)
class MixingSpec:
    """Mixing distribution ``mu`` of the strength parameter ``theta``.

    ``params`` depends on ``kind``:

    - ``dirac``: ``(theta,)``
    - ``atoms``: ``((theta_1, p_1), (theta_2, p_2), ...)``
    - ``uniform``: ``(a, b)``
    - ``halfnormal``: ``(scale,)``
    - ``halft``: ``(df, scale)``

    ``nodes`` is the discretization size for continuous kinds and
    ``q_trunc`` the upper quantile at which unbounded kinds are cut.
    """

    kind: str
    params: tuple
    nodes: int = DEFAULT_NODES
    q_trunc: float = DEFAULT_Q_TRUNC

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown mixing kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "atoms":
            atoms = tuple((float(t), float(p)) for t, p in self.params)
            object.__setattr__(self, "params", atoms)
        else:
            object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        self._validate()

    def _validate(self):
        kind, p = self.kind, self.params
        if self.nodes < 1:
            raise ConfigError("mixing needs at least one node")
        if not 0.0 < self.q_trunc < 1.0:
            raise ConfigError("q_trunc must lie in (0, 1)")
        arity = {"dirac": 1, "uniform": 2, "halfnormal": 1, "halft": 2}
        if kind in arity and len(p) != arity[kind]:
            raise ConfigError(f"{kind} takes {arity[kind]} parameter(s), got {len(p)}")
        if kind == "atoms":
            if not p:
                raise ConfigError("atoms mixing needs at least one atom")
            probs = np.array([w for _, w in p])
            if np.any(probs < 0):
                raise ConfigError("atom probabilities must be nonnegative")
            if abs(probs.sum() - 1.0) > 1e-12:
                raise ConfigError(f"atom probabilities sum to {probs.sum()!r}, not 1")
        elif kind == "uniform":
            a, b = p
            if a > b:
                raise ConfigError("uniform mixing needs a <= b")
            if a == b and self.nodes > 1:
                raise ConfigError("degenerate uniform interval with more than one node")
        elif kind == "halfnormal":
            if p[0] <= 0:
                raise ConfigError("half-normal scale must be positive")
        elif kind == "halft":
            df, scale = p
            if df <= 0:
                raise ConfigError("half-t degrees of freedom must be positive")
            if scale <= 0:
                raise ConfigError("half-t scale must be positive")

    # -- constructors -------------------------------------------------------

    @classmethod
    def dirac(cls, theta: float) -> MixingSpec:
        return cls("dirac", (theta,), nodes=1)

    @classmethod
    def atoms(cls, atoms) -> MixingSpec:
        atoms = tuple(atoms)
        return cls("atoms", atoms, nodes=len(atoms))

    @classmethod
    def uniform(cls, a: float, b: float, nodes: int = DEFAULT_NODES) -> MixingSpec:
        return cls("uniform", (a, b), nodes=nodes)

    @classmethod
    def half_normal(cls, scale: float = 1.0, nodes: int = DEFAULT_NODES,
                    q_trunc: float = DEFAULT_Q_TRUNC) -> MixingSpec:
        return cls("halfnormal", (scale,), nodes=nodes, q_trunc=q_trunc)

    @classmethod
    def half_t(cls, df: float, scale: float = 1.0, nodes: int = DEFAULT_NODES,
               q_trunc: float = DEFAULT_Q_TRUNC) -> MixingSpec:
        return cls("halft", (df, scale), nodes=nodes, q_trunc=q_trunc)

    # -- properties ---------------------------------------------------------

    @property
    def exact(self) -> bool:
        """True when the measure is a finite set of atoms (no discretization)."""
        return self.kind in ("dirac", "atoms")

    def support_lower(self) -> float:
        if self.kind == "dirac":
            return self.params[0]
        if self.kind == "atoms":
            return min(t for t, w in self.params if w > 0)
        if self.kind == "uniform":
            return self.params[0]
        return 0.0

    def support_upper(self) -> float:
        """Upper end of the support; ``inf`` for the unbounded kinds."""
        if self.kind == "dirac":
            return self.params[0]
        if self.kind == "atoms":
            return max(t for t, w in self.params if w > 0)
        if self.kind == "uniform":
            return self.params[1]
        return math.inf

    def check_alpha(self, alpha: float) -> None:
        """Raise unless every support point satisfies ``theta > -alpha``."""
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha!r}")
        lo = self.support_lower()
        if not lo > -alpha:
            raise ConfigError(f"mixing support reaches theta={lo}, need theta > -alpha={-alpha}")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        kind, p = self.kind, self.params
        if kind == "dirac":
            params = {"theta": p[0]}
        elif kind == "atoms":
            params = {"atoms": [list(a) for a in p]}
        elif kind == "uniform":
            params = {"a": p[0], "b": p[1]}
        elif kind == "halfnormal":
            params = {"scale": p[0]}
        else:
            params = {"df": p[0], "scale": p[1]}
        return {"kind": kind, "params": params, "nodes": self.nodes, "q_trunc": self.q_trunc}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> MixingSpec:
        try:
            kind = d["kind"]
            params = d.get("params", {})
            if kind == "dirac":
                p = (params["theta"],)
            elif kind == "atoms":
                p = tuple(tuple(a) for a in params["atoms"])
            elif kind == "uniform":
                p = (params["a"], params["b"])
            elif kind == "halfnormal":
                p = (params.get("scale", 1.0),)
            elif kind == "halft":
                p = (params["df"], params.get("scale", 1.0))
            else:
                raise ConfigError(f"unknown mixing kind {kind!r}")
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed mixing spec {d!r}: {exc}") from exc
        default_nodes = len(p) if kind == "atoms" else (1 if kind == "dirac" else DEFAULT_NODES)
        return cls(kind, p, nodes=int(d.get("nodes", default_nodes)),
                   q_trunc=float(d.get("q_trunc", DEFAULT_Q_TRUNC)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def parse(cls, text: str) -> MixingSpec:
        """Parse a JSON object or the inline form used on the command line.

        Inline forms: ``dirac:0``, ``atoms:0@0.5,3@0.5``, ``uniform:0,3``,
        ``halfnormal:1``, ``halft:3,1``.
        """
        text = text.strip()
        if text.startswith("{"):
            try:
                return cls.from_dict(json.loads(text))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad mixing JSON: {exc}") from exc
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower().replace("-", "").replace("_", "")
        try:
            if kind == "atoms":
                atoms = []
                for item in rest.split(","):
                    t, _, w = item.partition("@")
                    atoms.append((float(t), float(w)))
                return cls.atoms(atoms)
            values = [float(x) for x in rest.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad inline mixing {text!r}") from exc
        if kind == "dirac":
            return cls.dirac(*values)
        if kind == "uniform":
            return cls.uniform(*values)
        if kind == "halfnormal":
            return cls.half_normal(*values)
        if kind == "halft":
            return cls.half_t(*values)
        raise ConfigError(f"unknown mixing kind in {text!r}")


def exact_log_v(theta, n: int, k: int, alpha: float):
    """Log of the Ewens-Pitman weight ``prod_{i<k}(theta+i*alpha) / prod_{i<n}(theta+i)``.

    Vectorized over ``theta``.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= -alpha):
        raise ValueError("theta must exceed -alpha")
    t = theta / alpha
    num = (k - 1) * math.log(alpha) + gammaln(t + k) - gammaln(t + 1.0)
    den = gammaln(theta + n) - gammaln(theta + 1.0)
    out = num - den
    return float(out) if out.ndim == 0 else out


@dataclass
class ParticleMeasure:
    """Weighted nodes ``{(theta_j, log w_j)}`` standing in for a mixing measure.

    The node set never changes; tilting only reweights.
    """

    nodes: np.ndarray
    log_weights: np.ndarray
    normalized: bool = field(default=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.nodes.shape != self.log_weights.shape or self.nodes.ndim != 1:
            raise ValueError("nodes and log_weights must be 1-d arrays of equal length")
        if not self.normalized:
            self.normalize()

    def normalize(self) -> ParticleMeasure:
        lse = logsumexp(self.log_weights)
        if not np.isfinite(lse):
            raise FloatingPointError("particle weights are not normalizable")
        self.log_weights = self.log_weights - lse
        self.normalized = True
        return self

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def copy(self) -> ParticleMeasure:
        return ParticleMeasure(self.nodes.copy(), self.log_weights.copy(), self.normalized)

    def expectation(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of ``f`` against the (normalized) measure."""
        values = np.asarray(f(self.nodes), dtype=float)
        values = np.broadcast_to(values, self.nodes.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("integrand is not finite on every node")
        return float(np.dot(self.weights, values))

    def _check_domain(self, k: int, alpha: float):
        if np.any(self.nodes + k * alpha <= 0):
            raise ValueError("some node violates theta > -alpha")

    def ratio_new_block(self, n: int, k: int, alpha: float) -> float:
        """``v_{n+1,k+1} / v_{n,k}`` when this measure is the tilt at ``(n, k)``."""
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
        self._check_domain(k, alpha)
        return self.expectation(lambda t: (t + k * alpha) / (t + n))

    def ratio_existing(self, n: int) -> float:
        """``v_{n+1,k} / v_{n,k}`` when this measure is the tilt at ``(n, k)``."""
        return self.expectation(lambda t: 1.0 / (t + n))

    def update_after_step(self, n: int, k: int, alpha: float, new_block: bool) -> None:
        """Move the tilt from ``(n, k)`` to ``(n+1, k+1)`` or ``(n+1, k)``."""
        with np.errstate(divide="raise", invalid="raise"):
            try:
                delta = -np.log(self.nodes + n)
                if new_block:
                    delta = delta + np.log(self.nodes + k * alpha)
            except FloatingPointError as exc:
                raise ValueError("log of a non-positive argument in weight update") from exc
        self.log_weights = self.log_weights + delta
        self.normalize()

    def tilt(self, n: int, k: int, alpha: float) -> ParticleMeasure:
        """Fresh tilt of this measure by ``v_{n,k}(alpha, theta)``."""
        lw = self.log_weights + exact_log_v(self.nodes, n, k, alpha)
        return ParticleMeasure(self.nodes.copy(), lw)

    def mixture_log_v(self, n: int, k: int, alpha: float) -> float:
        """``log int v_{n,k}(alpha, theta) dmu(theta)``."""
        return float(logsumexp(self.log_weights + exact_log_v(self.nodes, n, k, alpha)))


def discretize(spec: MixingSpec) -> ParticleMeasure:
    """Realize ``spec`` as a finite particle measure.

    Atoms map one-to-one, the uniform law uses Gauss-Legendre nodes, and the
    half-normal / half-t laws use equal-probability quantile nodes of the
    law truncated at ``spec.q_trunc``.
    """
    nodes, weights = _discretize_cached(spec)
    with np.errstate(divide="ignore"):
        return ParticleMeasure(nodes.copy(), np.log(weights))


@functools.lru_cache(maxsize=64)
def _discretize_cached(spec: MixingSpec):
    kind, p, m = spec.kind, spec.params, spec.nodes
    if kind == "dirac":
        return np.array([p[0]]), np.array([1.0])
    if kind == "atoms":
        return np.array([t for t, _ in p]), np.array([w for _, w in p])
    if kind == "uniform":
        a, b = p
        if m == 1:
            return np.array([0.5 * (a + b)]), np.array([1.0])
        x, w = np.polynomial.legendre.leggauss(m)
        return 0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * w
    levels = spec.q_trunc * (np.arange(m) + 0.5) / m
    if kind == "halfnormal":
        nodes = np.array([p[0] * normal_quantile(0.5 * (1.0 + q)) for q in levels])
    else:
        nodes = np.array([half_t_quantile(q, p[0], p[1]) for q in levels])
    return nodes, np.full(m, 1.0 / m)


def _half_t_pdf(x, df):
    logc = gammaln(0.5 * (df + 1)) - gammaln(0.5 * df) - 0.5 * math.log(df * math.pi)
    return 2.0 * np.exp(logc - 0.5 * (df + 1) * np.log1p(x * x / df))


def half_t_cdf(x: float, df: float) -> float:
    """CDF of ``|T|`` for a Student-t ``T``, by adaptive quadrature."""
    if x <= 0:
        return 0.0
    if x <= 1.0:
        val, _ = integrate.quad(_half_t_pdf, 0.0, x, args=(df,), epsabs=1e-14, epsrel=1e-13)
        return val
    # integrate the smaller piece so that quantiles near 1 keep their digits
    tail, _ = integrate.quad(_half_t_pdf, x, np.inf, args=(df,), epsabs=1e-15, epsrel=1e-12)
    return 1.0 - tail


def half_t_quantile(p: float, df: float, scale: float = 1.0) -> float:
    """Quantile of ``scale * |T|`` by bisection on :func:`half_t_cdf`."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    hi = 1.0
    while half_t_cdf(hi, df) < p:
        hi *= 2.0
        if hi > 1e300:
            raise FloatingPointError("half-t quantile bracket overflow")
    x = optimize.bisect(lambda t: half_t_cdf(t, df) - p, 0.0, hi, xtol=1e-14, rtol=1e-13,
                        maxiter=2000)
    return scale * x
