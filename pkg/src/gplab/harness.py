"""Replicated Monte Carlo experiments.

Four experiment kinds are supported:

``DiversityHist``
    distribution of ``k_n / n**alpha`` (histogram, kernel mode count, moment band).
``QQ``
    the three normalized statistics (QMLE, total variation, KL) against their
    normal, half-normal and chi-square(1) limits.
``Coverage``
    coverage of the local interval on a uniformly drawn admissible subset.
``RateSweep``
    mean total variation of the QMLE and frequency estimators at
    ``n/8, n/4, n/2, n`` along each trajectory, with log-log slopes.

Replicate ``r`` draws from its own generator seeded by ``(master_seed, r)``
and results are sorted by id, so the output does not depend on ``threads``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.stats import gaussian_kde

from gplab.errors import BoundaryError, ConfigError, MembershipError, NumericalError
from gplab.mixing import MixingSpec
from gplab.partition import (PartitionState, diversity_moment_band, make_rng,
                             replicate_seed)
from gplab.predict import (SimplexKind, delta_rule, estimate_simplex, kl, local_ci,
                           sample_subset_In, subset_mass, tv)
from gplab.qmle import qmle
from gplab.sibuya import fisher_info
from gplab.stats import (chi2_1_cdf, chi2_1_quantile, half_normal_cdf, half_normal_quantile,
                         ks_distance, normal_cdf, normal_quantile, qq_pairs)

EXPERIMENTS = ("DiversityHist", "QQ", "Coverage", "RateSweep")
DELTA_RULES = ("k_pow", "sqrt_log")
PRESETS = {"desk": 4}
QQ_LEVELS = 199
SWEEP_FRACTIONS = (8, 4, 2, 1)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: int
    replicates: int
    alpha: float
    mixing: MixingSpec
    eps: float = 0.05
    delta_rule: str = "k_pow"
    master_seed: int = 0
    threads: int = 1
    output_path: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.experiment == "RateSweep" and self.n < 8:
            raise ConfigError("RateSweep needs n >= 8")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if not 0.0 < self.eps < 1.0:
            raise ConfigError("eps must lie in (0, 1)")
        if self.delta_rule not in DELTA_RULES:
            raise ConfigError(f"delta_rule must be one of {DELTA_RULES}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        self.mixing.check_alpha(self.alpha)

    def with_preset(self, preset: str | None) -> ExperimentConfig:
        """Scale ``n`` and ``replicates`` down for a named preset."""
        if preset is None:
            return self
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        f = PRESETS[preset]
        return dataclasses.replace(self, n=max(self.n // f, 8), replicates=max(self.replicates // f, 1))

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["mixing"] = self.mixing.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        d = dict(d)
        mix = d.get("mixing")
        if isinstance(mix, str):
            d["mixing"] = MixingSpec.parse(mix)
        elif isinstance(mix, dict):
            d["mixing"] = MixingSpec.from_dict(mix)
        else:
            raise ConfigError("config needs a mixing specification")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad config JSON: {exc}") from exc


@dataclass
class ReplicateRecord:
    replicate_id: int
    n: int
    k_n: int = 0
    diversity: float = math.nan
    alpha_hat: float = math.nan
    boundary: str = ""
    stat_qmle: float = math.nan
    stat_tv: float = math.nan
    stat_kl: float = math.nan
    tv: float = math.nan
    kl: float = math.nan
    tv_freq: float = math.nan
    covered: bool | None = None
    subset_size: int = 0
    error: str = ""
    sweep: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return bool(self.error)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[ReplicateRecord]
    summary: dict[str, Any]


def sweep_levels(n: int) -> list[int]:
    return [n // f for f in SWEEP_FRACTIONS]


def _estimation(rec: ReplicateRecord, state: PartitionState, alpha: float, info: float):
    """Fill the QMLE-based statistics of ``rec`` from ``state``."""
    stats = state.suff_stats()
    res = qmle(stats)
    n, k = stats.n, stats.k_n
    rec.alpha_hat = res.alpha_hat
    rec.boundary = res.boundary.value
    rec.stat_qmle = math.sqrt(k * info) * (res.alpha_hat - alpha)
    pair = estimate_simplex(state, res.alpha_hat, SimplexKind.QMLE_ZERO)
    rec.tv = tv(pair)
    rec.kl = kl(pair)
    rec.stat_tv = n * math.sqrt(info / k) * rec.tv
    rec.stat_kl = 2.0 * n / alpha * rec.kl
    rec.tv_freq = tv(estimate_simplex(state, res.alpha_hat, SimplexKind.FREQUENCY))
    return res


def run_replicate(cfg: ExperimentConfig, rid: int) -> ReplicateRecord:
    """One replicate of ``cfg``; errors are recorded on the returned record."""
    rec = ReplicateRecord(rid, cfg.n)
    try:
        rng = make_rng(replicate_seed(cfg.master_seed, rid))
        state = PartitionState(cfg.alpha, cfg.mixing, seed=rng, capacity=cfg.n)
        info = fisher_info(cfg.alpha).value
        if cfg.experiment == "RateSweep":
            for m in sweep_levels(cfg.n):
                state.run_to(m)
                _estimation(rec, state, cfg.alpha, info)
                rec.sweep[m] = (rec.tv, rec.tv_freq)
        else:
            state.run_to(cfg.n)
        rec.k_n = state.k
        rec.diversity = state.diversity()
        if cfg.experiment in ("QQ", "Coverage"):
            res = _estimation(rec, state, cfg.alpha, info)
            if cfg.experiment == "Coverage":
                if not res.interior:
                    raise BoundaryError("CI undefined at boundary")
                sizes = state.block_sizes
                delta = delta_rule(state.k, state.n, cfg.delta_rule)
                subset = sample_subset_In(sizes, delta, rng)
                ci = local_ci(sizes, res.alpha_hat, cfg.eps, subset, delta)
                rec.subset_size = len(subset)
                rec.covered = ci.covers(subset_mass(state.true_simplex(), subset))
    except (NumericalError, BoundaryError, MembershipError, FloatingPointError,
            ValueError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run every replicate, summarize, and write the CSV and JSON summary."""
    fisher_info(cfg.alpha)  # warm the cache before fanning out
    ids = range(cfg.replicates)
    if cfg.threads == 1:
        records = [run_replicate(cfg, r) for r in ids]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            records = list(pool.map(lambda r: run_replicate(cfg, r), ids))
    records.sort(key=lambda r: r.replicate_id)
    summary = summarize(cfg, records)
    if write and cfg.output_path:
        write_outputs(cfg, records, summary)
    return ExperimentResult(cfg, records, summary)


# -- summaries -----------------------------------------------------------------

def mean_se(x) -> dict[str, float]:
    x = np.asarray(x, dtype=float)
    m = x.size
    if m == 0:
        return {"mean": math.nan, "se": math.nan, "count": 0}
    se = float(x.std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    return {"mean": float(x.mean()), "se": se, "count": int(m)}


def kde_mode_count(x, grid_size: int = 512, min_height: float = 0.05) -> int:
    """Local maxima of a Gaussian KDE (Scott bandwidth) above ``min_height`` of the peak."""
    x = np.asarray(x, dtype=float)
    if x.size < 2 or np.ptp(x) == 0.0:
        return 1
    kde = gaussian_kde(x)
    pad = 0.1 * np.ptp(x)
    grid = np.linspace(x.min() - pad, x.max() + pad, grid_size)
    d = kde(grid)
    peak = (d[1:-1] > d[:-2]) & (d[1:-1] >= d[2:]) & (d[1:-1] >= min_height * d.max())
    return int(peak.sum())


def loglog_slope(ns, values) -> float:
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def _qq_block(values, cdf, quantile) -> dict[str, Any]:
    x = np.sort(np.asarray(values, dtype=float))
    probs, emp, ref = qq_pairs(x, quantile, QQ_LEVELS)
    return {"ks": ks_distance(x, cdf), **mean_se(x),
            "qq": {"prob": probs.tolist(), "empirical": emp.tolist(), "theoretical": ref.tolist()}}


def summarize(cfg: ExperimentConfig, records: list[ReplicateRecord]) -> dict[str, Any]:
    ok = [r for r in records if not r.failed]
    out: dict[str, Any] = {
        "config": cfg.to_dict(),
        "replicates": len(records),
        "failures": len(records) - len(ok),
        "failure_messages": sorted({r.error for r in records if r.failed})[:10],
    }
    if not ok:
        return out
    div = np.array([r.diversity for r in ok])
    out["k_n"] = mean_se([r.k_n for r in ok])
    out["diversity"] = {**mean_se(div),
                        "quantiles": dict(zip(("q05", "q25", "q50", "q75", "q95"),
                                              np.quantile(div, [.05, .25, .5, .75, .95]).tolist()))}
    if cfg.experiment == "DiversityHist":
        counts, edges = np.histogram(div, bins="auto")
        lo, hi = diversity_moment_band(cfg.mixing, cfg.alpha)
        out["histogram"] = {"counts": counts.tolist(), "edges": edges.tolist()}
        out["mode_count"] = kde_mode_count(div)
        out["moment_band"] = [lo, hi]
        out["mean_in_band"] = bool(lo <= div.mean() <= hi)
    elif cfg.experiment == "QQ":
        out["stat_qmle"] = _qq_block([r.stat_qmle for r in ok], normal_cdf, normal_quantile)
        out["stat_tv"] = _qq_block([r.stat_tv for r in ok], half_normal_cdf, half_normal_quantile)
        out["stat_kl"] = _qq_block([r.stat_kl for r in ok], chi2_1_cdf, chi2_1_quantile)
        out["boundary_count"] = sum(r.boundary != "Interior" for r in ok)
    elif cfg.experiment == "Coverage":
        cov = np.array([bool(r.covered) for r in ok], dtype=float)
        p = float(cov.mean())
        out["coverage"] = {"rate": p, "se": math.sqrt(p * (1 - p) / cov.size),
                           "count": int(cov.size), "nominal": 1.0 - cfg.eps}
        out["subset_size"] = mean_se([r.subset_size for r in ok])
    elif cfg.experiment == "RateSweep":
        levels = sweep_levels(cfg.n)
        tv_q = [mean_se([r.sweep[m][0] for r in ok]) for m in levels]
        tv_f = [mean_se([r.sweep[m][1] for r in ok]) for m in levels]
        out["sweep"] = {
            "n": levels,
            "tv_qmle": tv_q,
            "tv_freq": tv_f,
            "slope_qmle": loglog_slope(levels, [t["mean"] for t in tv_q]),
            "slope_freq": loglog_slope(levels, [t["mean"] for t in tv_f]),
            "target_qmle": -(1.0 - cfg.alpha / 2.0),
            "target_freq": -(1.0 - cfg.alpha),
        }
    return out


# -- output --------------------------------------------------------------------

CSV_FIELDS = ["replicate_id", "n", "k_n", "diversity", "alpha_hat", "boundary", "stat_qmle",
              "stat_tv", "stat_kl", "tv", "kl", "tv_freq", "covered", "subset_size", "error"]


def summary_path(output_path) -> Path:
    return Path(output_path).with_suffix(".summary.json")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_outputs(cfg: ExperimentConfig, records: list[ReplicateRecord],
                  summary: dict[str, Any]) -> tuple[Path, Path]:
    path = Path(cfg.output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    levels = sweep_levels(cfg.n) if cfg.experiment == "RateSweep" else []
    header = CSV_FIELDS + [f"tv_n{m}" for m in levels] + [f"tv_freq_n{m}" for m in levels]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in records:
            row = [_cell(getattr(r, f)) for f in CSV_FIELDS]
            row += [_cell(r.sweep[m][0]) if m in r.sweep else "" for m in levels]
            row += [_cell(r.sweep[m][1]) if m in r.sweep else "" for m in levels]
            w.writerow(row)
    spath = summary_path(path)
    with open(spath, "w") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
    return path, spath


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
