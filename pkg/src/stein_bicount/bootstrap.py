"""Parametric BPoi bootstrap p-values and warp-speed Monte Carlo studies.

Warp-speed: each Monte Carlo replication draws one data set, fits the null
to it and draws a single bootstrap data set from the fit. The pooled
bootstrap statistics give one critical value for all replications.

Every replication draws from its own stream keyed by
``(seed, purpose, scenario key, n, replication)``, so the engine may split
replications across any number of workers without changing a single draw.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as _rng
from .distributions import BivariateSample, BPoiParams, DistributionSpec, draw
from .errors import DegenerateSample
from .inference import (
    TestReport,
    fit_bpoi_null,
    fit_null_batch,
    moments_batch,
    summarize,
    t1,
    t1_batch,
    t2,
    t2_batch,
    t3,
    t3_batch,
    t_star,
    t_star_batch,
    t_star_p_value,
)
from .stein import get_weight, is_alternating

logger = logging.getLogger(__name__)

NULL_FAMILIES = ("bpoi", "bpoi-symmetric")
DEFAULT_NULL = {"tstar": "bpoi", "t1": "bpoi", "t2": "bpoi-symmetric", "t3": "bpoi-symmetric"}
# T1 is compared with equal-tailed bootstrap quantiles; its null law is right
# skewed, so a symmetric cut on |T1 - 1| would misallocate the level.
TAILS = {"tstar": "upper", "t1": "two-sided", "t2": "upper", "t3": "upper"}
CHUNK = 256


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 1000
    alpha: float = 0.05
    seed: int = 0
    null_family: Optional[str] = None  # None: per-statistic default
    workers: Optional[int] = None

    def __post_init__(self) -> None:
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.null_family is not None and self.null_family not in NULL_FAMILIES:
            raise ValueError(f"null_family must be one of {NULL_FAMILIES}")

    def null_for(self, statistic_id: str) -> str:
        return self.null_family or DEFAULT_NULL[statistic_id]


def worker_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("STEIN_BICOUNT_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _map_chunks(fn, total: int, workers: int) -> list:
    """Apply ``fn(start, stop)`` over replication chunks; results in index order."""
    bounds = [(s, min(s + CHUNK, total)) for s in range(0, total, CHUNK)]
    if workers <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


# --------------------------------------------------------------------------
# Statistics with their rejection direction
# --------------------------------------------------------------------------


def _check_statistic(statistic_id: str, weight_id: Optional[str]) -> None:
    if statistic_id not in DEFAULT_NULL:
        raise ValueError(f"unknown statistic {statistic_id!r}; expected one of {sorted(DEFAULT_NULL)}")
    if statistic_id != "tstar":
        get_weight(weight_id or "")


def directional(statistic_id: str, value, n: int):
    """Map a raw statistic to the scale the test rejects on: ``n T*``, ``T2``
    and ``|T3|`` reject when large, ``T1`` when outside both bootstrap tails."""
    if statistic_id == "tstar":
        return n * np.asarray(value)
    if statistic_id == "t1":
        return np.asarray(value, dtype=float)
    if statistic_id == "t2":
        return np.asarray(value)
    if statistic_id == "t3":
        return np.abs(np.asarray(value))
    raise ValueError(f"unknown statistic {statistic_id!r}")


def batch_directional(statistic_id: str, weight_id: Optional[str], x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Directional statistic for each row of ``(M, n)`` arrays; NaN where undefined."""
    n = x1.shape[-1]
    if statistic_id == "tstar":
        raw = t_star_batch(x1, x2)
    else:
        f = get_weight(weight_id)
        kernel = {"t1": t1_batch, "t2": t2_batch, "t3": t3_batch}[statistic_id]
        raw = kernel(x1, x2, f)
    return directional(statistic_id, raw, n)


def observed_statistic(sample: BivariateSample, statistic_id: str, weight_id: Optional[str]) -> float:
    """Raw statistic on one data set; raises DegenerateSample when undefined."""
    if statistic_id == "tstar":
        return t_star(summarize(sample))
    f = get_weight(weight_id)
    if statistic_id == "t1":
        summarize(sample)
        return t1(sample, f)
    if statistic_id == "t2":
        summarize(sample)
        return t2(sample, f)
    if statistic_id == "t3":
        if not is_alternating(f):
            raise ValueError(f"{weight_id} is not alternating")
        return t3(sample, f)
    raise ValueError(f"unknown statistic {statistic_id!r}")


# --------------------------------------------------------------------------
# Single data set
# --------------------------------------------------------------------------


def chi2_test(sample: BivariateSample) -> TestReport:
    """``T*`` with the chi-square(2) approximation for ``n T*``."""
    t = t_star(summarize(sample))
    return TestReport("tstar", None, t, t_star_p_value(t, sample.n), "chi2", None, None)


def tail_p_value(boot: np.ndarray, observed: float, tail: str) -> float:
    """``(1 + #{boot >= obs}) / (B + 1)``; the two-sided version doubles the smaller tail."""
    upper = (1 + int(np.sum(boot >= observed))) / (boot.size + 1)
    if tail == "upper":
        return upper
    lower = (1 + int(np.sum(boot <= observed))) / (boot.size + 1)
    return min(1.0, 2.0 * min(lower, upper))


def _draw_null_block(null: BPoiParams, n: int, seed: int, purpose: int, start: int, stop: int):
    x1 = np.empty((stop - start, n), np.int64)
    x2 = np.empty((stop - start, n), np.int64)
    for i, b in enumerate(range(start, stop)):
        x1[i], x2[i] = draw(null, n, _rng.stream(seed, purpose, b))
    return x1, x2


def bootstrap_p_value(
    sample: BivariateSample, statistic_id: str, weight_id: Optional[str], cfg: BootstrapConfig
) -> TestReport:
    """Parametric bootstrap p-value ``(1 + #{boot >= obs}) / (B + 1)`` under a fitted BPoi null."""
    _check_statistic(statistic_id, weight_id)
    observed = observed_statistic(sample, statistic_id, weight_id)
    n = sample.n
    obs_dir = float(directional(statistic_id, observed, n))
    fitted = fit_bpoi_null(summarize(sample), symmetric=cfg.null_for(statistic_id) == "bpoi-symmetric")
    if fitted.clipped:
        logger.info("null fit clipped %s", ", ".join(fitted.clipped))
    null = fitted.params
    workers = worker_count(cfg.workers)

    def block(start, stop):
        x1, x2 = _draw_null_block(null, n, cfg.seed, _rng.PVALUE, start, stop)
        return batch_directional(statistic_id, weight_id, x1, x2)

    boot = np.concatenate(_map_chunks(block, cfg.B, workers))
    bad = np.flatnonzero(np.isnan(boot))
    for b in bad:
        x1, x2 = draw(null, n, _rng.stream(cfg.seed, _rng.REDRAW_BOOT, int(b)))
        boot[b] = batch_directional(statistic_id, weight_id, x1[None], x2[None])[0]
    failed = int(np.isnan(boot).sum())
    if bad.size:
        logger.warning("%d bootstrap statistics undefined, %d still undefined after redraw", bad.size, failed)
    if failed == cfg.B:
        raise DegenerateSample(f"all {cfg.B} bootstrap statistics are undefined under the fitted null")
    p = tail_p_value(boot[~np.isnan(boot)], obs_dir, TAILS[statistic_id])
    return TestReport(statistic_id, weight_id, observed, p, "bootstrap", cfg.B, cfg.seed)


# --------------------------------------------------------------------------
# Warp-speed Monte Carlo
# --------------------------------------------------------------------------


def quantile(values, q: float) -> float:
    """Type-1 empirical quantile: the ``ceil(q M)``-th order statistic (1-based, at least the first)."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("quantile of an empty list")
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    k = max(1, math.ceil(q * v.size - 1e-12))
    return float(v[k - 1])


@dataclass
class Replications:
    """Data and single bootstrap draws of a warp-speed run, before any statistic is applied."""

    dist: DistributionSpec
    n: int
    M: int
    seed: int
    null_family: str
    x1: np.ndarray
    x2: np.ndarray
    b1: Optional[np.ndarray]
    b2: Optional[np.ndarray]
    nulls: Optional[np.ndarray]  # (M, 3) fitted (lambda0, lambda1, lambda2)

    @property
    def key(self) -> int:
        return _rng.text_key(self.dist.to_string())


def simulate(
    dist: DistributionSpec,
    n: int,
    M: int,
    seed: int,
    null_family: Optional[str] = "bpoi",
    workers: Optional[int] = None,
) -> Replications:
    """Draw ``M`` data sets and, unless ``null_family`` is None, one bootstrap set each."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    key = _rng.text_key(dist.to_string())
    boot_purpose = _rng.BOOT_SYMMETRY if null_family == "bpoi-symmetric" else _rng.BOOT_GOF
    symmetric = null_family == "bpoi-symmetric"

    def block(start, stop):
        m = stop - start
        x1 = np.empty((m, n), np.int64)
        x2 = np.empty((m, n), np.int64)
        for i, rep in enumerate(range(start, stop)):
            x1[i], x2[i] = draw(dist, n, _rng.stream(seed, _rng.DATA, key, n, rep))
        if null_family is None:
            return x1, x2, None, None, None
        mm1, mm2, _, _, _, r = moments_batch(x1, x2)
        lam = np.stack(fit_null_batch(mm1, mm2, r, symmetric), axis=-1)
        b1 = np.empty_like(x1)
        b2 = np.empty_like(x2)
        for i, rep in enumerate(range(start, stop)):
            gen = _rng.stream(seed, boot_purpose, key, n, rep)
            b1[i], b2[i] = _draw_bpoi(lam[i], n, gen)
        return x1, x2, b1, b2, lam

    parts = _map_chunks(block, M, worker_count(workers))
    cat = lambda j: None if parts[0][j] is None else np.concatenate([p[j] for p in parts])  # noqa: E731
    return Replications(dist, n, M, seed, null_family, cat(0), cat(1), cat(2), cat(3), cat(4))


def _draw_bpoi(lam: np.ndarray, n: int, gen: np.random.Generator):
    # lambda0 may be exactly zero after clipping; the BPoi type requires lambda1, lambda2 > 0 only
    z0 = gen.poisson(lam[0], n)
    return z0 + gen.poisson(lam[1], n), z0 + gen.poisson(lam[2], n)


@dataclass
class WarpSpeedRun:
    scenario: str
    n: int
    statistic: str
    weight: Optional[str]
    M: int
    alpha: float
    seed: int
    stats: np.ndarray
    boot_stats: Optional[np.ndarray]
    critical_value: float
    rejection_rate: float
    method: str = "warp-speed"
    failures: dict = field(default_factory=dict)
    critical_lower: Optional[float] = None  # two-sided tests only

    def to_json(self) -> str:
        return json.dumps(
            {
                "scenario": self.scenario,
                "n": self.n,
                "statistic": self.statistic,
                "weight": self.weight,
                "M": self.M,
                "alpha": self.alpha,
                "seed": self.seed,
                "rejection_rate": self.rejection_rate,
            }
        )


def evaluate(
    reps: Replications,
    statistic_id: str,
    weight_id: Optional[str],
    alpha: float,
    scenario_id: Optional[str] = None,
    method: str = "warp-speed",
) -> WarpSpeedRun:
    """Rejection rate of one statistic on simulated replications.

    ``method="chi2"`` (``tstar`` only) rejects when the chi-square(2) p-value
    is below ``alpha`` and ignores the bootstrap draws.
    """
    _check_statistic(statistic_id, weight_id)
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    n, key = reps.n, reps.key
    stats = batch_directional(statistic_id, weight_id, reps.x1, reps.x2)
    failures = {"data_redrawn": 0, "data_failed": 0, "boot_redrawn": 0, "boot_failed": 0}
    for m in np.flatnonzero(np.isnan(stats)):
        failures["data_redrawn"] += 1
        x1, x2 = draw(reps.dist, n, _rng.stream(reps.seed, _rng.REDRAW_DATA, key, n, int(m)))
        stats[m] = batch_directional(statistic_id, weight_id, x1[None], x2[None])[0]
    # statistics still undefined stay NaN and never reject
    failures["data_failed"] = int(np.isnan(stats).sum())
    name = scenario_id or reps.dist.to_string()

    if method == "chi2":
        if statistic_id != "tstar":
            raise ValueError("the chi-square path exists for tstar only")
        crit = -2.0 * math.log(alpha)  # stats are n T*
        rate = float(np.mean(stats > crit))
        _log_failures(name, statistic_id, weight_id, failures)
        return WarpSpeedRun(name, n, statistic_id, None, reps.M, alpha, reps.seed, stats, None, crit, rate, "chi2", failures)

    if reps.b1 is None:
        raise ValueError("replications were simulated without bootstrap draws")
    boot = batch_directional(statistic_id, weight_id, reps.b1, reps.b2)
    for m in np.flatnonzero(np.isnan(boot)):
        failures["boot_redrawn"] += 1
        gen = _rng.stream(reps.seed, _rng.REDRAW_BOOT, key, n, int(m))
        b1, b2 = _draw_bpoi(reps.nulls[m], n, gen)
        boot[m] = batch_directional(statistic_id, weight_id, b1[None], b2[None])[0]
    failures["boot_failed"] = int(np.isnan(boot).sum())
    valid = boot[~np.isnan(boot)]
    if valid.size == 0:
        raise DegenerateSample(f"{name}: every bootstrap statistic is undefined")
    lower = None
    if TAILS[statistic_id] == "two-sided":
        lower, crit = quantile(valid, alpha / 2), quantile(valid, 1 - alpha / 2)
        reject = (stats < lower) | (stats > crit)
    else:
        crit = quantile(valid, 1 - alpha)
        reject = stats > crit
    rate = float(np.mean(reject))
    _log_failures(name, statistic_id, weight_id, failures)
    return WarpSpeedRun(
        name, n, statistic_id, weight_id, reps.M, alpha, reps.seed, stats, boot, crit, rate, method, failures, lower
    )


def _log_failures(name, statistic_id, weight_id, failures) -> None:
    if failures["data_redrawn"] or failures["boot_redrawn"]:
        logger.warning("%s %s/%s: undefined statistics %s", name, statistic_id, weight_id, failures)


def warp_speed_study(
    scenario,
    n: int,
    statistic_id: str,
    weight_id: Optional[str],
    M: int,
    cfg: BootstrapConfig,
    method: str = "warp-speed",
    inner_B: Optional[int] = None,
) -> WarpSpeedRun:
    """Rejection rate of one test on ``M`` replications from ``scenario``.

    ``scenario`` is a distribution or an object with ``id`` and ``dist``.
    ``inner_B`` switches to a full bootstrap (``inner_B`` draws) inside every
    replication, for spot checks of the warp-speed shortcut at small ``M``.
    """
    if M < 100:
        raise ValueError(f"M must be >= 100, got {M}")
    _check_statistic(statistic_id, weight_id)
    dist = getattr(scenario, "dist", scenario)
    name = getattr(scenario, "id", None)
    if inner_B is not None:
        return _full_bootstrap_study(dist, name, n, statistic_id, weight_id, M, inner_B, cfg)
    null = None if method == "chi2" else cfg.null_for(statistic_id)
    reps = simulate(dist, n, M, cfg.seed, null, cfg.workers)
    return evaluate(reps, statistic_id, weight_id, cfg.alpha, name, method)


def _full_bootstrap_study(dist, name, n, statistic_id, weight_id, M, inner_B, cfg) -> WarpSpeedRun:
    reps = simulate(dist, n, M, cfg.seed, None, cfg.workers)
    key = reps.key
    symmetric = cfg.null_for(statistic_id) == "bpoi-symmetric"
    stats = batch_directional(statistic_id, weight_id, reps.x1, reps.x2)
    pvals = np.ones(M)
    for m in range(M):
        if np.isnan(stats[m]):
            continue
        try:
            fitted = fit_bpoi_null(summarize(BivariateSample(reps.x1[m], reps.x2[m])), symmetric).params
        except DegenerateSample:
            continue
        b1 = np.empty((inner_B, n), np.int64)
        b2 = np.empty((inner_B, n), np.int64)
        for b in range(inner_B):
            b1[b], b2[b] = draw(fitted, n, _rng.stream(cfg.seed, _rng.PVALUE, key, n, m, b))
        boot = batch_directional(statistic_id, weight_id, b1, b2)
        pvals[m] = tail_p_value(boot[~np.isnan(boot)], stats[m], TAILS[statistic_id])
    rate = float(np.mean(pvals <= cfg.alpha))
    return WarpSpeedRun(name or dist.to_string(), n, statistic_id, weight_id, M, cfg.alpha, cfg.seed, stats, None, float("nan"), rate, "bootstrap")
