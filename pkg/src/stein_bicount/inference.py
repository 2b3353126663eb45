"""Summary statistics, bivariate-Poisson null fits and the Stein-type test statistics.

All statistics are moment plug-ins. The ``*_batch`` kernels work on arrays
whose last axis indexes observations, with optional probability weights on
that axis; a pmf grid enters through its flattened support and weights, so
the same formulas give sample values and exact population values. Batch
kernels return NaN where a statistic is undefined; the public single-data
functions raise ``DegenerateSample`` instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .distributions import BivariateSample, BPoiParams, TruncatedPmfGrid
from .errors import DegenerateSample
from .stein import WeightFunction, is_alternating

EPS = 1e-8

STATISTIC_IDS = ("tstar", "t1", "t2", "t3")


@dataclass(frozen=True)
class SummaryStats:
    """Plug-in moments; variances and covariance use the divide-by-n convention.

    ``n`` is None for population moments taken from a pmf grid.
    """

    n: Optional[int]
    m1: float
    m2: float
    s1sq: float
    s2sq: float
    r: float
    cov: float

    def __post_init__(self) -> None:
        if self.s1sq < 0 or self.s2sq < 0:
            raise ValueError("variances must be non-negative")
        if not abs(self.r) <= 1 + 1e-12:
            raise ValueError(f"correlation must lie in [-1, 1], got {self.r}")

    @classmethod
    def from_moments(cls, n: Optional[int], m1: float, m2: float, s1sq: float, s2sq: float, r: float) -> "SummaryStats":
        return cls(n, m1, m2, s1sq, s2sq, r, r * math.sqrt(s1sq * s2sq))

    @property
    def dispersion_ratios(self) -> tuple[float, float]:
        return (self.s1sq / self.m1, self.s2sq / self.m2)


@dataclass(frozen=True)
class FittedBPoiNull:
    lambda0_hat: float
    lambda1_hat: float
    lambda2_hat: float
    clipped: tuple[str, ...] = ()

    @property
    def params(self) -> BPoiParams:
        return BPoiParams(self.lambda0_hat, self.lambda1_hat, self.lambda2_hat)


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class

    statistic_id: str
    weight_id: Optional[str]
    observed: float
    p_value: float
    method: str
    B: Optional[int]
    seed: Optional[int]

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value must lie in [0, 1], got {self.p_value}")
        if self.method not in ("chi2", "bootstrap", "warp-speed"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method != "chi2" and (self.B is None or self.seed is None):
            raise ValueError("resampling reports need B and seed")

    def to_json(self) -> str:
        return json.dumps(asdict(self))


# --------------------------------------------------------------------------
# Batch kernels
# --------------------------------------------------------------------------


def _avg(v: np.ndarray, w: Optional[np.ndarray]) -> np.ndarray:
    if w is None:
        return np.mean(v, axis=-1)
    return np.sum(v * w, axis=-1)


def moments_batch(x1: np.ndarray, x2: np.ndarray, w: Optional[np.ndarray] = None):
    """Means, divide-by-n variances, covariance and correlation along the last axis."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    m1 = _avg(x1, w)
    m2 = _avg(x2, w)
    d1 = x1 - np.expand_dims(m1, -1)
    d2 = x2 - np.expand_dims(m2, -1)
    v1 = np.maximum(_avg(d1 * d1, w), 0.0)
    v2 = np.maximum(_avg(d2 * d2, w), 0.0)
    cov = _avg(d1 * d2, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = cov / np.sqrt(v1 * v2)
    return m1, m2, v1, v2, cov, r


def t_star_from_moments(m1, m2, v1, v2, r):
    g1 = v1 - m1
    g2 = v2 - m2
    r2 = r * r
    num = m2**2 * g1**2 + m1**2 * g2**2 - 2 * m1 * m2 * g1 * g2 * r2
    den = 2 * m1**2 * m2**2 * (1 - r2 * r2)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    return np.where((den > 0) & (m1 > 0) & (m2 > 0), out, np.nan)


def t_star_batch(x1, x2, w=None):
    m1, m2, v1, v2, _, r = moments_batch(x1, x2, w)
    return t_star_from_moments(m1, m2, v1, v2, r)


def t1_batch(x1, x2, f: WeightFunction, w=None):
    m1, m2, _, _, _, r = moments_batch(x1, x2, w)
    lam0 = np.sqrt(m1 * m2) * r
    num = (m1 - lam0) * _avg(f(x1 + 1, x2), w) - (m2 - lam0) * _avg(f(x1, x2 + 1), w)
    den = _avg((x1 - x2) * f(x1, x2), w)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    return np.where(den != 0, out, np.nan)


def t2_batch(x1, x2, f: WeightFunction, w=None):
    m1, m2, _, _, _, r = moments_batch(x1, x2, w)
    lam = 0.5 * (m1 + m2) * (1 - r)
    fx = f(x1, x2)
    a = _avg(x1 * fx, w) - lam * _avg(f(x1 + 1, x2), w)
    b = _avg(x2 * fx, w) - lam * _avg(f(x1, x2 + 1), w)
    return np.abs(a) + np.abs(b)


def t3_batch(x1, x2, f: WeightFunction, w=None):
    return _avg(f(x1 + 1, x2), w) + _avg(f(x1, x2 + 1), w)


def fit_null_batch(m1, m2, r, symmetric: bool):
    """Vectorised null fit; undefined correlations are treated as zero."""
    r = np.nan_to_num(np.asarray(r, dtype=float), nan=0.0)
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if symmetric:
        m = 0.5 * (m1 + m2)
        lam = np.maximum(m * (1 - r), EPS)
        lam0 = np.maximum(m * r, 0.0)
        return lam0, lam, lam
    upper = np.maximum(np.minimum(m1, m2) - EPS, 0.0)
    lam0 = np.clip(np.sqrt(m1 * m2) * r, 0.0, upper)
    return lam0, np.maximum(m1 - lam0, EPS), np.maximum(m2 - lam0, EPS)


# --------------------------------------------------------------------------
# Public single-data API
# --------------------------------------------------------------------------


def _support(data):
    if isinstance(data, (BivariateSample, TruncatedPmfGrid)):
        return data.support()
    raise TypeError(f"expected BivariateSample or TruncatedPmfGrid, got {type(data).__name__}")


def summarize(sample: BivariateSample) -> SummaryStats:
    """Means, divide-by-n variances and Pearson correlation of a sample."""
    if sample.n < 2:
        raise DegenerateSample(f"need at least 2 pairs, got {sample.n}")
    m1, m2, v1, v2, cov, r = (float(v) for v in moments_batch(sample.x1, sample.x2))
    if v1 == 0 or v2 == 0:
        raise DegenerateSample(
            f"zero variance in coordinate {1 if v1 == 0 else 2} (m1={m1:g}, m2={m2:g}): correlation undefined"
        )
    return SummaryStats(sample.n, m1, m2, v1, v2, max(-1.0, min(1.0, r)), cov)


def population_stats(grid: TruncatedPmfGrid) -> SummaryStats:
    x, y, w = grid.support()
    m1, m2, v1, v2, cov, r = (float(v) for v in moments_batch(x, y, w))
    return SummaryStats(None, m1, m2, v1, v2, r, cov)


def fit_bpoi_null(stats: SummaryStats, symmetric: bool = False) -> FittedBPoiNull:
    """Moment fit of a BPoi null with ``lambda0 = sqrt(m1 m2) r``.

    The symmetric null uses ``lambda = m (1 - r)``, ``lambda0 = m r`` with
    ``m = (m1 + m2) / 2``. Clamping is recorded in ``clipped``.
    """
    clipped = []
    if symmetric:
        m = 0.5 * (stats.m1 + stats.m2)
        lam_raw, lam0_raw = m * (1 - stats.r), m * stats.r
        lam = max(lam_raw, EPS)
        lam0 = max(lam0_raw, 0.0)
        if lam != lam_raw:
            clipped.append("lambda")
        if lam0 != lam0_raw:
            clipped.append("lambda0")
        return FittedBPoiNull(lam0, lam, lam, tuple(clipped))
    raw = math.sqrt(stats.m1 * stats.m2) * stats.r
    upper = max(min(stats.m1, stats.m2) - EPS, 0.0)
    lam0 = min(max(raw, 0.0), upper)
    if lam0 != raw:
        clipped.append("lambda0")
    lams = []
    for i, m in ((1, stats.m1), (2, stats.m2)):
        lam = m - lam0
        if lam < EPS:
            lam = EPS
            clipped.append(f"lambda{i}")
        lams.append(lam)
    return FittedBPoiNull(lam0, lams[0], lams[1], tuple(clipped))


def t_star(stats: SummaryStats) -> float:
    """Dispersion-index statistic ``T*``; ``n T*`` is asymptotically chi-square(2)."""
    if stats.m1 <= 0 or stats.m2 <= 0:
        raise DegenerateSample("T* needs positive means")
    if abs(stats.r) >= 1:
        raise DegenerateSample("T* is undefined for |r| = 1")
    return float(t_star_from_moments(stats.m1, stats.m2, stats.s1sq, stats.s2sq, stats.r))


def chi2_2_sf(x: float) -> float:
    """Survival function of chi-square with 2 degrees of freedom."""
    return math.exp(-x / 2) if x > 0 else 1.0


def t_star_p_value(t: float, n: int) -> float:
    return chi2_2_sf(n * t)


def t1(data, f: WeightFunction) -> float:
    """Stein index ``T1;f``; equals 1 in population under any BPoi law."""
    x1, x2, w = _support(data)
    value = float(t1_batch(x1, x2, f, w))
    if math.isnan(value):
        raise DegenerateSample("T1 denominator E[(X1 - X2) f(X1, X2)] is zero (or correlation undefined)")
    return value


def t1_dispersion_closed_form(stats: SummaryStats) -> float:
    """``T1`` for ``f(x, y) = x - y`` written through moments (bivariate dispersion index).

    The covariance inside ``E[(X1 - X2)^2]`` is replaced by ``sqrt(m1 m2) r``,
    its value under the BPoi null, so this agrees with ``t1(data, F1)`` only
    when each variance equals its mean.
    """
    c = math.sqrt(stats.m1 * stats.m2) * stats.r
    d2 = (stats.m1 - stats.m2) ** 2
    den = stats.s1sq + stats.s2sq + d2 - 2 * c
    if den == 0:
        raise DegenerateSample("closed-form T1 denominator is zero")
    return (stats.m1 + stats.m2 + d2 - 2 * c) / den


def t2(data, f: WeightFunction) -> float:
    """Symmetric-BPoi statistic ``T2;f``; zero in population under ``BPoi(l0; l, l)``."""
    x1, x2, w = _support(data)
    if w is None and x1.size < 2:
        raise DegenerateSample("T2 needs at least 2 pairs")
    value = float(t2_batch(x1, x2, f, w))
    if math.isnan(value):
        raise DegenerateSample("T2 undefined: correlation undefined (zero variance)")
    return value


def t3(data, f: WeightFunction) -> float:
    """General symmetry statistic ``T3;f`` for an alternating ``f``."""
    if not is_alternating(f):
        raise ValueError(f"weight function {f.id!r} is not alternating")
    x1, x2, w = _support(data)
    return float(t3_batch(x1, x2, f, w))
