"""Bivariate count families: parameters, exact pmf grids, samplers and moments.

Four families are covered:

* ``BPoiParams``  -- bivariate Poisson ``(Z0 + Z1, Z0 + Z2)``
* ``BvbParams``   -- type-I bivariate binomial (sum of N bivariate Bernoullis)
* ``BnbParams``   -- bivariate negative binomial with pgf
  ``((1 - pi_dot) / (1 - pi1 s - pi2 t - pi0 s t)) ** nu``
* ``BHermParams`` -- bivariate Hermite ``(Z1 + 2 Z2 + Z5, Z3 + 2 Z4 + Z5)``

Joint pmfs are filled on a finite window ``[0..k1] x [0..k2]`` by the
first-order recursions that follow from each family's Stein identities
(indicator weight functions). Rows ``x >= 1`` use the first identity, the
``x = 0`` column uses the mirrored one.

The univariate NB convention throughout is ``NB(nu, p)`` with
``P(X = k) = C(nu + k - 1, k) p**nu (1 - p)**k`` and mean ``nu (1 - p) / p``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Union

import numpy as np

from . import rng as _rng
from .errors import (
    InvalidParams,
    NumericalHealthWarning,
    ParseError,
    TruncationError,
    UnsupportedParams,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_K = 500
SD_MULTIPLE = 12
CELL_SUM_TOL = 1e-12
CLAMP_WARN = 1e-12


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise InvalidParams(f"{name} must be finite, got {v!r}")


def _fmt(v: float) -> str:
    return repr(float(v))


# --------------------------------------------------------------------------
# Parameter types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BPoiParams:
    """``BPoi(lambda0; lambda1, lambda2)``; ``lambda0 = 0`` gives independence."""

    lambda0: float
    lambda1: float
    lambda2: float
    family: ClassVar[str] = "bpoi"

    def __post_init__(self) -> None:
        _check_finite(lambda0=self.lambda0, lambda1=self.lambda1, lambda2=self.lambda2)
        if self.lambda0 < 0:
            raise InvalidParams(f"lambda0 must be >= 0, got {self.lambda0}")
        if self.lambda1 <= 0:
            raise InvalidParams(f"lambda1 must be > 0, got {self.lambda1}")
        if self.lambda2 <= 0:
            raise InvalidParams(f"lambda2 must be > 0, got {self.lambda2}")

    @property
    def means(self) -> tuple[float, float]:
        return (self.lambda0 + self.lambda1, self.lambda0 + self.lambda2)

    @property
    def variances(self) -> tuple[float, float]:
        return self.means

    @property
    def cov(self) -> float:
        return self.lambda0

    def to_string(self) -> str:
        return f"bpoi:{_fmt(self.lambda0)},{_fmt(self.lambda1)},{_fmt(self.lambda2)}"


@dataclass(frozen=True)
class BvbParams:
    """``BVB(N; a1, a2, phi)`` stored through its four Bernoulli cell probabilities.

    Use :meth:`from_marginals` (third parameter ``a = p11``) or
    :meth:`from_correlation` (third parameter the Bernoulli correlation).
    """

    n_trials: int
    p11: float
    p10: float
    p01: float
    p00: float
    family: ClassVar[str] = "bvb"

    def __post_init__(self) -> None:
        if isinstance(self.n_trials, bool) or int(self.n_trials) != self.n_trials or self.n_trials < 1:
            raise InvalidParams(f"n_trials must be a positive integer, got {self.n_trials!r}")
        object.__setattr__(self, "n_trials", int(self.n_trials))
        cells = dict(p11=self.p11, p10=self.p10, p01=self.p01, p00=self.p00)
        _check_finite(**cells)
        for name, v in cells.items():
            if v < -CELL_SUM_TOL:
                raise InvalidParams(f"cell {name} must be >= 0, got {v}")
            # absorb rounding noise from the marginal parameterisation
            object.__setattr__(self, name, max(float(v), 0.0))
        total = self.p11 + self.p10 + self.p01 + self.p00
        if abs(total - 1.0) > CELL_SUM_TOL:
            raise InvalidParams(f"cells must sum to 1, got {total!r}")
        if not 0 < self.a1 < 1:
            raise InvalidParams(f"a1 = p10 + p11 must lie in (0, 1), got {self.a1}")
        if not 0 < self.a2 < 1:
            raise InvalidParams(f"a2 = p01 + p11 must lie in (0, 1), got {self.a2}")

    @classmethod
    def from_marginals(cls, n_trials: int, a1: float, a2: float, a: float) -> "BvbParams":
        """Cells from the marginal success probabilities and ``a = p11``."""
        return cls(n_trials, a, a1 - a, a2 - a, 1.0 - a1 - a2 + a)

    @classmethod
    def from_correlation(cls, n_trials: int, a1: float, a2: float, phi: float) -> "BvbParams":
        """Cells from the marginals and the Bernoulli correlation ``phi``."""
        _check_finite(a1=a1, a2=a2, phi=phi)
        if not (0 < a1 < 1 and 0 < a2 < 1):
            raise InvalidParams(f"a1, a2 must lie in (0, 1), got {a1}, {a2}")
        a = a1 * a2 + phi * math.sqrt(a1 * a2 * (1 - a1) * (1 - a2))
        return cls.from_marginals(n_trials, a1, a2, a)

    @property
    def a1(self) -> float:
        return self.p10 + self.p11

    @property
    def a2(self) -> float:
        return self.p01 + self.p11

    @property
    def a(self) -> float:
        return self.p11

    @property
    def phi(self) -> float:
        a1, a2 = self.a1, self.a2
        return (self.p11 - a1 * a2) / math.sqrt(a1 * a2 * (1 - a1) * (1 - a2))

    @property
    def cells(self) -> tuple[float, float, float, float]:
        return (self.p11, self.p10, self.p01, self.p00)

    @property
    def means(self) -> tuple[float, float]:
        return (self.n_trials * self.a1, self.n_trials * self.a2)

    @property
    def variances(self) -> tuple[float, float]:
        n = self.n_trials
        return (n * self.a1 * (1 - self.a1), n * self.a2 * (1 - self.a2))

    @property
    def cov(self) -> float:
        return self.n_trials * (self.p11 - self.a1 * self.a2)

    def to_string(self) -> str:
        return f"bvb:{self.n_trials},{_fmt(self.a1)},{_fmt(self.a2)},{_fmt(self.a)}"


@dataclass(frozen=True)
class BnbParams:
    """``BNB(nu; pi1, pi2, pi0)`` with ``pi_dot = pi0 + pi1 + pi2 < 1``.

    ``pi1`` or ``pi2`` may be zero (degenerate coordinate); ``pi0`` may be
    negative down to ``-pi1 * pi2``.
    """

    nu: float
    pi1: float
    pi2: float
    pi0: float
    family: ClassVar[str] = "bnb"

    def __post_init__(self) -> None:
        _check_finite(nu=self.nu, pi1=self.pi1, pi2=self.pi2, pi0=self.pi0)
        if self.nu <= 0:
            raise InvalidParams(f"nu must be > 0, got {self.nu}")
        for name, v in (("pi1", self.pi1), ("pi2", self.pi2)):
            if not 0 <= v < 1:
                raise InvalidParams(f"{name} must lie in [0, 1), got {v}")
        if self.pi0 < 0 and not self.pi0 > -self.pi1 * self.pi2:
            raise InvalidParams(f"pi0 must exceed -pi1*pi2 = {-self.pi1 * self.pi2}, got {self.pi0}")
        if not self.pi_dot < 1:
            raise InvalidParams(f"pi0 + pi1 + pi2 must be < 1, got {self.pi_dot}")
        if self.pi_dot <= 0:
            raise InvalidParams("pi0 + pi1 + pi2 must be > 0")

    @property
    def pi_dot(self) -> float:
        return self.pi0 + self.pi1 + self.pi2

    def marginal_success(self, coord: int) -> float:
        """Success probability of the NB marginal of ``X_coord``."""
        other = self.pi2 if coord == 1 else self.pi1
        return (1 - self.pi_dot) / (1 - other)

    @property
    def means(self) -> tuple[float, float]:
        q = 1 - self.pi_dot
        return (self.nu * (self.pi0 + self.pi1) / q, self.nu * (self.pi0 + self.pi2) / q)

    @property
    def variances(self) -> tuple[float, float]:
        m1, m2 = self.means
        return (m1 / self.marginal_success(1), m2 / self.marginal_success(2))

    @property
    def cov(self) -> float:
        return self.nu * (self.pi0 + self.pi1 * self.pi2) / (1 - self.pi_dot) ** 2

    def to_string(self) -> str:
        return f"bnb:{_fmt(self.nu)},{_fmt(self.pi1)},{_fmt(self.pi2)},{_fmt(self.pi0)}"


@dataclass(frozen=True)
class BHermParams:
    """Bivariate Hermite law of ``(Z1 + 2 Z2 + Z5, Z3 + 2 Z4 + Z5)``."""

    rates: tuple[float, float, float, float, float]
    family: ClassVar[str] = "bherm"

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.rates)
        if len(rates) != 5:
            raise InvalidParams(f"bherm needs five rates, got {len(rates)}")
        for i, r in enumerate(rates, start=1):
            _check_finite(**{f"lambda{i}": r})
            if r <= 0:
                raise InvalidParams(f"lambda{i} must be > 0, got {r}")
        object.__setattr__(self, "rates", rates)

    @property
    def means(self) -> tuple[float, float]:
        l1, l2, l3, l4, l5 = self.rates
        return (l1 + 2 * l2 + l5, l3 + 2 * l4 + l5)

    @property
    def variances(self) -> tuple[float, float]:
        l1, l2, l3, l4, l5 = self.rates
        return (l1 + 4 * l2 + l5, l3 + 4 * l4 + l5)

    @property
    def cov(self) -> float:
        return self.rates[4]

    def to_string(self) -> str:
        return "bherm:" + ",".join(_fmt(r) for r in self.rates)


DistributionSpec = Union[BPoiParams, BvbParams, BnbParams, BHermParams]


def parse_spec(text: str) -> DistributionSpec:
    """Parse ``bpoi:l0,l1,l2``, ``bvb:N,a1,a2,a``, ``bnb:nu,pi1,pi2,pi0`` or
    ``bherm:l1,...,l5``.

    Raises ParseError naming the offending token, InvalidParams when the
    numbers parse but violate a constraint.
    """
    family, sep, rest = text.strip().partition(":")
    family = family.lower()
    arity = {"bpoi": 3, "bvb": 4, "bnb": 4, "bherm": 5}
    if not sep or family not in arity:
        raise ParseError(f"unknown family token {family!r}; expected one of {sorted(arity)}")
    tokens = [t.strip() for t in rest.split(",")]
    if len(tokens) != arity[family]:
        raise ParseError(f"{family} takes {arity[family]} comma-separated values, got {len(tokens)} in {rest!r}")
    values = []
    for tok in tokens:
        try:
            values.append(float(tok))
        except ValueError:
            raise ParseError(f"cannot parse number from token {tok!r}") from None
    if family == "bpoi":
        return BPoiParams(*values)
    if family == "bvb":
        n = values[0]
        if n != int(n):
            raise ParseError(f"N must be an integer, got token {tokens[0]!r}")
        return BvbParams.from_marginals(int(n), *values[1:])
    if family == "bnb":
        return BnbParams(*values)
    return BHermParams(tuple(values))


# --------------------------------------------------------------------------
# Truncated pmf grids
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedPmfGrid:
    """Joint probabilities on ``[0..k1] x [0..k2]`` plus the mass left outside."""

    probs: np.ndarray
    mass_deficit: float = field(init=False)

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("probs must be a 2-d array")
        lowest = float(p.min()) if p.size else 0.0
        if lowest < -CLAMP_WARN:
            warnings.warn(
                f"pmf recursion produced a negative entry {lowest:.3e}; clamped to 0",
                NumericalHealthWarning,
                stacklevel=3,
            )
        np.clip(p, 0.0, None, out=p)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "mass_deficit", float(1.0 - p.sum()))

    @property
    def k1(self) -> int:
        return self.probs.shape[0] - 1

    @property
    def k2(self) -> int:
        return self.probs.shape[1] - 1

    def prob(self, x: int, y: int) -> float:
        if 0 <= x <= self.k1 and 0 <= y <= self.k2:
            return float(self.probs[x, y])
        return 0.0

    def support(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened ``(x, y, weight)`` arrays covering the window."""
        x, y = np.meshgrid(np.arange(self.k1 + 1), np.arange(self.k2 + 1), indexing="ij")
        return x.ravel(), y.ravel(), self.probs.ravel()

    def expect(self, g: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        """Truncated expectation ``sum g(x, y) p(x, y)`` over the window."""
        x = np.arange(self.k1 + 1)[:, None]
        y = np.arange(self.k2 + 1)[None, :]
        vals = np.broadcast_to(np.asarray(g(x, y), dtype=float), self.probs.shape)
        return float(np.sum(vals * self.probs))

    def marginal(self, coord: int) -> np.ndarray:
        return self.probs.sum(axis=1 if coord == 1 else 0)

    def to_csv(self) -> str:
        lines = ["x,y,prob"]
        for x in range(self.k1 + 1):
            for y in range(self.k2 + 1):
                lines.append(f"{x},{y},{float(self.probs[x, y])!r}")
        return "\n".join(lines) + "\n"


def _check_window(k1: int, k2: int) -> None:
    for name, k in (("k1", k1), ("k2", k2)):
        if int(k) != k or k < 0:
            raise ValueError(f"{name} must be a non-negative integer, got {k!r}")


def _auto_k(mean: float, var: float) -> int:
    return int(min(MAX_K, math.ceil(mean + SD_MULTIPLE * math.sqrt(var)) + 1))


def _grid_with_tolerance(
    build: Callable[[int, int], np.ndarray],
    dist: DistributionSpec,
    k1: int | None,
    k2: int | None,
    tol: float | None,
) -> TruncatedPmfGrid:
    """Build a grid on the requested window, or grow the default window until
    the mass deficit is within ``tol``."""
    auto = k1 is None and k2 is None
    if k1 is None:
        k1 = _auto_k(dist.means[0], dist.variances[0])
    if k2 is None:
        k2 = _auto_k(dist.means[1], dist.variances[1])
    _check_window(k1, k2)
    grid = TruncatedPmfGrid(build(int(k1), int(k2)))
    while auto and tol is not None and grid.mass_deficit > tol and max(k1, k2) < MAX_K:
        k1, k2 = min(2 * k1, MAX_K), min(2 * k2, MAX_K)
        grid = TruncatedPmfGrid(build(k1, k2))
    if tol is not None and grid.mass_deficit > tol:
        raise TruncationError(
            f"mass outside [0..{k1}]x[0..{k2}] is {grid.mass_deficit:.3e} > tolerance {tol:.1e}"
        )
    return grid


def _first_order_row(c: np.ndarray, rho: float) -> np.ndarray:
    """Solve ``p[y] = rho * p[y-1] + c[y]`` with ``p[-1] = 0``."""
    out = np.empty_like(c)
    prev = 0.0
    for y in range(c.size):
        prev = rho * prev + c[y]
        out[y] = prev
    return out


def _shift_down(row: np.ndarray) -> np.ndarray:
    """``row[y-1]`` aligned at ``y`` with zero fill."""
    out = np.zeros_like(row)
    out[1:] = row[:-1]
    return out


def _bpoi_recursion(params: BPoiParams, k1: int, k2: int) -> np.ndarray:
    l0, l1, l2 = params.lambda0, params.lambda1, params.lambda2
    p = np.zeros((k1 + 1, k2 + 1))
    p[0, 0] = math.exp(-l0 - l1 - l2)
    for y in range(1, k2 + 1):
        p[0, y] = l2 * p[0, y - 1] / y
    for x in range(1, k1 + 1):
        p[x] = (l1 * p[x - 1] + l0 * _shift_down(p[x - 1])) / x
    return p


def bpoi_pmf_grid(
    params: BPoiParams, k1: int | None = None, k2: int | None = None, tol: float | None = DEFAULT_TOL
) -> TruncatedPmfGrid:
    """Bivariate Poisson pmf from ``x p(x,y) = l1 p(x-1,y) + l0 p(x-1,y-1)``.

    With both windows omitted, the window is chosen (and grown) so that the
    mass deficit is at most ``tol``. ``tol=None`` disables the check.
    """
    if not isinstance(params, BPoiParams):
        raise InvalidParams(f"expected BPoiParams, got {type(params).__name__}")
    return _grid_with_tolerance(lambda a, b: _bpoi_recursion(params, a, b), params, k1, k2, tol)


def _bvb_recursion(params: BvbParams) -> np.ndarray:
    n = params.n_trials
    p11, p10, p01, p00 = params.cells
    p = np.zeros((n + 1, n + 1))
    p[0, 0] = p00**n
    for y in range(1, n + 1):
        p[0, y] = p01 * (n - y + 1) * p[0, y - 1] / (p00 * y)
    for x in range(1, n + 1):
        c = (n - x + 1) * (p10 * p[x - 1] + p11 * _shift_down(p[x - 1])) / (p00 * x)
        p[x] = _first_order_row(c, -p01 / p00)
    return p


def _bvb_multinomial(params: BvbParams) -> np.ndarray:
    """Multinomial sum over the number of (1,1) cells; exact for any cells.

    Every term is positive, so the sum is accurate to relative precision.
    """
    n = params.n_trials
    x = np.arange(n + 1)[:, None]
    y = np.arange(n + 1)[None, :]
    lfact = np.array([math.lgamma(k + 1) for k in range(n + 1)])

    def log_pow(base: float, k: np.ndarray) -> np.ndarray:
        if base == 0:
            return np.where(k == 0, 0.0, -np.inf)
        return k * math.log(base)

    p = np.zeros((n + 1, n + 1))
    for c in range(n + 1):
        c10, c01, c00 = x - c, y - c, n - x - y + c
        valid = (c10 >= 0) & (c01 >= 0) & (c00 >= 0)
        i, j, k = (np.where(valid, v, 0) for v in (c10, c01, c00))
        with np.errstate(invalid="ignore"):
            logt = (
                lfact[n] - lfact[c] - lfact[i] - lfact[j] - lfact[k]
                + log_pow(params.p11, np.array(c)) + log_pow(params.p10, i)
                + log_pow(params.p01, j) + log_pow(params.p00, k)
            )
        p += np.where(valid, np.exp(logt), 0.0)
    return p


# growth of rounding error in the recursion, ((1 + p10/p00)(1 + p01/p00))^N;
# beyond this bound the multinomial sum is used instead
BVB_MAX_AMPLIFICATION = 1e3
BVB_MIN_LOG_SEED = -690.0


def _bvb_support(params: BvbParams) -> np.ndarray:
    """Mask of reachable cells given which trial outcomes have zero probability.

    A cell (x, y) needs some count c of (1, 1) trials with
    ``max(0, x + y - N) <= c <= min(x, y)``; a zero cell probability pins the
    matching count to zero.
    """
    n = params.n_trials
    x = np.arange(n + 1)[:, None]
    y = np.arange(n + 1)[None, :]
    lo = np.maximum(0, x + y - n)
    hi = np.minimum(x, y)
    if params.p11 == 0:
        hi = np.minimum(hi, 0)
    if params.p10 == 0:
        lo, hi = np.maximum(lo, x), np.minimum(hi, x)
    if params.p01 == 0:
        lo, hi = np.maximum(lo, y), np.minimum(hi, y)
    if params.p00 == 0:
        lo = np.maximum(lo, x + y - n)
        hi = np.minimum(hi, x + y - n)
    return lo <= hi


def bvb_pmf_grid(params: BvbParams, allow_slow_path: bool = True) -> TruncatedPmfGrid:
    """Exact BVB pmf on ``[0..N]^2``.

    The recursion divides by ``p00`` and alternates in sign along the
    coordinate with the smaller ratio ``p01 / p00`` or ``p10 / p00``. When
    ``p00 = 0``, ``p00 ** N`` underflows or both ratios are too large, the
    multinomial sum is used instead (or InvalidParams raised if
    ``allow_slow_path`` is False).
    """
    if not isinstance(params, BvbParams):
        raise InvalidParams(f"expected BvbParams, got {type(params).__name__}")
    n = params.n_trials
    if params.p00 > 0:
        swap = params.p10 < params.p01
        growth = math.log1p(params.p10 / params.p00) + math.log1p(params.p01 / params.p00)
        # the recursion is seeded with p00 ** N, which must not underflow
        seed_ok = n * math.log(params.p00) > BVB_MIN_LOG_SEED
        if seed_ok and n * growth <= math.log(BVB_MAX_AMPLIFICATION):
            if swap:
                mirrored = BvbParams(n, params.p11, params.p01, params.p10, params.p00)
                probs = _bvb_recursion(mirrored).T
            else:
                probs = _bvb_recursion(params)
            # cancellation leaves rounding residue in unreachable cells
            probs[~_bvb_support(params)] = 0.0
            return TruncatedPmfGrid(probs)
        reason = f"p00 = {params.p00:g} too small for a stable recursion"
    else:
        reason = "p00 = 0"
    if not allow_slow_path:
        raise InvalidParams(f"{reason}: the BVB recursion is unusable and the slow path is disabled")
    logger.warning("BVB with %s: using multinomial enumeration (slow path)", reason)
    return TruncatedPmfGrid(_bvb_multinomial(params))


def _bnb_recursion(params: BnbParams, k1: int, k2: int) -> np.ndarray:
    nu, pi1, pi2, pi0 = params.nu, params.pi1, params.pi2, params.pi0
    p = np.zeros((k1 + 1, k2 + 1))
    p[0, 0] = (1 - params.pi_dot) ** nu
    for y in range(1, k2 + 1):
        p[0, y] = pi2 * (nu + y - 1) * p[0, y - 1] / y
    for x in range(1, k1 + 1):
        c = (nu + x - 1) * (pi1 * p[x - 1] + pi0 * _shift_down(p[x - 1])) / x
        p[x] = _first_order_row(c, pi2)
    return p


def _bnb_series(params: BnbParams, k1: int, k2: int) -> np.ndarray:
    """Coefficients of the pgf expanded as a negative-binomial series in
    ``u = pi1 s + pi2 t + pi0 s t``; valid for any sign of ``pi0``."""
    nu, pi1, pi2, pi0 = params.nu, params.pi1, params.pi2, params.pi0
    x = np.arange(k1 + 1)[:, None]
    y = np.arange(k2 + 1)[None, :]
    lg_nu = np.array([math.lgamma(nu + k) for k in range(k1 + k2 + 1)]) - math.lgamma(nu)
    lfact = np.array([math.lgamma(k + 1) for k in range(max(k1, k2) + 1)])

    def log_pow(base: float, k: np.ndarray) -> np.ndarray:
        if base == 0:
            return np.where(k == 0, 0.0, -np.inf)
        return k * math.log(abs(base))

    p = np.zeros((k1 + 1, k2 + 1))
    for l in range(min(k1, k2) + 1):
        i = x - l
        j = y - l
        valid = (i >= 0) & (j >= 0)
        ii, jj = np.where(valid, i, 0), np.where(valid, j, 0)
        logt = (
            lg_nu[ii + jj + l]
            + log_pow(pi1, ii)
            + log_pow(pi2, jj)
            + log_pow(pi0, np.array(l))
            - lfact[ii]
            - lfact[jj]
            - lfact[l]
        )
        sign = -1.0 if (pi0 < 0 and l % 2 == 1) else 1.0
        p += np.where(valid, sign * np.exp(logt), 0.0)
    return p * (1 - params.pi_dot) ** nu


def bnb_pmf_grid(
    params: BnbParams, k1: int | None = None, k2: int | None = None, tol: float | None = DEFAULT_TOL
) -> TruncatedPmfGrid:
    """BNB pmf from the Stein recursion; ``pi0 < 0`` uses the pgf series (slow path)."""
    if not isinstance(params, BnbParams):
        raise InvalidParams(f"expected BnbParams, got {type(params).__name__}")
    if params.pi0 >= 0:
        build = lambda a, b: _bnb_recursion(params, a, b)  # noqa: E731
    else:
        logger.warning("BNB with pi0 < 0: using pgf series expansion (slow path)")
        build = lambda a, b: _bnb_series(params, a, b)  # noqa: E731
    return _grid_with_tolerance(build, params, k1, k2, tol)


def _poisson_pmf(rate: float, k: int) -> np.ndarray:
    ks = np.arange(k + 1)
    lf = np.array([math.lgamma(i + 1) for i in range(k + 1)])
    return np.exp(ks * math.log(rate) - rate - lf)


def _plus_twice(rate_single: float, rate_double: float, k: int) -> np.ndarray:
    """pmf of ``A + 2 B`` on ``[0..k]`` for independent Poisson A, B."""
    pa = _poisson_pmf(rate_single, k)
    pb = _poisson_pmf(rate_double, k // 2)
    out = np.zeros(k + 1)
    for b, w in enumerate(pb):
        out[2 * b :] += w * pa[: k + 1 - 2 * b]
    return out


def _bherm_sum(params: BHermParams, k1: int, k2: int) -> np.ndarray:
    l1, l2, l3, l4, l5 = params.rates
    u = _plus_twice(l1, l2, k1)
    v = _plus_twice(l3, l4, k2)
    p5 = _poisson_pmf(l5, min(k1, k2))
    p = np.zeros((k1 + 1, k2 + 1))
    for z5, w in enumerate(p5):
        p[z5:, z5:] += w * np.outer(u[: k1 + 1 - z5], v[: k2 + 1 - z5])
    return p


def bherm_pmf_grid(
    params: BHermParams, k1: int | None = None, k2: int | None = None, tol: float | None = DEFAULT_TOL
) -> TruncatedPmfGrid:
    """Bivariate Hermite pmf by direct summation over ``(z2, z4, z5)``."""
    if not isinstance(params, BHermParams):
        raise InvalidParams(f"expected BHermParams, got {type(params).__name__}")
    return _grid_with_tolerance(lambda a, b: _bherm_sum(params, a, b), params, k1, k2, tol)


def pmf_grid(
    dist: DistributionSpec, k1: int | None = None, k2: int | None = None, tol: float | None = DEFAULT_TOL
) -> TruncatedPmfGrid:
    """Dispatch to the family's grid builder. BVB ignores the window (support is finite)."""
    if isinstance(dist, BPoiParams):
        return bpoi_pmf_grid(dist, k1, k2, tol)
    if isinstance(dist, BvbParams):
        return bvb_pmf_grid(dist)
    if isinstance(dist, BnbParams):
        return bnb_pmf_grid(dist, k1, k2, tol)
    if isinstance(dist, BHermParams):
        return bherm_pmf_grid(dist, k1, k2, tol)
    raise InvalidParams(f"unknown distribution type {type(dist).__name__}")


def pmf(dist: DistributionSpec, x: int, y: int) -> float:
    """Single joint probability (no truncation check needed)."""
    if x < 0 or y < 0:
        return 0.0
    if isinstance(dist, BvbParams):
        return bvb_pmf_grid(dist).prob(x, y)
    return pmf_grid(dist, x, y, tol=None).prob(x, y)


# --------------------------------------------------------------------------
# Samples
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BivariateSample:
    """``n`` pairs of non-negative counts with provenance."""

    x1: np.ndarray
    x2: np.ndarray
    seed: int | None = None
    source: str | None = None

    def __post_init__(self) -> None:
        x1 = np.array(self.x1, dtype=np.int64).ravel()
        x2 = np.array(self.x2, dtype=np.int64).ravel()
        if x1.shape != x2.shape:
            raise ValueError("x1 and x2 must have equal length")
        if x1.size and (x1.min() < 0 or x2.min() < 0):
            raise ValueError("counts must be non-negative")
        x1.setflags(write=False)
        x2.setflags(write=False)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)

    @classmethod
    def from_pairs(cls, pairs, seed: int | None = None, source: str | None = None) -> "BivariateSample":
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], seed=seed, source=source)

    @property
    def n(self) -> int:
        return int(self.x1.size)

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.x1.tolist(), self.x2.tolist()))

    def swapped(self) -> "BivariateSample":
        return BivariateSample(self.x2, self.x1, seed=self.seed, source=self.source)

    def expect(self, g: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        if self.n == 0:
            raise ValueError("empty sample")
        return float(np.mean(np.broadcast_to(g(self.x1, self.x2), self.x1.shape)))

    def support(self) -> tuple[np.ndarray, np.ndarray, None]:
        return self.x1, self.x2, None


def _nb_gamma_poisson(
    gen: np.random.Generator, shape: np.ndarray | float, success: float, size: int
) -> np.ndarray:
    """NB(shape, success) draws as Poisson(Gamma(shape, (1 - success) / success))."""
    lam = gen.gamma(shape, (1 - success) / success, size=size)
    return gen.poisson(lam)


def draw(dist: DistributionSpec, n: int, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` pairs from ``dist`` with an explicit generator."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if isinstance(dist, BPoiParams):
        z0 = gen.poisson(dist.lambda0, n)
        return z0 + gen.poisson(dist.lambda1, n), z0 + gen.poisson(dist.lambda2, n)
    if isinstance(dist, BvbParams):
        counts = gen.multinomial(dist.n_trials, dist.cells, size=n)
        return counts[:, 0] + counts[:, 1], counts[:, 0] + counts[:, 2]
    if isinstance(dist, BnbParams):
        if dist.pi0 < 0:
            raise UnsupportedParams("BNB sampling requires pi0 >= 0")
        x2 = _nb_gamma_poisson(gen, dist.nu, dist.marginal_success(2), n)
        x1 = _nb_gamma_poisson(gen, dist.nu + x2, 1 - dist.pi1, n) if dist.pi1 > 0 else np.zeros(n, np.int64)
        if dist.pi0 > 0:
            x1 = x1 + gen.binomial(x2, dist.pi0 / (dist.pi2 + dist.pi0))
        return x1, x2
    if isinstance(dist, BHermParams):
        z = [gen.poisson(r, n) for r in dist.rates]
        return z[0] + 2 * z[1] + z[4], z[2] + 2 * z[3] + z[4]
    raise InvalidParams(f"unknown distribution type {type(dist).__name__}")


def sample(dist: DistributionSpec, n: int, seed: int) -> BivariateSample:
    """Deterministic sample of size ``n`` for ``(dist, n, seed)``."""
    gen = _rng.stream(seed, _rng.SAMPLE, _rng.text_key(dist.to_string()))
    x1, x2 = draw(dist, n, gen)
    return BivariateSample(x1, x2, seed=seed, source=dist.to_string())


# --------------------------------------------------------------------------
# Moments
# --------------------------------------------------------------------------


def falling_factorial(x, k: int):
    """``x (x-1) ... (x-k+1)`` with the empty product ``x_(0) = 1``."""
    out = np.ones_like(np.asarray(x, dtype=float))
    for j in range(k):
        out = out * (np.asarray(x) - j)
    return out


def factorial_moments(dist: BvbParams | BnbParams, r_max: int, s_max: int) -> np.ndarray:
    """Table of joint factorial moments ``mu[r, s]`` for ``r <= r_max, s <= s_max``.

    Rows ``r >= 1`` follow the recursion obtained from the first Stein
    identity; the ``r = 0`` row uses its mirror image.
    """
    if r_max < 0 or s_max < 0:
        raise ValueError("orders must be non-negative")
    mu = np.zeros((r_max + 1, s_max + 1))
    if isinstance(dist, BvbParams):
        n, a1, a2, a = dist.n_trials, dist.a1, dist.a2, dist.a
        for r in range(r_max + 1):
            for s in range(s_max + 1):
                if r == 0 and s == 0:
                    mu[r, s] = 1.0
                elif r > n or s > n:
                    mu[r, s] = 0.0
                elif r >= 1:
                    mu[r, s] = (n - r + 1) * a1 * mu[r - 1, s] + (n - r + 1) * s * a * (
                        mu[r - 1, s - 1] if s else 0.0
                    ) - (s * a2 * mu[r, s - 1] if s else 0.0)
                else:
                    mu[r, s] = (n - s + 1) * a2 * mu[r, s - 1]
        return mu
    if isinstance(dist, BnbParams):
        nu, pi1, pi2, pi0 = dist.nu, dist.pi1, dist.pi2, dist.pi0
        q = 1 - dist.pi_dot
        for r in range(r_max + 1):
            for s in range(s_max + 1):
                if r == 0 and s == 0:
                    mu[r, s] = 1.0
                elif r >= 1:
                    acc = (nu + r - 1) * (pi1 + pi0) * mu[r - 1, s]
                    if s:
                        acc += s * (pi2 + pi0) * mu[r, s - 1] + (nu + r - 1) * s * pi0 * mu[r - 1, s - 1]
                    mu[r, s] = acc / q
                else:
                    mu[r, s] = (nu + s - 1) * (pi2 + pi0) * mu[r, s - 1] / q
        return mu
    raise InvalidParams("factorial moment recursions exist for BVB and BNB only")


def factorial_moment(dist: BvbParams | BnbParams, r: int, s: int) -> float:
    """Joint factorial moment ``E[(X1)_(r) (X2)_(s)]``."""
    if r < 0 or s < 0:
        raise ValueError(f"orders must be non-negative, got ({r}, {s})")
    return float(factorial_moments(dist, r, s)[r, s])


def bpoi_squared_difference(params: BPoiParams) -> float:
    """``E[(X1 - X2)^2] = l1 + l2 + (l1 - l2)^2``."""
    return params.lambda1 + params.lambda2 + (params.lambda1 - params.lambda2) ** 2


def bpoi_abs_difference(params: BPoiParams, k: int | None = None, tol: float = DEFAULT_TOL) -> float:
    """``E|X1 - X2|`` from the difference identity with ``f = sgn(x - y)``:
    ``l1 E[sgn(X1 + 1 - X2)] - l2 E[sgn(X1 - X2 - 1)]``."""
    grid = bpoi_pmf_grid(params, k, k, tol) if k is not None else bpoi_pmf_grid(params, tol=tol)
    return params.lambda1 * grid.expect(lambda x, y: np.sign(x + 1 - y)) - params.lambda2 * grid.expect(
        lambda x, y: np.sign(x - y - 1)
    )
