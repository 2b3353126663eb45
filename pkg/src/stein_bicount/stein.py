"""Stein identities of the bivariate count families.

Each identity is written once against an expectation operator ``E(g)``;
the operator is either a truncated pmf grid (exact) or a sample mean
(empirical). Shifted arguments are handled by shifting the weight
function, never the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import (
    BHermParams,
    BivariateSample,
    BnbParams,
    BPoiParams,
    BvbParams,
    DistributionSpec,
    TruncatedPmfGrid,
    pmf_grid,
)

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Boundary terms of a truncated identity scale like deficit * k * max|f|, so
# exact evaluation uses a much tighter window than plain pmf queries.
IDENTITY_TOL = 1e-14


@dataclass(frozen=True)
class WeightFunction:
    """Named weight function ``f(x, y)`` evaluated elementwise on integer arrays."""

    id: str
    fn: ArrayFn

    def __call__(self, x, y) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x), np.asarray(y)), dtype=float)


def power_difference(a: float) -> WeightFunction:
    """``f_a(x, y) = x**a - y**a``."""
    wid = {1.0: "f1", 0.5: "f05"}.get(float(a), f"f{a:g}")
    if a == 1:
        return WeightFunction(wid, lambda x, y: x - y)
    if a == 0.5:
        return WeightFunction(wid, lambda x, y: np.sqrt(x) - np.sqrt(y))
    return WeightFunction(wid, lambda x, y: np.power(x, a) - np.power(y, a))


F1 = power_difference(1.0)
F05 = power_difference(0.5)
SIGN = WeightFunction("sgn", lambda x, y: np.sign(x - y))


def monomial(s: float, t: float) -> WeightFunction:
    """``s**x * t**y``; bounded for ``|s|, |t| < 1``."""
    return WeightFunction(f"mono({s:g},{t:g})", lambda x, y: np.power(float(s), x) * np.power(float(t), y))


def indicator(x0: int, y0: int) -> WeightFunction:
    return WeightFunction(f"ind({x0},{y0})", lambda x, y: ((x == x0) & (y == y0)).astype(float))


def random_table(seed: int, size: int) -> WeightFunction:
    """Table-backed function with entries uniform in [-1, 1] on ``[0, size)^2``; zero outside."""
    table = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(size, size))

    def fn(x, y):
        x, y = np.broadcast_arrays(x, y)
        inside = (x >= 0) & (x < size) & (y >= 0) & (y < size)
        return np.where(inside, table[np.clip(x, 0, size - 1), np.clip(y, 0, size - 1)], 0.0)

    return WeightFunction(f"table{seed}", fn)


BUILTIN_WEIGHTS = {"f1": F1, "f05": F05}


def get_weight(weight_id: str) -> WeightFunction:
    try:
        return BUILTIN_WEIGHTS[weight_id]
    except KeyError:
        raise ValueError(f"unknown weight id {weight_id!r}; expected one of {sorted(BUILTIN_WEIGHTS)}") from None


def is_alternating(f: WeightFunction, probe: int = 10, atol: float = 1e-12) -> bool:
    """Check ``f(x, y) == -f(y, x)`` on ``{0..probe}^2``."""
    x, y = np.meshgrid(np.arange(probe + 1), np.arange(probe + 1), indexing="ij")
    return bool(np.allclose(f(x, y), -f(y, x), rtol=0.0, atol=atol))


# --------------------------------------------------------------------------
# Identities
# --------------------------------------------------------------------------

IDENTITY_FAMILY = {
    "BPoi-1": BPoiParams,
    "BPoi-2": BPoiParams,
    "BPoi-diff": BPoiParams,
    "BVB-1": BvbParams,
    "BVB-2": BvbParams,
    "BNB-1": BnbParams,
    "BNB-2": BnbParams,
}

FAMILY_IDENTITIES = {
    BPoiParams: ("BPoi-1", "BPoi-2", "BPoi-diff"),
    BvbParams: ("BVB-1", "BVB-2"),
    BnbParams: ("BNB-1", "BNB-2"),
    BHermParams: (),
}


@dataclass(frozen=True)
class IdentityResidual:
    identity_id: str
    lhs: float
    rhs: float
    residual: float
    mass_deficit: float
    f_id: str = ""


def _sides(identity_id: str, params, f: WeightFunction, E: Callable[[ArrayFn], float]) -> tuple[float, float]:
    def at(dx: int, dy: int) -> ArrayFn:
        return lambda x, y: f(x + dx, y + dy)

    if identity_id == "BPoi-1":
        lhs = E(lambda x, y: x * f(x, y))
        rhs = params.lambda1 * E(at(1, 0)) + params.lambda0 * E(at(1, 1))
    elif identity_id == "BPoi-2":
        lhs = E(lambda x, y: y * f(x, y))
        rhs = params.lambda2 * E(at(0, 1)) + params.lambda0 * E(at(1, 1))
    elif identity_id == "BPoi-diff":
        lhs = E(lambda x, y: (x - y) * f(x, y))
        rhs = params.lambda1 * E(at(1, 0)) - params.lambda2 * E(at(0, 1))
    elif identity_id == "BVB-1":
        n = params.n_trials
        lhs = params.p00 * E(lambda x, y: x * f(x, y)) + params.p01 * E(lambda x, y: x * f(x, y + 1))
        rhs = params.p10 * E(lambda x, y: (n - x) * f(x + 1, y)) + params.p11 * E(
            lambda x, y: (n - x) * f(x + 1, y + 1)
        )
    elif identity_id == "BVB-2":
        n = params.n_trials
        lhs = params.p00 * E(lambda x, y: y * f(x, y)) + params.p10 * E(lambda x, y: y * f(x + 1, y))
        rhs = params.p01 * E(lambda x, y: (n - y) * f(x, y + 1)) + params.p11 * E(
            lambda x, y: (n - y) * f(x + 1, y + 1)
        )
    elif identity_id == "BNB-1":
        nu = params.nu
        lhs = E(lambda x, y: x * f(x, y)) - params.pi2 * E(lambda x, y: x * f(x, y + 1))
        rhs = params.pi1 * E(lambda x, y: (nu + x) * f(x + 1, y)) + params.pi0 * E(
            lambda x, y: (nu + x) * f(x + 1, y + 1)
        )
    elif identity_id == "BNB-2":
        nu = params.nu
        lhs = E(lambda x, y: y * f(x, y)) - params.pi1 * E(lambda x, y: y * f(x + 1, y))
        rhs = params.pi2 * E(lambda x, y: (nu + y) * f(x, y + 1)) + params.pi0 * E(
            lambda x, y: (nu + y) * f(x + 1, y + 1)
        )
    else:
        raise ValueError(f"unknown identity {identity_id!r}")
    return lhs, rhs


def _check_family(identity_id: str, params) -> None:
    family = IDENTITY_FAMILY.get(identity_id)
    if family is None:
        raise ValueError(f"unknown identity {identity_id!r}; expected one of {sorted(IDENTITY_FAMILY)}")
    if not isinstance(params, family):
        raise ValueError(f"identity {identity_id} needs {family.__name__}, got {type(params).__name__}")


def eval_identity_exact(
    dist: DistributionSpec, identity_id: str, f: WeightFunction, grid: TruncatedPmfGrid | None = None
) -> IdentityResidual:
    """Both sides of a Stein identity as truncated-grid expectations under ``dist``."""
    _check_family(identity_id, dist)
    if grid is None:
        grid = pmf_grid(dist, tol=IDENTITY_TOL)
    lhs, rhs = _sides(identity_id, dist, f, grid.expect)
    return IdentityResidual(identity_id, lhs, rhs, lhs - rhs, grid.mass_deficit, f.id)


def eval_identity_empirical(
    sample: BivariateSample, identity_id: str, f: WeightFunction, params
) -> IdentityResidual:
    """Plug-in version: every expectation replaced by the sample average."""
    if sample.n == 0:
        raise ValueError("empty sample")
    _check_family(identity_id, params)
    lhs, rhs = _sides(identity_id, params, f, sample.expect)
    return IdentityResidual(identity_id, lhs, rhs, lhs - rhs, 0.0, f.id)


def univariate_reduction_check(
    dist: DistributionSpec,
    g: Callable[[np.ndarray], np.ndarray],
    coord: int = 2,
    grid: TruncatedPmfGrid | None = None,
) -> IdentityResidual:
    """Residual of the univariate Stein identity induced by ``f(x, y) = g(x_coord)``.

    Poisson: ``E[X g(X)] - mu E[g(X + 1)]``;
    binomial: ``(1 - a) E[X g(X)] - a E[(N - X) g(X + 1)]``;
    NB(nu, p): ``E[X g(X)] - (1 - p) E[(nu + X) g(X + 1)]``.
    """
    if coord not in (1, 2):
        raise ValueError("coord must be 1 or 2")
    if grid is None:
        grid = pmf_grid(dist, tol=IDENTITY_TOL)

    def E(h: Callable[[np.ndarray], np.ndarray]) -> float:
        return grid.expect(lambda x, y: h(x if coord == 1 else y))

    def gx(v):
        return np.asarray(g(v), dtype=float)

    i = coord - 1
    if isinstance(dist, BPoiParams):
        mu = dist.means[i]
        lhs, rhs, name = E(lambda v: v * gx(v)), mu * E(lambda v: gx(v + 1)), "Poi"
    elif isinstance(dist, BvbParams):
        a, n = (dist.a1, dist.a2)[i], dist.n_trials
        lhs = (1 - a) * E(lambda v: v * gx(v))
        rhs = a * E(lambda v: (n - v) * gx(v + 1))
        name = "Bin"
    elif isinstance(dist, BnbParams):
        p, nu = dist.marginal_success(coord), dist.nu
        lhs = E(lambda v: v * gx(v))
        rhs = (1 - p) * E(lambda v: (nu + v) * gx(v + 1))
        name = "NB"
    else:
        raise ValueError(f"no univariate Stein identity for {type(dist).__name__}")
    return IdentityResidual(f"{name}-X{coord}", lhs, rhs, lhs - rhs, grid.mass_deficit, "g")


def residuals_to_csv(residuals: list[IdentityResidual]) -> str:
    lines = ["identity,f_id,lhs,rhs,residual"]
    for r in residuals:
        lines.append(f"{r.identity_id},{r.f_id},{r.lhs!r},{r.rhs!r},{r.residual!r}")
    return "\n".join(lines) + "\n"


def moment_matched_bpoi(dist: DistributionSpec) -> BPoiParams:
    """BPoi with the same means and covariance as ``dist`` (covariance clipped to be admissible)."""
    m1, m2 = dist.means
    l0 = min(max(dist.cov, 0.0), min(m1, m2) * (1 - 1e-9))
    return BPoiParams(l0, m1 - l0, m2 - l0)


__all__ = [
    "F05",
    "F1",
    "SIGN",
    "IdentityResidual",
    "WeightFunction",
    "eval_identity_empirical",
    "eval_identity_exact",
    "get_weight",
    "indicator",
    "is_alternating",
    "monomial",
    "moment_matched_bpoi",
    "power_difference",
    "random_table",
    "residuals_to_csv",
    "univariate_reduction_check",
]
