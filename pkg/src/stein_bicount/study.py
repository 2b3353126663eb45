"""Scenario registry and batch runners for the size/power tables."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .bootstrap import BootstrapConfig, DEFAULT_NULL, evaluate, simulate
from .distributions import BHermParams, BnbParams, BPoiParams, BvbParams, DistributionSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
    id: str
    dist: DistributionSpec
    is_null_gof: bool
    is_null_symmetry: bool


def _build_registry() -> tuple[Scenario, ...]:
    def bpoi(i, l0, l1, l2):
        return Scenario(f"BPoi-{i}", BPoiParams(l0, l1, l2), True, l1 == l2)

    def alt(sid, dist):
        return Scenario(sid, dist, False, False)

    return (
        bpoi(1, 0.1, 1.25, 0.8),
        bpoi(2, 1.0, 5.0, 5.0),
        bpoi(3, 0.1, 0.2, 0.3),
        bpoi(4, 1.0, 2.5, 2.25),
        bpoi(5, 1.0, 1.0, 1.0),
        bpoi(6, 0.8, 0.2, 0.3),
        bpoi(7, 4.0, 1.0, 1.0),
        alt("BHerm-1", BHermParams((0.75, 0.25, 0.5, 0.15, 0.1))),
        alt("BHerm-2", BHermParams((1.0, 0.75, 1.25, 0.5, 1.0))),
        alt("BHerm-3", BHermParams((2.0, 1.5, 2.0, 1.5, 1.0))),
        # third BVB argument is the Bernoulli correlation phi
        alt("BVB-1", BvbParams.from_correlation(10, 0.35, 0.325, 0.3)),
        alt("BVB-2", BvbParams.from_correlation(10, 0.2, 0.2, 0.5)),
        alt("BNB-1", BnbParams(9.5, 0.2, 0.19, 0.02)),
        alt("BNB-2", BnbParams(5.0, 0.2, 0.2, 0.05)),
    )


_REGISTRY = _build_registry()
_BY_ID = {s.id: s for s in _REGISTRY}


def registry() -> list[Scenario]:
    return list(_REGISTRY)


def get_scenario(scenario_id: str) -> Scenario:
    try:
        return _BY_ID[scenario_id]
    except KeyError:
        raise KeyError(f"unknown scenario {scenario_id!r}; known: {', '.join(_BY_ID)}") from None


# (statistic, weight) columns in presentation order
TABLE_COLUMNS = {
    "gof": (("tstar", None), ("t1", "f1"), ("t1", "f05")),
    "symmetry": (("t2", "f1"), ("t2", "f05"), ("t3", "f1"), ("t3", "f05")),
}
DEFAULT_N = (50, 100, 200, 500)


@dataclass
class StudyTable:
    table_id: str
    scenarios: tuple[str, ...]
    n_list: tuple[int, ...]
    columns: tuple[tuple[str, Optional[str]], ...]
    M: int
    alpha: float
    seed: int
    rates: dict = field(default_factory=dict)  # (scenario, n, statistic, weight) -> rate
    methods: dict = field(default_factory=dict)  # (statistic, weight) -> method

    def keys(self):
        for sid in self.scenarios:
            for n in self.n_list:
                for stat, weight in self.columns:
                    yield (sid, n, stat, weight)

    def is_complete(self) -> bool:
        return all(k in self.rates for k in self.keys())

    def rate(self, scenario: str, n: int, statistic: str, weight: Optional[str] = None) -> float:
        return self.rates[(scenario, n, statistic, weight)]


def run_table(
    table_id: str,
    n_list: Sequence[int] = DEFAULT_N,
    M: int = 2000,
    alpha: float = 0.05,
    seed: int = 0,
    scenarios: Optional[Sequence[str]] = None,
    tstar_method: str = "chi2",
    workers: Optional[int] = None,
) -> StudyTable:
    """Warp-speed rejection rates for every (scenario, n, column) cell.

    Each (scenario, n) pair is simulated once and shared by all columns, so
    the columns of a row see the same data sets. ``tstar_method`` chooses
    between the chi-square(2) path (default) and warp-speed for ``tstar``.
    """
    if table_id not in TABLE_COLUMNS:
        raise ValueError(f"unknown table {table_id!r}; expected one of {sorted(TABLE_COLUMNS)}")
    if M < 100:
        raise ValueError(f"M must be >= 100, got {M}")
    if tstar_method not in ("chi2", "warp-speed"):
        raise ValueError(f"tstar_method must be 'chi2' or 'warp-speed', got {tstar_method!r}")
    BootstrapConfig(B=1, alpha=alpha, seed=seed)  # validates alpha and seed range
    ids = tuple(scenarios) if scenarios is not None else tuple(s.id for s in _REGISTRY)
    columns = TABLE_COLUMNS[table_id]
    table = StudyTable(table_id, ids, tuple(n_list), columns, M, alpha, seed)
    nulls = sorted({DEFAULT_NULL[stat] for stat, _ in columns})
    for stat, weight in columns:
        table.methods[(stat, weight)] = tstar_method if stat == "tstar" else "warp-speed"
    for sid in ids:
        scen = get_scenario(sid)
        for n in table.n_list:
            reps = {null: simulate(scen.dist, n, M, seed, null, workers) for null in nulls}
            for stat, weight in columns:
                method = table.methods[(stat, weight)]
                run = evaluate(reps[DEFAULT_NULL[stat]], stat, weight, alpha, sid, method)
                table.rates[(sid, n, stat, weight)] = run.rejection_rate
            logger.info("%s n=%d done", sid, n)
    return table


def _column_label(stat: str, weight: Optional[str]) -> str:
    return stat if weight is None else f"{stat}/{weight}"


def render(table: StudyTable, fmt: str = "csv") -> str:
    """CSV in long format (one row per cell) or a wide markdown table."""
    if not table.is_complete():
        missing = [k for k in table.keys() if k not in table.rates]
        raise ValueError(f"incomplete table: {len(missing)} missing cells, first {missing[0]}")
    out = io.StringIO()
    if fmt == "csv":
        out.write("scenario,n,statistic,weight,rejection_rate,M,alpha,seed\n")
        for key in table.keys():
            sid, n, stat, weight = key
            out.write(f"{sid},{n},{stat},{weight or ''},{table.rates[key]:.3f},{table.M},{table.alpha:g},{table.seed}\n")
    elif fmt == "markdown":
        labels = [_column_label(s, w) for s, w in table.columns]
        out.write("| scenario | n | " + " | ".join(labels) + " |\n")
        out.write("|---|---|" + "---|" * len(labels) + "\n")
        for sid in table.scenarios:
            for n in table.n_list:
                cells = [f"{table.rates[(sid, n, s, w)]:.3f}" for s, w in table.columns]
                out.write(f"| {sid} | {n} | " + " | ".join(cells) + " |\n")
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'markdown'")
    return out.getvalue()
