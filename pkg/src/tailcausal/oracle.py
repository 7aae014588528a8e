"""Brute-force and Monte Carlo oracles, kept deliberately apart from the estimators they check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .air import air_by_impulse, standardize
from .ctc import population_ctc
from .dag import random_dag
from .discovery import POPULATION_DELTA, recover_weights
from .model import HscmModel, random_model, simulate


class StatisticalError(RuntimeError):
    def __init__(self, message: str, achieved: int):
        self.achieved = achieved
        super().__init__(message)


@dataclass
class TailRatio:
    ratio: float
    target: float
    threshold: float
    exceedances: int

    @property
    def relative_error(self) -> float:
        return abs(self.ratio - self.target) / self.target


def mc_tail_ratio(
    model: HscmModel, node: int, quantile: float, n: int, seed: int, min_exceedances: int = 200
) -> TailRatio:
    """Empirical ``P(X_node > x) / P(eps > x)`` at the noise quantile ``x``.

    The target is the sum of ``F[h, node] ** alpha`` over the ancestors of ``node``.
    """
    if not 0.9 < quantile < 1.0:
        raise ValueError("quantile must lie in (0.9, 1)")
    expected = n * (1.0 - quantile)
    if expected < min_exceedances:
        raise StatisticalError(
            f"n={n} at quantile {quantile} gives only {expected:.0f} expected noise exceedances "
            f"(need {min_exceedances})",
            int(expected),
        )
    x = float(model.noise.quantile(quantile))
    col = simulate(model, n, seed).column(node)
    hits = int(np.count_nonzero(col > x))
    if hits < min_exceedances:
        raise StatisticalError(f"only {hits} exceedances of {x:.6g} (need {min_exceedances})", hits)
    ratio = (hits / n) / float(model.noise.survival(x))
    F = air_by_impulse(model).values[:, node - 1]
    target = float(np.sum(F[F > 0] ** model.alpha))
    return TailRatio(ratio, target, x, hits)


def conditional_tail_mean(values: np.ndarray, j: int, i: int, quantile: float, min_exceedances: int = 200) -> float:
    """Average of ``2 G_i(X_i) - 1`` over rows where ``X_j`` beats its empirical ``quantile``.

    ``G_i`` is the empirical CDF ``#{X_i <= v} / (n + 1)``, found by binary search.
    """
    n = values.shape[0]
    xj = values[:, j - 1]
    xi = values[:, i - 1]
    threshold = np.quantile(xj, quantile)
    rows = xj > threshold
    hits = int(rows.sum())
    if hits < min_exceedances:
        raise StatisticalError(f"only {hits} rows exceed the {quantile} quantile of X{j}", hits)
    ecdf = np.searchsorted(np.sort(xi), xi[rows], side="right") / (n + 1)
    return float(np.mean(2.0 * ecdf - 1.0))


def brute_force_ctc(
    model: HscmModel, j: int, i: int, n: int, quantile: float, seed: int, min_exceedances: int = 200
) -> float:
    values = simulate(model, n, seed).values
    return conditional_tail_mean(values, j, i, quantile, min_exceedances)


@dataclass
class RoundtripCase:
    d: int
    family: str
    alpha: float
    seed: int
    error: float
    support_ok: bool


@dataclass
class RoundtripReport:
    cases: list[RoundtripCase] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max((c.error for c in self.cases), default=0.0)

    @property
    def support_ok(self) -> bool:
        return all(c.support_ok for c in self.cases)

    def by_family(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for c in self.cases:
            entry = out.setdefault(c.family, {"count": 0, "max_error": 0.0, "support_failures": 0})
            entry["count"] += 1
            entry["max_error"] = max(entry["max_error"], c.error)
            entry["support_failures"] += not c.support_ok
        return out

    def worst(self, count: int = 5) -> list[RoundtripCase]:
        return sorted(self.cases, key=lambda c: -c.error)[:count]

    def to_dict(self) -> dict:
        return {
            "cases": len(self.cases),
            "max_error": self.max_error,
            "support_ok": self.support_ok,
            "by_family": self.by_family(),
            "worst": [vars(c) for c in self.worst()],
        }


ROUNDTRIP_FAMILIES = ("linear", "max_linear", "lp", "mixed")
ROUNDTRIP_ALPHAS = (0.8, 1.0, 1.5, 2.7)


def roundtrip_error(model: HscmModel, delta: float = POPULATION_DELTA) -> tuple[float, bool]:
    """Max ``|W_recovered - W|`` and whether the recovered support equals the ancestral closure."""
    _, W = standardize(air_by_impulse(model), model.alpha)
    gamma = population_ctc(W, model.dag)
    rec = recover_weights(gamma, delta).weights.values
    return float(np.max(np.abs(rec - W.values))), bool(np.array_equal(rec > 0, model.dag.reach))


def exhaustive_roundtrip(
    d_max: int,
    graphs_per_size: int,
    seed: int,
    families: tuple[str, ...] = ROUNDTRIP_FAMILIES,
    alphas: tuple[float, ...] = ROUNDTRIP_ALPHAS,
    coef_range: tuple[float, float] = (0.1, 2.0),
) -> RoundtripReport:
    """Population pipeline on random weighted DAGs, recording each recovery error."""
    if not 1 <= d_max <= 10:
        raise ValueError("d_max must lie in 1..10")
    rng = np.random.default_rng(seed)
    report = RoundtripReport()
    for d in range(1, d_max + 1):
        for _ in range(graphs_per_size):
            s = int(rng.integers(2**63))
            family = families[int(rng.integers(len(families)))]
            alpha = float(alphas[int(rng.integers(len(alphas)))])
            dag = random_dag(d, float(rng.uniform(0.2, 0.8)), s)
            fams = ["linear", "max_linear", "lp"] if family == "mixed" else family
            model = random_model(dag, fams, alpha, s, coef_range)
            err, ok = roundtrip_error(model)
            report.cases.append(RoundtripCase(d, family, alpha, s, err, ok))
    return report
