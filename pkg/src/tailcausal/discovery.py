"""From a causal-tail-coefficient matrix to causal conclusions."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .air import StandardizedAir, WeightMatrix
from .ctc import CtcMatrix
from .dag import CycleError

VERDICTS = ("i_causes_j", "j_causes_i", "no_link", "common_cause", "inconsistent")
POPULATION_DELTA = 1e-9
ESTIMATED_DELTA = 0.05


class InfeasibleGammaError(ValueError):
    def __init__(self, j: int, i: int, value: float):
        self.j, self.i, self.value = j, i, value
        super().__init__(f"recovered W[{j},{i}] = {value:.6g} is negative beyond tolerance; gamma is infeasible")


def default_delta(gamma: CtcMatrix) -> float:
    return POPULATION_DELTA if gamma.kind == "population" else ESTIMATED_DELTA


@dataclass(frozen=True)
class PairVerdict:
    i: int
    j: int
    verdict: str
    gamma_ij: float
    gamma_ji: float
    delta_used: float

    def to_dict(self) -> dict:
        return {
            "pair": [self.i, self.j],
            "verdict": self.verdict,
            "gamma_ij": self.gamma_ij,
            "gamma_ji": self.gamma_ji,
            "delta_used": self.delta_used,
        }


def _level(g: float, delta: float) -> str:
    if g >= 1.0 - delta:
        return "one"
    if g <= delta:
        return "zero"
    return "interior"


_TABLE = {
    ("one", "interior"): "i_causes_j",
    ("interior", "one"): "j_causes_i",
    ("zero", "zero"): "no_link",
    ("interior", "interior"): "common_cause",
}


def classify_pair(gamma_12: float, gamma_21: float, delta: float = ESTIMATED_DELTA, i: int = 1, j: int = 2) -> PairVerdict:
    """Place ``(gamma_ij, gamma_ji)`` in the 3x3 grid of {~1, interior, ~0} levels.

    ``gamma_12`` conditions on the first variable. Cells the theory rules out come back as
    ``"inconsistent"`` rather than raising.
    """
    if not 0.0 <= delta < 0.5:
        raise ValueError("delta must lie in [0, 0.5)")
    key = (_level(gamma_12, delta), _level(gamma_21, delta))
    return PairVerdict(i, j, _TABLE.get(key, "inconsistent"), float(gamma_12), float(gamma_21), delta)


def classify_all(gamma: CtcMatrix, delta: float) -> list[PairVerdict]:
    g = gamma.gamma
    return [
        classify_pair(g[a - 1, b - 1], g[b - 1, a - 1], delta, a, b)
        for a, b in combinations(range(1, gamma.d + 1), 2)
    ]


@dataclass
class AncestorSets:
    sets: dict[int, set[int]]
    diagnostics: list[str] = field(default_factory=list)
    conflicts: list[tuple[int, int]] = field(default_factory=list)

    def __getitem__(self, j: int) -> set[int]:
        return self.sets[j]

    def sizes(self) -> dict[int, int]:
        return {j: len(s) for j, s in self.sets.items()}


def ancestor_sets(gamma: CtcMatrix, delta: float) -> AncestorSets:
    """``an(j) = {i != j : gamma[i, j] >= 1 - delta}``.

    A pair where both directions saturate would be a 2-cycle; both members are dropped from
    each other's set and the conflict is recorded.
    """
    g = gamma.gamma
    d = gamma.d
    hit = g >= 1.0 - delta
    np.fill_diagonal(hit, False)
    diags = []
    conflicts = []
    both = hit & hit.T
    for a, b in zip(*np.nonzero(np.triu(both))):
        conflicts.append((int(a) + 1, int(b) + 1))
        diags.append(
            f"nodes {a + 1} and {b + 1} each look like the other's ancestor "
            f"(gamma={g[a, b]:.4g}, {g[b, a]:.4g}); relation dropped"
        )
    hit &= ~both
    sets = {j: {int(i) + 1 for i in np.flatnonzero(hit[:, j - 1])} for j in range(1, d + 1)}
    return AncestorSets(sets, diags, conflicts)


@dataclass
class Recovery:
    weights: WeightMatrix
    diagnostics: list[str]


def recover_weights(gamma: CtcMatrix, delta: float, clamp_factor: float = 10.0) -> Recovery:
    """Recursive recovery of the extremal weight matrix ``W``.

    Nodes are visited by increasing number of ancestors (ties by id). For node ``j`` and each
    strict descendant ``i``::

        W[j, i] = gamma[i, j] - sum(W[k, i] for k in an(j))

    and ``W[j, j]`` is the complement of ``sum(W[k, j] for k in an(j))``.
    """
    an = ancestor_sets(gamma, delta)
    diags = list(an.diagnostics)
    g = gamma.gamma
    d = gamma.d
    de = {j: {i for i in range(1, d + 1) if j in an[i]} for j in range(1, d + 1)}
    W = np.zeros((d, d))
    done: set[int] = set()
    for j in sorted(range(1, d + 1), key=lambda v: (len(an[v]), v)):
        late = sorted(k for k in an[j] if k not in done)
        if late:
            diags.append(f"node {j}: ancestors {late} not yet resolved (ancestor relation not transitive)")
        anc = sorted(an[j])
        for i in sorted(de[j]):
            W[j - 1, i - 1] = _clamped(g[i - 1, j - 1] - W[[k - 1 for k in anc], i - 1].sum(), j, i, delta, clamp_factor, diags)
        complement = 1.0 - W[[k - 1 for k in anc], j - 1].sum()
        loop_value = g[j - 1, j - 1] - W[[k - 1 for k in anc], j - 1].sum()
        if abs(loop_value - complement) > max(delta, 1e-12):
            diags.append(f"node {j}: gamma diagonal {g[j - 1, j - 1]:.6g} disagrees with normalisation")
        W[j - 1, j - 1] = _clamped(complement, j, j, delta, clamp_factor, diags)
        done.add(j)
    return Recovery(WeightMatrix(W), diags)


def _clamped(value: float, j: int, i: int, delta: float, factor: float, diags: list[str]) -> float:
    if value >= 0:
        return value
    if value < -factor * delta:
        raise InfeasibleGammaError(j, i, value)
    if value < -1e-12:
        diags.append(f"W[{j},{i}] = {value:.3g} clamped to 0")
    return 0.0


def _toposort(d: int, an: dict[int, set[int]]) -> list[int]:
    indeg = {v: len(an[v]) for v in range(1, d + 1)}
    kids: dict[int, list[int]] = {v: [] for v in range(1, d + 1)}
    for v, s in an.items():
        for a in s:
            kids[a].append(v)
    ready = [v for v, k in indeg.items() if k == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        v = heapq.heappop(ready)
        out.append(v)
        for c in kids[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(out) < d:
        left = sorted(v for v in range(1, d + 1) if v not in out)
        raise CycleError(left + [left[0]])
    return out


def causal_order(gamma: CtcMatrix, delta: float, mode: str = "exact") -> list[int]:
    """Order the nodes from causes to effects.

    ``exact`` topologically sorts the thresholded ancestor relation and suits population
    input. ``ease`` greedily takes the remaining node whose worst pairwise margin
    ``gamma[i, j] - gamma[j, i]`` is largest, which tolerates estimation noise.
    """
    d = gamma.d
    if mode == "exact":
        an = ancestor_sets(gamma, delta)
        if an.conflicts:
            a, b = an.conflicts[0]
            raise CycleError([a, b, a])
        return _toposort(d, an.sets)
    if mode != "ease":
        raise ValueError(f"unknown order mode {mode!r}")
    g = gamma.gamma
    margin = g - g.T
    remaining = list(range(d))
    out = []
    while remaining:
        if len(remaining) == 1:
            out.append(remaining.pop() + 1)
            break
        sub = margin[np.ix_(remaining, remaining)].copy()
        np.fill_diagonal(sub, np.inf)
        scores = sub.min(axis=1)
        best = remaining[int(np.argmax(scores))]  # argmax keeps the first (lowest id) on ties
        out.append(best + 1)
        remaining.remove(best)
    return out


def generations(ancestor_sets: dict[int, set[int]] | AncestorSets) -> dict[int, int]:
    """Longest-ancestor-chain layer: 0 for roots, else ``1 + max`` over ancestors."""
    sets = ancestor_sets.sets if isinstance(ancestor_sets, AncestorSets) else ancestor_sets
    order = _toposort(len(sets), sets) if sets else []
    gen: dict[int, int] = {}
    for v in order:
        gen[v] = 1 + max((gen[h] for h in sets[v]), default=-1)
    return dict(sorted(gen.items()))


def is_linear_extension(order: list[int], reach: np.ndarray) -> bool:
    """True when every ancestor in ``reach`` (``reach[h, i]``: h in An(i)) precedes its descendant."""
    pos = {v: k for k, v in enumerate(order)}
    if sorted(pos) != list(range(1, reach.shape[0] + 1)):
        return False
    for h, i in zip(*np.nonzero(reach)):
        if h != i and pos[h + 1] > pos[i + 1]:
            return False
    return True


EXPONENT_NOTE = (
    "Recovered weights are W = F_tilde**alpha, whose columns sum to one over the ancestors; "
    "the population coefficient is gamma[j,i] = sum over shared ancestors h of W[h,j]. Reading "
    "the same sums without the alpha exponent (sums of F_tilde) agrees only when alpha = 1. "
    "The unstandardized AIR F is not identifiable from W."
)


@dataclass
class DiscoveryReport:
    d: int
    delta: float
    ancestor_sets: dict[int, set[int]]
    generations: dict[int, int] | None
    causal_order: dict[str, list[int] | None]
    verdicts: list[PairVerdict]
    recovered_weights: WeightMatrix | None
    recovered_standardized_air: StandardizedAir | None
    diagnostics: list[str]

    def to_dict(self) -> dict:
        W = self.recovered_weights
        F = self.recovered_standardized_air
        return {
            "d": self.d,
            "delta": self.delta,
            "ancestor_sets": {str(k): sorted(v) for k, v in sorted(self.ancestor_sets.items())},
            "ancestor_counts": {str(k): len(v) for k, v in sorted(self.ancestor_sets.items())},
            "generations": None if self.generations is None else {str(k): v for k, v in self.generations.items()},
            "causal_order": self.causal_order,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "recovered_weights": None if W is None else [[float(x) for x in row] for row in W.values],
            "recovered_standardized_air": None
            if F is None
            else {"alpha": F.alpha, "matrix": [[float(x) for x in row] for row in F.values]},
            "weight_convention": EXPONENT_NOTE,
            "diagnostics": self.diagnostics,
        }


def discover(gamma: CtcMatrix, delta: float | None = None, alpha: float | None = None) -> DiscoveryReport:
    """Run every discovery step, collecting failures as diagnostics instead of raising."""
    delta = default_delta(gamma) if delta is None else delta
    diags: list[str] = []
    an = ancestor_sets(gamma, delta)
    diags += an.diagnostics
    try:
        gens = generations(an)
    except CycleError:
        gens = None
        diags.append("ancestor relation is cyclic; generations unavailable")
    orders: dict[str, list[int] | None] = {"ease": causal_order(gamma, delta, "ease")}
    try:
        orders["exact"] = causal_order(gamma, delta, "exact")
    except CycleError:
        orders["exact"] = None
        diags.append("exact order unavailable: recovered ancestor relation is cyclic")
    W = Ft = None
    try:
        rec = recover_weights(gamma, delta)
        W = rec.weights
        diags += [m for m in rec.diagnostics if m not in diags]
        if alpha is not None:
            Ft = W.standardized_air(alpha)
    except InfeasibleGammaError as exc:
        diags.append(str(exc))
    return DiscoveryReport(gamma.d, delta, an.sets, gens, orders, classify_all(gamma, delta), W, Ft, diags)
