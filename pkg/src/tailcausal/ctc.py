"""Standardized causal tail coefficients.

``gamma[j, i]`` (0-based positions, row = conditioning node ``j``) holds the limit of
``E[2 G_i(X_i) - 1 | X_j > x]``. The population version is a sum of extremal weights over
shared ancestors; the empirical version averages rank-transformed ``X_i`` over the ``k``
rows with the largest ``X_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .air import WeightMatrix
from .dag import Dag
from .model import SampleMatrix

CTC_FORMAT_VERSION = 1


class EstimationError(ValueError):
    pass


@dataclass
class CtcMatrix:
    gamma: np.ndarray
    kind: str  # "population" | "estimated"
    k_used: int | None = None
    # E[G_i(X_i) | X_j large] before the affine map, estimated kind only
    unstandardized: np.ndarray | None = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim != 2 or self.gamma.shape[0] != self.gamma.shape[1]:
            raise ValueError(f"gamma must be square, got shape {self.gamma.shape}")
        if self.kind not in ("population", "estimated"):
            raise ValueError(f"kind must be 'population' or 'estimated', got {self.kind!r}")

    @property
    def d(self) -> int:
        return self.gamma.shape[0]

    def __getitem__(self, ji: tuple[int, int]) -> float:
        j, i = ji
        return float(self.gamma[j - 1, i - 1])

    def to_dict(self) -> dict:
        out: dict = {"version": CTC_FORMAT_VERSION, "kind": self.kind, "d": self.d, "rows_condition": True}
        if self.k_used is not None:
            out["k_used"] = int(self.k_used)
        out["gamma"] = [[float(v) for v in row] for row in self.gamma]
        if self.unstandardized is not None:
            out["gamma_unstandardized"] = [[float(v) for v in row] for row in self.unstandardized]
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "CtcMatrix":
        for key in ("kind", "d", "gamma"):
            if key not in doc:
                raise ValueError(f"gamma file is missing {key!r}")
        if doc.get("rows_condition", True) is not True:
            raise ValueError("gamma file must use rows_condition: true orientation")
        g = np.array(doc["gamma"], dtype=float)
        if g.shape != (doc["d"], doc["d"]):
            raise ValueError(f"gamma shape {g.shape} does not match d={doc['d']}")
        un = doc.get("gamma_unstandardized")
        return cls(g, doc["kind"], doc.get("k_used"), None if un is None else np.array(un, dtype=float))


def population_ctc(weights: WeightMatrix, dag: Dag) -> CtcMatrix:
    """Exact coefficients: ``gamma[j, i] = sum of W[h, j] over h in An(i) & An(j)``."""
    W = np.asarray(weights.values, dtype=float)
    A = dag.reach
    if W.shape != A.shape:
        raise ValueError(f"weights are {W.shape} but the graph has {dag.node_count} nodes")
    off = (W != 0) & ~A
    if off.any():
        h, i = np.argwhere(off)[0] + 1
        raise ValueError(f"weight W[{h},{i}] is nonzero but {h} is not an ancestor of {i}")
    missing = (W <= 0) & A
    if missing.any():
        h, i = np.argwhere(missing)[0] + 1
        raise ValueError(f"weight W[{h},{i}] is zero but {h} is an ancestor of {i}")
    # shared[h, j, i] = h in An(j) and h in An(i); contract against column j of W
    gamma = np.einsum("hj,hj,hi->ji", W, A, A.astype(float))
    np.fill_diagonal(gamma, 1.0)
    return CtcMatrix(gamma, "population")


def empirical_ctc(samples: SampleMatrix | np.ndarray, k: int) -> CtcMatrix:
    """Top-``k`` rank estimator.

    For each conditioning column ``j`` the ``k`` rows with the largest ``X_j`` are selected and
    ``2 * rank(X_i) / (n + 1) - 1`` is averaged over them (average ranks for ties). The
    result is clamped to ``[0, 1]``; the unclamped ``E[G_i]`` estimate is kept alongside.
    """
    X = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples, dtype=float)
    n, d = X.shape
    if not 1 <= k < n:
        raise EstimationError(f"k must satisfy 1 <= k < n={n}, got {k}")
    if not np.all(np.isfinite(X)):
        raise EstimationError("samples contain non-finite values")
    flat = np.flatnonzero(np.ptp(X, axis=0) == 0)
    if flat.size:
        raise EstimationError(f"column X{flat[0] + 1} is constant; ranks are degenerate")
    G = rankdata(X, method="average", axis=0) / (n + 1)
    un = np.empty((d, d))
    for j in range(d):
        # stable sort on the negated column: equal values keep row order
        top = np.argsort(-X[:, j], kind="stable")[:k]
        un[j] = G[top].mean(axis=0)
    gamma = np.clip(2.0 * un - 1.0, 0.0, 1.0)
    np.fill_diagonal(gamma, 1.0)
    return CtcMatrix(gamma, "estimated", k, un)


def choose_k(n: int, rule: str = "power", param: float = 0.4) -> int:
    """Number of exceedances: ``floor(n**param)`` or ``floor(param)``, clamped to ``[10, n/4]``."""
    if n < 10:
        raise ValueError("choose_k needs n >= 10")
    if rule == "power":
        # guard against n**param landing a hair below an exact integer
        raw = math.floor(n**param * (1 + 1e-12))
    elif rule == "fixed":
        raw = math.floor(param)
    else:
        raise ValueError(f"unknown k rule {rule!r}")
    return int(min(max(raw, 10), n // 4))


def parse_k_rule(text: str) -> tuple[str, float]:
    """``"power:0.4"`` or ``"fixed:100"``."""
    rule, _, value = text.partition(":")
    if rule not in ("power", "fixed") or not value:
        raise ValueError(f"k rule must look like power:0.4 or fixed:100, got {text!r}")
    return rule, float(value)
