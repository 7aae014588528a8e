"""Ancestral impulse-response (AIR) matrices.

``F[h, i]`` is the value taken by node ``i`` when the noise of ancestor ``h`` is a unit
impulse and every other noise variable is zero. Two routes compute it:

* :func:`air_by_impulse` pushes unit impulses through the structural functions, which works
  for any mixture of families;
* :func:`air_by_paths` uses closed-form path formulas and only handles single-family models.

Both return a dense ``d x d`` array wrapped in :class:`AirMatrix`, rows indexing the source
ancestor and columns the target node (0-based array positions, 1-based node ids).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dag import DEFAULT_MAX_PATHS, Dag, PathLimitError
from .model import HscmModel

AIR_FORMAT_VERSION = 1


class AirError(ValueError):
    pass


@dataclass(frozen=True)
class AirMatrix:
    values: np.ndarray

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, hi: tuple[int, int]) -> float:
        h, i = hi
        return float(self.values[h - 1, i - 1])


@dataclass(frozen=True)
class StandardizedAir:
    values: np.ndarray
    alpha: float

    def __getitem__(self, hi: tuple[int, int]) -> float:
        h, i = hi
        return float(self.values[h - 1, i - 1])


@dataclass(frozen=True)
class WeightMatrix:
    """Extremal weights ``W = F_tilde ** alpha``; each column sums to one over ``An(i)``."""

    values: np.ndarray

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, hi: tuple[int, int]) -> float:
        h, i = hi
        return float(self.values[h - 1, i - 1])

    def standardized_air(self, alpha: float) -> StandardizedAir:
        """``F_tilde = W ** (1/alpha)``. The raw ``F`` cannot be recovered: column scale is lost."""
        if not alpha > 0:
            raise AirError("alpha must be positive")
        return StandardizedAir(np.clip(self.values, 0.0, None) ** (1.0 / alpha), alpha)


def air_by_impulse(model: HscmModel) -> AirMatrix:
    """Row ``h`` is the forward pass of the unit impulse on ``eps_h``."""
    F = model.forward(np.eye(model.d))
    F[~model.dag.reach] = 0.0
    return AirMatrix(F)


def air_by_paths(model: HscmModel, max_paths: int = DEFAULT_MAX_PATHS) -> AirMatrix:
    """Closed-form AIR from directed paths ``h -> ... -> i``.

    * linear: sum over paths of the product of edge coefficients;
    * max-linear: maximum over paths of that product;
    * l_p: ``(sum over paths of prod c**p) ** (1/p)``. The p-th powers of an l_p model's
      impulse responses obey the linear recursion with coefficients ``c**p``, so the linear
      path formula applies to ``F**p``, not to ``F``. The two coincide only when ``h`` reaches
      ``i`` through a single path.
    """
    families = model.families()
    if len(families) != 1:
        raise AirError(f"path formulas need a single-family model, got {sorted(families)}; use air_by_impulse")
    family = families.pop()
    ps = {fn.p for fn in model.node_functions if fn.parents}
    if family == "lp" and len(ps) > 1:
        raise AirError(f"path formula needs a common p across lp nodes, got {sorted(ps)}")
    p = ps.pop() if (family == "lp" and ps) else 1.0

    dag = model.dag
    d = dag.node_count
    F = np.eye(d)
    for h in dag.nodes:
        acc = np.zeros(d)
        count = 0

        # one DFS from h walks every path h -> ... -> v exactly once
        def walk(v: int, weight: float) -> None:
            nonlocal count
            for c in dag.children(v):
                w = weight * model.coefficient(v, c) ** p
                count += 1
                if count > max_paths:
                    raise PathLimitError(f"more than {max_paths} paths leave node {h}")
                if family == "max_linear":
                    acc[c - 1] = max(acc[c - 1], w)
                else:
                    acc[c - 1] += w
                walk(c, w)

        walk(h, 1.0)
        desc = dag.reach[h - 1].copy()
        desc[h - 1] = False
        F[h - 1, desc] = acc[desc] ** (1.0 / p) if family == "lp" else acc[desc]
    return AirMatrix(F)


def standardize(air: AirMatrix, alpha: float) -> tuple[StandardizedAir, WeightMatrix]:
    """Normalise each column to unit alpha-norm; also return ``W = F_tilde ** alpha``."""
    if not alpha > 0:
        raise AirError("alpha must be positive")
    F = np.asarray(air.values, dtype=float)
    if np.any(np.diag(F) <= 0):
        bad = int(np.flatnonzero(np.diag(F) <= 0)[0]) + 1
        raise AirError(f"AIR column {bad} has a non-positive diagonal")
    if np.any(F < 0):
        raise AirError("AIR entries must be nonnegative")
    # scale each column by its max before powering, so huge or tiny columns stay representable
    top = F.max(axis=0)
    Fa = (F / top) ** alpha
    norm = Fa.sum(axis=0)
    W = Fa / norm
    Ft = (F / top) / norm ** (1.0 / alpha)
    return StandardizedAir(Ft, alpha), WeightMatrix(W)


def matrix_to_dict(values: np.ndarray, **extra) -> dict:
    out = {"version": AIR_FORMAT_VERSION, "d": int(values.shape[0])}
    out.update(extra)
    out["matrix"] = [[float(v) for v in row] for row in np.asarray(values)]
    return out


def matrix_from_dict(doc: dict, key: str = "matrix") -> np.ndarray:
    m = np.array(doc[key], dtype=float)
    d = int(doc["d"])
    if m.shape != (d, d):
        raise AirError(f"matrix shape {m.shape} does not match d={d}")
    return m


def matrix_to_csv(values: np.ndarray, row_label: str = "source") -> str:
    """Dense CSV with a header of target ids and a leading column of row ids."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d = values.shape[0]
    w.writerow([row_label] + [str(i) for i in range(1, d + 1)])
    for h in range(d):
        w.writerow([str(h + 1)] + [repr(float(v)) for v in values[h]])
    return buf.getvalue()


def support(values: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    return np.asarray(values) > threshold


def ancestral_closure(dag: Dag) -> np.ndarray:
    return dag.reach.copy()
