"""Heavy-tailed homogeneous structural causal models: noise, structural functions, simulation.

Every node ``i`` is assigned ``X_i = f_i(X_pa(i), eps_i)`` where ``f_i`` is one of three
1-homogeneous families (linear, max-linear, l_p) and the noise variables are i.i.d. and
regularly varying with a common tail index ``alpha``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

import jsonschema
import numpy as np
from scipy.special import lambertw

from .dag import Dag

NOISE_FAMILIES = ("pareto", "frechet", "log_perturbed_pareto")
FUNCTION_FAMILIES = ("linear", "max_linear", "lp")
BLOCK_SIZE = 4096
MODEL_FORMAT_VERSION = 1


class ModelError(ValueError):
    """A model violates its structural constraints."""


@dataclass(frozen=True)
class NoiseSpec:
    family: str
    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ModelError(f"unknown noise family {self.family!r}; expected one of {NOISE_FAMILIES}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ModelError(f"alpha must be positive and finite, got {self.alpha}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ModelError(f"scale must be positive and finite, got {self.scale}")

    def survival(self, x):
        """Exact ``P(eps > x)``."""
        x = np.asarray(x, dtype=float)
        a, s = self.alpha, self.scale
        y = np.maximum(x, 0.0) / s
        with np.errstate(divide="ignore", over="ignore"):
            if self.family == "pareto":
                out = np.where(y >= 1.0, y ** -a, 1.0)
            elif self.family == "frechet":
                out = np.where(y > 0, -np.expm1(-(y ** -a)), 1.0)
            else:
                yy = np.maximum(y, 1.0)
                out = np.where(y >= 1.0, (1.0 + a * np.log(yy)) * yy ** -a, 1.0)
        return out[()] if out.ndim == 0 else out

    def from_survival(self, u):
        """Map survival levels ``u`` in (0, 1] to noise values (inverse of :meth:`survival`)."""
        u = np.asarray(u, dtype=float)
        a, s = self.alpha, self.scale
        if self.family == "pareto":
            out = s * u ** (-1.0 / a)
        elif self.family == "frechet":
            out = s * (-np.log1p(-u)) ** (-1.0 / a)
        else:
            # survival (1 + a t) exp(-a t) with t = log(x / s); solved with the -1 branch of Lambert W
            w = lambertw(-u / np.e, -1).real
            out = s * np.exp((-w - 1.0) / a)
        return out[()] if out.ndim == 0 else out

    def quantile(self, q):
        """Noise value with ``P(eps <= x) = q``."""
        return self.from_survival(1.0 - np.asarray(q, dtype=float))


def inverse_cdf(spec: NoiseSpec, u):
    """The sampling transform applied to uniforms ``u``.

    Pareto draws are ``scale * u**(-1/alpha)`` and Frechet draws are
    ``scale * (-log u)**(-1/alpha)``, as usual for inverse-transform sampling.
    """
    u = np.asarray(u, dtype=float)
    if spec.family == "frechet":
        out = spec.scale * (-np.log(u)) ** (-1.0 / spec.alpha)
        return out[()] if out.ndim == 0 else out
    return spec.from_survival(u)


@dataclass(frozen=True)
class StructuralFunctionSpec:
    family: str
    parent_coefficients: Mapping[int, float] = field(default_factory=dict)
    p: float | None = None

    def __post_init__(self):
        if self.family not in FUNCTION_FAMILIES:
            raise ModelError(f"unknown structural family {self.family!r}; expected one of {FUNCTION_FAMILIES}")
        if self.family == "lp":
            if self.p is None or not (np.isfinite(self.p) and self.p > 0):
                raise ModelError(f"lp family requires p in (0, inf), got {self.p}")
        elif self.p is not None:
            raise ModelError(f"p is only meaningful for the lp family, got p={self.p} for {self.family}")
        coefs = {}
        for h, c in self.parent_coefficients.items():
            c = float(c)
            if not (np.isfinite(c) and c > 0):
                raise ModelError(f"coefficient for parent {h} must be > 0, got {c}; drop the edge instead")
            coefs[int(h)] = c
        object.__setattr__(self, "parent_coefficients", MappingProxyType(dict(sorted(coefs.items()))))

    @property
    def parents(self) -> tuple[int, ...]:
        return tuple(self.parent_coefficients)

    @property
    def coefficients(self) -> np.ndarray:
        return np.fromiter(self.parent_coefficients.values(), float, len(self.parent_coefficients))

    def apply(self, parent_values: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """Vectorised evaluation; ``parent_values`` has one column per parent in ``parents`` order."""
        return _combine(self.family, self.p, self.coefficients, parent_values, noise)


def _combine(family: str, p: float | None, coefs: np.ndarray, parent_values: np.ndarray, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if coefs.size == 0:
        return z.copy()
    terms = np.asarray(parent_values, dtype=float) * coefs
    if family == "linear":
        return terms.sum(axis=-1) + z
    if family == "max_linear":
        return np.maximum(terms.max(axis=-1), z)
    full = np.concatenate([terms, z[..., None]], axis=-1)
    top = full.max(axis=-1)
    safe = np.where(top > 0, top, 1.0)
    # factor out the largest entry so large inputs cannot overflow under **p
    return np.where(top > 0, safe * ((full / safe[..., None]) ** p).sum(axis=-1) ** (1.0 / p), 0.0)


def eval_structural(spec: StructuralFunctionSpec, parent_values: Mapping[int, float], noise_value: float) -> float:
    """Evaluate one structural assignment at a single point."""
    if set(parent_values) != set(spec.parents):
        raise ModelError(f"parent values keyed {sorted(parent_values)} but spec has parents {list(spec.parents)}")
    x = np.array([parent_values[h] for h in spec.parents], dtype=float)
    z = float(noise_value)
    if not (np.all(np.isfinite(x)) and np.isfinite(z)):
        raise ValueError("structural inputs must be finite")
    if np.any(x < 0) or z < 0:
        raise ValueError("structural inputs must be nonnegative")
    return float(spec.apply(x[None, :], np.array([z]))[0])


@dataclass(frozen=True)
class HscmModel:
    dag: Dag
    node_functions: tuple[StructuralFunctionSpec, ...]
    noise: NoiseSpec

    def __post_init__(self):
        fns = tuple(self.node_functions)
        object.__setattr__(self, "node_functions", fns)
        if len(fns) != self.dag.node_count:
            raise ModelError(f"{len(fns)} structural functions for {self.dag.node_count} nodes")
        for i, fn in zip(self.dag.nodes, fns):
            if set(fn.parents) != set(self.dag.parents(i)):
                raise ModelError(
                    f"node {i}: coefficient keys {list(fn.parents)} differ from parents {list(self.dag.parents(i))}"
                )

    @property
    def d(self) -> int:
        return self.dag.node_count

    @property
    def alpha(self) -> float:
        return self.noise.alpha

    def function(self, i: int) -> StructuralFunctionSpec:
        return self.node_functions[i - 1]

    def families(self) -> set[str]:
        return {fn.family for fn in self.node_functions}

    def coefficient(self, h: int, i: int) -> float:
        return self.function(i).parent_coefficients[h]

    def forward(self, noise: np.ndarray) -> np.ndarray:
        """Propagate an ``n x d`` noise matrix through the graph in topological order."""
        noise = np.asarray(noise, dtype=float)
        x = np.empty_like(noise)
        for i in self.dag.order:
            fn = self.function(i)
            cols = [h - 1 for h in fn.parents]
            x[:, i - 1] = fn.apply(x[:, cols], noise[:, i - 1])
        return x

    @classmethod
    def uniform(
        cls,
        dag: Dag,
        family: str,
        coefficients: float | Mapping[tuple[int, int], float] = 1.0,
        alpha: float = 1.0,
        p: float | None = None,
        noise_family: str = "pareto",
        scale: float = 1.0,
    ) -> "HscmModel":
        """All nodes share ``family``; ``coefficients`` is a constant or an ``{(h, i): c}`` map."""
        fns = []
        for i in dag.nodes:
            if isinstance(coefficients, Mapping):
                cs = {h: coefficients[(h, i)] for h in dag.parents(i)}
            else:
                cs = {h: float(coefficients) for h in dag.parents(i)}
            fns.append(StructuralFunctionSpec(family, cs, p if family == "lp" else None))
        return cls(dag, tuple(fns), NoiseSpec(noise_family, alpha, scale))


def random_model(
    dag: Dag,
    families: str | list[str],
    alpha: float,
    seed: int,
    coef_range: tuple[float, float] = (0.1, 2.0),
    p_choices: tuple[float, ...] = (0.5, 2.0, 3.0),
    noise_family: str = "pareto",
    scale: float = 1.0,
) -> HscmModel:
    """Random coefficients on ``dag``; a list of families is sampled per node (a mixture)."""
    rng = np.random.default_rng(seed)
    lo, hi = coef_range
    fns = []
    for i in dag.nodes:
        fam = families if isinstance(families, str) else families[rng.integers(len(families))]
        cs = {h: float(rng.uniform(lo, hi)) for h in dag.parents(i)}
        p = float(p_choices[rng.integers(len(p_choices))]) if fam == "lp" else None
        fns.append(StructuralFunctionSpec(fam, cs, p))
    return HscmModel(dag, tuple(fns), NoiseSpec(noise_family, alpha, scale))


# ---------------------------------------------------------------- sampling


def _block_uniforms(seed: int, block: int, rows: int, d: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    rng = np.random.Generator(np.random.Philox(ss))
    bits = rng.integers(0, 2**53, size=(rows, d), dtype=np.uint64)
    # strictly inside (0, 1): both tails of the inverse CDF stay finite
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("TAILCAUSAL_THREADS", "1") or 1)
    return max(1, int(threads))


def noise_matrix(spec: NoiseSpec, n: int, d: int, seed: int, threads: int | None = None) -> np.ndarray:
    """``n x d`` i.i.d. noise; rows come from fixed blocks of 4096, each with its own substream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    starts = range(0, n, BLOCK_SIZE)

    def block(b: int) -> np.ndarray:
        rows = min(BLOCK_SIZE, n - b * BLOCK_SIZE)
        return inverse_cdf(spec, _block_uniforms(seed, b, rows, d))

    threads = resolve_threads(threads)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(block, range(len(starts))))
    else:
        parts = [block(b) for b in range(len(starts))]
    return np.concatenate(parts, axis=0)


def sample_noise(spec: NoiseSpec, n: int, seed: int) -> np.ndarray:
    return noise_matrix(spec, n, 1, seed)[:, 0]


@dataclass
class SampleMatrix:
    values: np.ndarray
    noise: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i - 1]


def simulate(model: HscmModel, n: int, seed: int, threads: int | None = None, keep_noise: bool = False) -> SampleMatrix:
    noise = noise_matrix(model.noise, n, model.d, seed, threads)
    values = model.forward(noise)
    return SampleMatrix(values, noise if keep_noise else None)


def write_samples_csv(samples: SampleMatrix | np.ndarray, path: str | Path) -> None:
    values = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples)
    header = ",".join(f"X{i}" for i in range(1, values.shape[1] + 1))
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, values, fmt="%.17g", delimiter=",")


def read_samples_csv(path: str | Path) -> SampleMatrix:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != [f"X{i}" for i in range(1, len(header) + 1)]:
            raise ValueError(f"{path}: header must be X1,...,Xd, got {','.join(header)}")
        values = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=float)
    if values.shape[1] != len(header):
        raise ValueError(f"{path}: {values.shape[1]} columns but header names {len(header)}")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ValueError(f"{path}: samples must be finite and nonnegative")
    return SampleMatrix(values)


# ---------------------------------------------------------------- axioms


@dataclass
class AxiomResult:
    name: str
    passed: bool
    checked: int
    counterexample: dict[str, Any] | None = None


@dataclass
class AxiomReport:
    family: str
    results: list[AxiomResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> AxiomResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


AXIOMS = ("nonnegativity", "vanishing_at_origin", "continuity", "homogeneity", "deletion_monotonicity")


def check_axioms(spec: StructuralFunctionSpec, trials: int = 10_000, tol: float = 1e-9, seed: int = 0) -> AxiomReport:
    """Numerically probe the five structural-function axioms on random inputs.

    The input vector is ``(x_pa, z)`` with ``len(spec.parents) + 1`` coordinates. Failures
    are reported with the first offending input instead of raising.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    m = len(spec.parents) + 1

    def f(v: np.ndarray) -> np.ndarray:
        return spec.apply(v[:, :-1], v[:, -1])

    x = 10.0 ** rng.uniform(-3, 3, size=(trials, m))
    x[rng.random((trials, m)) < 0.3] = 0.0
    # keep at least one nonzero coordinate per trial
    dead = ~x.any(axis=1)
    x[dead, rng.integers(m, size=dead.sum())] = 1.0
    fx = f(x)
    results = []

    def record(name: str, bad: np.ndarray, extra: dict[str, np.ndarray]) -> None:
        if bad.any():
            t = int(np.flatnonzero(bad)[0])
            ce = {"x": x[t].tolist(), "f(x)": float(fx[t])}
            ce.update({k: (v[t].tolist() if np.ndim(v[t]) else float(v[t])) for k, v in extra.items()})
            results.append(AxiomResult(name, False, trials, ce))
        else:
            results.append(AxiomResult(name, True, trials))

    record("nonnegativity", ~(fx >= 0), {})

    f0 = f(np.zeros((1, m)))[0]
    bad = ~(fx > 0)
    if f0 != 0:
        bad = bad.copy()
        bad[0] = True
    record("vanishing_at_origin", bad, {"f(0)": np.full(trials, f0)})

    # the change under shrinking nonnegative perturbations must shrink toward zero
    direction = rng.random((trials, m))
    size = np.maximum(x.max(axis=1), 1.0)
    steps = [10.0**-e for e in range(2, 12, 2)]
    deltas = np.stack([np.abs(f(x + (t * size)[:, None] * direction) - fx) for t in steps])
    slack = tol * (1.0 + fx)
    nonincreasing = np.all(deltas[1:] <= deltas[:-1] + slack, axis=0)
    shrinking = (deltas[-1] <= 0.5 * deltas[0] + slack) | (deltas[0] <= slack)
    record("continuity", ~(nonincreasing & shrinking), {"deltas": deltas.T})

    c = 10.0 ** rng.uniform(-3, 3, size=trials)
    fcx = f(c[:, None] * x)
    record("homogeneity", np.abs(fcx - c * fx) > tol * (1.0 + c * fx), {"c": c, "f(cx)": fcx})

    keep = rng.random((trials, m)) < 0.5
    empty = ~keep.any(axis=1)
    keep[empty, rng.integers(m, size=empty.sum())] = True
    fj = f(np.where(keep, x, 0.0))
    record("deletion_monotonicity", fx < fj - tol * (1.0 + fx), {"J": keep, "f(x_J)": fj})
    return AxiomReport(spec.family, results)


# ---------------------------------------------------------------- model files

MODEL_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "alpha", "noise", "nodes"],
    "properties": {
        "version": {"const": MODEL_FORMAT_VERSION},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": list(NOISE_FAMILIES)},
                "scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "family", "parents"],
                "properties": {
                    "id": {"type": "integer", "minimum": 1},
                    "family": {"enum": list(FUNCTION_FAMILIES)},
                    "p": {"type": "number", "exclusiveMinimum": 0},
                    "parents": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["id", "coef"],
                            "properties": {
                                "id": {"type": "integer", "minimum": 1},
                                "coef": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                    },
                },
            },
        },
    },
}


def model_to_dict(model: HscmModel) -> dict[str, Any]:
    nodes = []
    for i in model.dag.nodes:
        fn = model.function(i)
        node: dict[str, Any] = {"id": i, "family": fn.family}
        if fn.family == "lp":
            node["p"] = fn.p
        node["parents"] = [{"id": h, "coef": c} for h, c in fn.parent_coefficients.items()]
        nodes.append(node)
    return {
        "version": MODEL_FORMAT_VERSION,
        "alpha": model.noise.alpha,
        "noise": {"family": model.noise.family, "scale": model.noise.scale},
        "nodes": nodes,
    }


def model_from_dict(doc: dict[str, Any]) -> HscmModel:
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ModelError(f"model file invalid at {where}: {exc.message}") from None
    d = len(doc["nodes"])
    ids = sorted(node["id"] for node in doc["nodes"])
    if ids != list(range(1, d + 1)):
        raise ModelError(f"node ids must be exactly 1..{d}, got {ids}")
    by_id = {node["id"]: node for node in doc["nodes"]}
    edges = []
    fns = []
    for i in range(1, d + 1):
        node = by_id[i]
        pids = [pa["id"] for pa in node["parents"]]
        if len(set(pids)) != len(pids):
            raise ModelError(f"node {i}: duplicate parent ids")
        edges += [(h, i) for h in pids]
        fns.append(
            StructuralFunctionSpec(
                node["family"], {pa["id"]: pa["coef"] for pa in node["parents"]}, node.get("p")
            )
        )
    try:
        dag = Dag.from_edges(d, edges)
    except ValueError as exc:
        raise ModelError(f"model graph invalid: {exc}") from None
    noise = doc["noise"]
    return HscmModel(dag, tuple(fns), NoiseSpec(noise["family"], doc["alpha"], noise.get("scale", 1.0)))
