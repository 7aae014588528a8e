"""Causal discovery for heavy-tailed homogeneous structural causal models."""

__version__ = "0.1.0"

from .air import AirMatrix, StandardizedAir, WeightMatrix, air_by_impulse, air_by_paths, standardize
from .ctc import CtcMatrix, choose_k, empirical_ctc, population_ctc
from .dag import Dag, ancestors, descendants, enumerate_paths, random_dag, topological_order
from .discovery import (
    DiscoveryReport,
    PairVerdict,
    ancestor_sets,
    causal_order,
    classify_pair,
    discover,
    generations,
    recover_weights,
)
from .model import (
    HscmModel,
    NoiseSpec,
    SampleMatrix,
    StructuralFunctionSpec,
    check_axioms,
    eval_structural,
    sample_noise,
    simulate,
)
from .oracle import brute_force_ctc, exhaustive_roundtrip, mc_tail_ratio
