import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tailcausal.air import air_by_impulse, standardize
from tailcausal.ctc import CtcMatrix, population_ctc
from tailcausal.dag import CycleError, Dag, random_dag
from tailcausal.discovery import (
    VERDICTS,
    InfeasibleGammaError,
    ancestor_sets,
    causal_order,
    classify_pair,
    discover,
    generations,
    is_linear_extension,
    recover_weights,
)
from tailcausal.model import HscmModel, random_model

POP = 1e-9


def pipeline(model):
    _, W = standardize(air_by_impulse(model), model.alpha)
    return W, population_ctc(W, model.dag)


@pytest.mark.parametrize(
    "g12, g21, expected",
    [
        (1.0, 0.5, "i_causes_j"),
        (0.5, 1.0, "j_causes_i"),
        (0.0, 0.0, "no_link"),
        (0.3, 0.6, "common_cause"),
        (1.0, 1.0, "inconsistent"),
        (1.0, 0.0, "inconsistent"),
        (0.5, 0.0, "inconsistent"),
        (0.0, 1.0, "inconsistent"),
        (0.0, 0.5, "inconsistent"),
        (0.97, 0.5, "i_causes_j"),
        (0.04, 0.01, "no_link"),
    ],
)
def test_classify_pair_table(g12, g21, expected):
    v = classify_pair(g12, g21, 0.05)
    assert v.verdict == expected and v.verdict in VERDICTS
    assert (v.gamma_ij, v.gamma_ji, v.delta_used) == (g12, g21, 0.05)


def test_classify_pair_rejects_bad_delta():
    with pytest.raises(ValueError):
        classify_pair(0.5, 0.5, 0.5)


def test_ancestor_sets_examples(chain3, diamond):
    _, g = pipeline(random_model(chain3, "linear", 1.3, seed=1))
    an = ancestor_sets(g, POP)
    assert an.sets == {1: set(), 2: {1}, 3: {1, 2}}
    assert an.sizes() == {1: 0, 2: 1, 3: 2}
    assert all(not s for s in ancestor_sets(CtcMatrix(np.zeros((4, 4)), "population"), POP).sets.values())
    _, g = pipeline(HscmModel.uniform(diamond, "linear", 0.5))
    assert ancestor_sets(g, POP)[4] == {1, 2, 3}


def test_two_cycle_is_diagnosed():
    g = CtcMatrix(np.array([[1.0, 0.99], [0.98, 1.0]]), "estimated")
    an = ancestor_sets(g, 0.05)
    assert an.sets == {1: set(), 2: set()} and an.conflicts == [(1, 2)]
    with pytest.raises(CycleError):
        causal_order(g, 0.05, "exact")


def test_recover_examples(chain2, diamond):
    assert recover_weights(CtcMatrix(np.ones((1, 1)), "population"), POP).weights.values.tolist() == [[1.0]]
    g = CtcMatrix(np.array([[1.0, 1.0], [0.5, 1.0]]), "population")
    W = recover_weights(g, POP).weights
    assert (W[1, 1], W[1, 2], W[2, 2], W[2, 1]) == (1.0, 0.5, 0.5, 0.0)
    W_true, g = pipeline(HscmModel.uniform(diamond, "linear", 0.5, alpha=1.5))
    rec = recover_weights(g, POP)
    assert np.max(np.abs(rec.weights.values - W_true.values)) <= 1e-12
    assert rec.diagnostics == []


def test_recover_infeasible_and_clamp():
    g = CtcMatrix(np.array([[1.0, 1.0], [0.3, 1.0]]), "estimated")
    # W[1,2] = gamma[2,1] = 0.3 then W[2,2] = 0.7: feasible
    assert recover_weights(g, 0.05).weights[2, 2] == pytest.approx(0.7)
    # chain 1 -> 2 -> 3 where gamma[3,2] is below the weight already assigned to 1
    G = np.array([[1.0, 1.0, 1.0], [0.2, 1.0, 1.0], [0.5, 0.3, 1.0]])
    with pytest.raises(InfeasibleGammaError) as info:
        recover_weights(CtcMatrix(G, "estimated"), 0.01)
    assert (info.value.j, info.value.i) == (2, 3)
    G[2, 1] = 0.49
    rec = recover_weights(CtcMatrix(G, "estimated"), 0.01)
    assert rec.weights[2, 3] == 0.0 and any("clamped" in m for m in rec.diagnostics)


def test_orders(chain3, diamond):
    _, g = pipeline(HscmModel.uniform(chain3, "lp", 0.7, p=2.0))
    assert causal_order(g, POP, "exact") == [1, 2, 3]
    assert causal_order(g, POP, "ease") == [1, 2, 3]
    _, g = pipeline(HscmModel.uniform(Dag(4), "linear"))
    assert causal_order(g, POP, "exact") == [1, 2, 3, 4]
    assert causal_order(g, POP, "ease") == [1, 2, 3, 4]
    _, g = pipeline(HscmModel.uniform(diamond, "max_linear", 0.8, alpha=2.7))
    order = causal_order(g, POP, "ease")
    assert order[0] == 1 and order[-1] == 4


def test_generations_examples(chain3, diamond):
    assert generations({1: set(), 2: {1}, 3: {1, 2}}) == {1: 0, 2: 1, 3: 2}
    _, g = pipeline(HscmModel.uniform(diamond, "linear"))
    assert generations(ancestor_sets(g, POP)) == {1: 0, 2: 1, 3: 1, 4: 2}
    assert generations({1: set(), 2: set()}) == {1: 0, 2: 0}
    with pytest.raises(CycleError):
        generations({1: {2}, 2: {1}})


pop_models = st.builds(
    lambda d, prob, seed, alpha: random_model(random_dag(d, prob, seed), ["linear", "max_linear", "lp"], alpha, seed),
    st.integers(1, 10),
    st.floats(0.1, 0.9),
    st.integers(0, 2**32 - 1),
    st.sampled_from([0.8, 1.0, 1.5, 2.7]),
)


@settings(max_examples=150, deadline=None)
@given(pop_models)
def test_population_discovery_properties(model):
    W, g = pipeline(model)
    rec = recover_weights(g, POP).weights.values
    assert np.max(np.abs(rec - W.values)) <= 1e-10
    assert np.array_equal(rec > POP, model.dag.reach)
    order = causal_order(g, POP, "exact")
    assert is_linear_extension(order, model.dag.reach)
    an = ancestor_sets(g, POP)
    gens = generations(an)
    assert all((gens[i] == 0) == (not an[i]) for i in gens)


@settings(max_examples=100, deadline=None)
@given(pop_models, st.randoms(use_true_random=False))
def test_generations_relabel_invariant(model, rnd):
    _, g = pipeline(model)
    d = model.d
    perm = list(range(d))
    rnd.shuffle(perm)  # new label of old node v+1 is perm[v]+1
    P = np.zeros((d, d))
    P[perm, range(d)] = 1
    relabelled = CtcMatrix(P @ g.gamma @ P.T, "population")
    before = generations(ancestor_sets(g, POP))
    after = generations(ancestor_sets(relabelled, POP))
    assert all(after[perm[v - 1] + 1] == before[v] for v in before)


def test_discover_report_serialises(diamond):
    _, g = pipeline(HscmModel.uniform(diamond, "linear", 0.5, alpha=1.5))
    rep = discover(g, alpha=1.5)
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["delta"] == POP
    assert doc["causal_order"]["exact"] == [1, 2, 3, 4]
    verdicts = {tuple(v["pair"]): v["verdict"] for v in doc["verdicts"]}
    assert verdicts[(1, 4)] == "i_causes_j" and verdicts[(2, 3)] == "common_cause"
    assert doc["generations"] == {"1": 0, "2": 1, "3": 1, "4": 2}
    assert len(doc["recovered_standardized_air"]["matrix"]) == 4
    assert "alpha" in doc["weight_convention"]
