import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from loopinfo.errors import BudgetExceeded, ModelError, NonIIDExogenous, UnboundedWindow
from loopinfo.example1 import Example1Config, build_example1
from loopinfo.fsm import chain_entropy, compile_fsm, tree_chain_entropies
from loopinfo.joint import Budget, enumerate_joint
from loopinfo.model import (
    EXOGENOUS,
    Block,
    CallableMap,
    ExoGroup,
    ExogenousSpec,
    SignalDecl,
    build_system,
    independent,
)
from loopinfo.theorems import FAMILIES, PATTERNS, RandomSystemParams, generate


def coin_loop(n, p=0.5):
    """y copies a fresh coin each step; u feeds y back and is ignored."""
    sig = [SignalDecl("q", 2, EXOGENOUS), SignalDecl("u", 2, prologue={0: 0}), SignalDecl("y", 2, prologue={0: 0})]
    blocks = [
        Block("C", "y", "u", 1, "q[t] + 0 * u[t-1]", "q"),
        Block("F", "u", "y", 0, "y[t]"),
    ]
    return build_system(sig, independent(q={0: 1 - p, 1: p}), blocks, n)


def test_iid_uniform_gives_one_bit_per_step():
    sys = coin_loop(12)
    H = tree_chain_entropies(compile_fsm(sys, [("y", 0)]), 12)
    assert H.shape == (12, 1)
    assert np.allclose(H, 1.0, atol=1e-12)


def test_iid_biased_rate():
    sys = coin_loop(9, 0.1)
    h = chain_entropy(compile_fsm(sys, [("y", 0)]), 9)
    assert h == pytest.approx(9 * oracle.binary_entropy(0.1), abs=1e-9)


def test_example1_state_space_is_small():
    for enc in ("E1", "E2"):
        sys = build_example1(Example1Config(enc, 0.9, 0.503, 8, "tree"))
        model = compile_fsm(sys, [("w", 0)])
        assert model.n_states <= 16
        rows = model.kernel.sum(axis=(0, 2))
        assert np.allclose(rows, 1.0)


def test_tree_matches_enumeration_example1():
    for enc in ("E1", "E2"):
        sys = build_example1(Example1Config(enc, 0.9, 0.3, 9, "tree"))
        model = compile_fsm(sys, [("w", 0)])
        H = tree_chain_entropies(model, 9)[:, 0]
        t = enumerate_joint(sys, [("w", k) for k in range(1, 10)])
        ref = [t.entropy([("w", j) for j in range(1, k + 1)]) - t.entropy([("w", j) for j in range(1, k)])
               for k in range(1, 10)]
        assert np.allclose(H, ref, atol=1e-9)


SYSTEMS = st.builds(
    RandomSystemParams,
    seed=st.integers(0, 10_000),
    horizon=st.integers(2, 5),
    alphabet=st.just(2),
    pattern=st.sampled_from(list(PATTERNS)),
    family=st.sampled_from(FAMILIES),
)


@settings(max_examples=25)
@given(SYSTEMS)
def test_tree_matches_brute_force(params):
    sys = generate(params)
    target = "y" if sys.has("y") else sys.blocks[-1].output
    try:
        model = compile_fsm(sys, [(target, 0)])
    except NonIIDExogenous:
        return
    H = tree_chain_entropies(model, sys.horizon)[:, 0]
    # enumeration is checked against brute force in test_joint; it is the reference here
    t = enumerate_joint(sys, sys.variables([target]))
    for i, h in zip(range(model.first, sys.horizon + 1), H):
        past = [(target, j) for j in range(model.first, i)]
        assert h == pytest.approx(t.entropy(past + [(target, i)]) - t.entropy(past), abs=1e-9)


def test_two_components_split_the_step_entropy():
    sys = build_example1(Example1Config("E1", 0.9, 0.5, 7, "tree"))
    model = compile_fsm(sys, [("w", 0), ("y", 1)])
    H = tree_chain_entropies(model, 7)
    d = oracle.Dist.of(sys, ["w", "y"])
    for k in range(1, 8):
        hist = [v for j in range(1, k) for v in (("w", j), ("y", j - 1))]
        assert H[k - 1, 0] == pytest.approx(d.H([("w", k)], hist), abs=1e-9)
        assert H[k - 1, 1] == pytest.approx(d.H([("y", k - 1)], hist + [("w", k)]), abs=1e-9)


def test_unbounded_window_is_rejected():
    sig = [SignalDecl("q", 2, EXOGENOUS), SignalDecl("u", 2, prologue={0: 0}), SignalDecl("y", 2, prologue={0: 0})]
    anything = CallableMap(lambda get, t: get("q", t) * 0 + get("u", t - 1) * 0 + get("q", t))
    blocks = [Block("C", "y", "u", 1, anything, "q"), Block("F", "u", "y", 0, "y[t]")]
    sys = build_system(sig, independent(q={0: 0.5, 1: 0.5}), blocks, 4)
    with pytest.raises(UnboundedWindow):
        compile_fsm(sys, [("y", 0)])


def test_time_varying_noise_is_rejected():
    sig = [SignalDecl("q", 2, EXOGENOUS), SignalDecl("u", 2, prologue={0: 0}), SignalDecl("y", 2, prologue={0: 0})]
    blocks = [Block("C", "y", "u", 1, "q[t] + 0 * u[t-1]", "q"), Block("F", "u", "y", 0, "y[t]")]
    steps = {t: {(0,): 0.5, (1,): 0.5} for t in range(1, 5)}
    sys = build_system(sig, ExogenousSpec((ExoGroup(("q",), None, steps),)), blocks, 4)
    with pytest.raises(NonIIDExogenous):
        compile_fsm(sys, [("y", 0)])


def test_bad_observables():
    sys = coin_loop(3)
    with pytest.raises(ModelError):
        compile_fsm(sys, [])
    with pytest.raises(ModelError):
        compile_fsm(sys, [("nope", 0)])
    with pytest.raises(ModelError):
        tree_chain_entropies(compile_fsm(sys, [("y", 0)], first=3), 2)


def test_frontier_budget():
    sys = build_example1(Example1Config("E1", 0.9, 0.3, 14, "tree"))
    model = compile_fsm(sys, [("w", 0)])
    with pytest.raises(BudgetExceeded):
        tree_chain_entropies(model, 14, Budget(leaves=64))


def test_entropy_rate_bounded_by_log_alphabet():
    sys = build_example1(Example1Config("E1", 0.9, 0.7, 16, "tree"))
    H = tree_chain_entropies(compile_fsm(sys, [("w", 0)]), 16)
    assert np.all(H >= -1e-12)
    assert np.all(H <= math.log2(2) + 1e-12)
