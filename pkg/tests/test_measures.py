import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from loopinfo.errors import VariableMissing
from loopinfo.example1 import Example1Config, build_example1
from loopinfo.joint import enumerate_joint
from loopinfo.measures import (
    conservation_extended,
    directed_information,
    entropy,
    fano_decomposition,
    itl_rate,
    itl_terms,
    markov_tv,
    massey_conservation,
    mutual_information,
    reverse_directed_information,
)
from loopinfo.model import EXOGENOUS, Block, SignalDecl, build_system, independent
from loopinfo.theorems import PATTERNS, RandomSystemParams, generate

HB9 = oracle.binary_entropy(0.9)


def open_loop(n, p_in=0.5, flip=0.0, feedback="0 * y[t-1]"):
    """x is a fresh Bernoulli(p_in) symbol, y = x through a BSC(flip); u returns y."""
    sig = [
        SignalDecl("q", 2, EXOGENOUS),
        SignalDecl("s", 2, EXOGENOUS),
        SignalDecl("x", 2),
        SignalDecl("y", 2, prologue={0: 0}),
    ]
    blocks = [
        Block("E", "x", "y", 1, f"q[t] + {feedback}", "q"),
        Block("C", "y", "x", 0, "x[t] xor s[t]", "s"),
    ]
    exo = independent(q={0: 1 - p_in, 1: p_in}, s={0: 1 - flip, 1: flip})
    return build_system(sig, exo, blocks, n)


def message_loop(n, source, p=0.5):
    """Message w from ``source`` (may read y[t-1]), sent unchanged: x = w, y = x."""
    sig = [
        SignalDecl("q", 2, EXOGENOUS),
        SignalDecl("w", 2),
        SignalDecl("x", 2),
        SignalDecl("y", 2, prologue={0: 0}),
    ]
    blocks = [
        Block("S", "w", "y", 1, source, "q"),
        Block("E", "x", "w", 0, "w[t]"),
        Block("C", "y", "x", 0, "x[t]"),
    ]
    return build_system(sig, independent(q={0: 1 - p, 1: p}), blocks, n)


# ---- hand-checkable values --------------------------------------------------------------


def test_uniform_symbols_one_bit_each():
    sys = open_loop(5)
    t = enumerate_joint(sys)
    assert entropy(t, sys.variables(["x"])) == pytest.approx(5.0, abs=1e-12)
    assert directed_information(sys, "x", "y").value_bits == pytest.approx(5.0, abs=1e-12)


def test_bernoulli_point_nine():
    sys = open_loop(4, p_in=0.9)
    r = directed_information(sys, "x", "y")
    assert r.value_bits / 4 == pytest.approx(0.469, abs=5e-4)
    assert r.value_bits / 4 == pytest.approx(HB9, abs=1e-12)


def test_bsc_capacity_input():
    sys = open_loop(4, flip=0.11)
    per = directed_information(sys, "x", "y").value_bits / 4
    assert per == pytest.approx(1 - oracle.binary_entropy(0.11), abs=1e-12)
    assert per == pytest.approx(0.5, abs=1e-3)


def test_perfect_feedback_degeneracies():
    # y = x and x ignores y: forward flow is all of H(x), backward flow is zero
    sys = open_loop(4, p_in=0.3)
    hx = 4 * oracle.binary_entropy(0.3)
    assert directed_information(sys, "x", "y").value_bits == pytest.approx(hx, abs=1e-12)
    assert reverse_directed_information(sys, "y", "x").value_bits == pytest.approx(0.0, abs=1e-12)
    # x = y[t-1] xor q: past outputs reach x but carry no information about it
    fb = open_loop(4, p_in=0.5, feedback="y[t-1]")
    assert reverse_directed_information(fb, "y", "x").value_bits == pytest.approx(0.0, abs=1e-12)
    # x = y[t-1] exactly: the loop is frozen at its prologue
    frozen = open_loop(4, p_in=0.0, feedback="y[t-1]")
    assert directed_information(frozen, "x", "y").value_bits == pytest.approx(0.0, abs=1e-12)


def test_reverse_flow_with_biased_feedback():
    # x(i) = y(i-1) with probability .8 and y is x through a noisy channel
    sys = open_loop(4, p_in=0.2, flip=0.1, feedback="y[t-1]")
    d = oracle.Dist.of(sys, ["x", "y"])
    assert reverse_directed_information(sys, "y", "x").value_bits == pytest.approx(d.DI("y", "x", 1), abs=1e-12)
    assert reverse_directed_information(sys, "y", "x").value_bits > 0.1


def test_itl_without_feedback_is_entropy_rate():
    sys = message_loop(6, "q[t] + 0 * y[t-1]", p=0.9)
    r = itl_rate(sys)
    t = enumerate_joint(sys)
    assert r.value_bits == pytest.approx(entropy(t, sys.variables(["w"])) / 6, abs=1e-12)
    assert r.value_bits == pytest.approx(HB9, abs=1e-12)


def test_itl_of_deterministic_feedback_is_zero():
    sys = message_loop(6, "y[t-1] + 1")
    assert itl_rate(sys).value_bits == pytest.approx(0.0, abs=1e-12)
    sys = message_loop(6, "q[t] * 0 + y[t-1]")
    assert all(abs(v) < 1e-12 for v in itl_terms(sys).per_step_terms)


def test_example_e2_rate():
    sys = build_example1(Example1Config("E2", 0.9, 0.5, 8))
    assert itl_rate(sys).value_bits == pytest.approx(HB9, abs=1e-9)
    assert itl_rate(sys).value_bits == pytest.approx(0.469, abs=5e-4)


def test_tree_engine_agrees_on_itl():
    sys = build_example1(Example1Config("E1", 0.9, 0.503, 7))
    a = itl_rate(sys, engine="enumerate")
    b = itl_rate(sys, engine="tree")
    assert b.value_bits == pytest.approx(a.value_bits, abs=1e-9)
    di_a = directed_information(sys, "w", "y", 0, steps=range(1, 8))
    di_b = directed_information(sys, "w", "y", 0, steps=range(1, 8), engine="tree")
    assert di_b.value_bits == pytest.approx(di_a.value_bits, abs=1e-9)


def test_fano_on_noisy_channel():
    sys = build_example1(Example1Config("E2", 0.9, 0.5, 5, flip=0.05))
    f = fano_decomposition(sys)
    assert abs(f.identity_error) < 1e-9
    assert f.bound_holds
    assert 0 < f.pr_err < 1


def test_fano_error_free():
    sys = build_example1(Example1Config("E1", 0.9, 0.503, 5))
    f = fano_decomposition(sys)
    assert f.pr_err == pytest.approx(0.0, abs=1e-15)
    assert abs(f.identity_error) < 1e-9
    assert f.h_w_given_yp == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("enc", ["E1", "E2"])
def test_conservation_on_examples(enc):
    rec = conservation_extended(build_example1(Example1Config(enc, 0.9, 0.503, 6)))
    assert rec.max_error < 1e-9
    assert rec.side_leak == 0.0
    assert abs(rec.leak_error) < 1e-9


def test_conservation_without_feedback():
    rec = conservation_extended(message_loop(5, "q[t] + 0 * y[t-1]", p=0.7))
    assert rec.backward == pytest.approx(0.0, abs=1e-12)
    assert rec.max_error < 1e-9


def test_markov_tv_detects_dependence():
    sys = open_loop(2, p_in=0.5, flip=0.1)
    t = enumerate_joint(sys)
    assert markov_tv(t, [("x", 1)], [("y", 1)], []) > 0.3
    assert markov_tv(t, [("x", 1)], [("s", 1)], []) < 1e-12
    assert markov_tv(t, [("x", 1)], [("x", 2)], [("y", 1)]) < 1e-12


def test_unknown_signal_rejected():
    with pytest.raises(VariableMissing):
        directed_information(open_loop(2), "zz", "y")


# ---- properties against the brute-force oracle ---------------------------------------------

SYSTEMS = st.builds(
    RandomSystemParams,
    seed=st.integers(0, 10_000),
    horizon=st.integers(2, 3),
    alphabet=st.just(2),
    pattern=st.sampled_from(list(PATTERNS)),
    family=st.just("four-block"),
)
INTERNAL = ["e", "x", "y", "u"]


@settings(max_examples=30)
@given(SYSTEMS, st.sampled_from(INTERNAL), st.sampled_from(INTERNAL), st.integers(0, 1))
def test_directed_information_matches_definition(params, a, b, delay):
    sys = generate(params)
    d = oracle.Dist.of(sys, [a, b, "r"])
    r = directed_information(sys, a, b, delay)
    assert r.value_bits == pytest.approx(d.DI(a, b, delay), abs=1e-9)
    cond = directed_information(sys, a, b, delay, [("r", 0)])
    assert cond.value_bits == pytest.approx(d.DI(a, b, delay, [("r", 0)]), abs=1e-9)


@settings(max_examples=30)
@given(SYSTEMS, st.sampled_from(INTERNAL), st.sampled_from(INTERNAL))
def test_flow_bounds_and_conservation(params, a, b):
    sys = generate(params)
    t = enumerate_joint(sys)
    fwd = directed_information(t, a, b, 0)
    assert all(v >= -1e-12 for v in fwd.per_step_terms)
    A = [v for v in t.variables if v[0] == a and v[1] >= 1]
    B = [v for v in t.variables if v[0] == b and v[1] >= 1]
    if a != b:
        assert fwd.value_bits <= mutual_information(t, A, B) + 1e-9
        m = massey_conservation(t, a, b)
        assert abs(m.error) < 1e-9


@settings(max_examples=20)
@given(SYSTEMS, st.sampled_from(INTERNAL), st.sampled_from(INTERNAL))
def test_partial_sums_are_monotone(params, a, b):
    sys = generate(params)
    t = enumerate_joint(sys)
    steps = [v[1] for v in t.variables if v[0] == b and v[1] >= 1]
    prev = 0.0
    for k in range(1, len(steps) + 1):
        cur = directed_information(t, a, b, 0, (), steps[:k]).value_bits
        assert cur >= prev - 1e-12
        prev = cur


@settings(max_examples=20)
@given(SYSTEMS)
def test_entropy_chain_rule(params):
    sys = generate(params)
    t = enumerate_joint(sys)
    ys = [v for v in t.variables if v[0] == "y"]
    total = math.fsum(entropy(t, ys[: k + 1]) - entropy(t, ys[:k]) for k in range(len(ys)))
    assert total == pytest.approx(entropy(t, ys), abs=1e-9)
    d = oracle.Dist(*oracle.joint(sys))
    assert entropy(t, ys) == pytest.approx(d.H(ys), abs=1e-9)
