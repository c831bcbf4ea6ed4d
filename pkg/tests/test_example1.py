import itertools
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracle
from loopinfo.errors import ModelError
from loopinfo.example1 import (
    Example1Config,
    beta_sweep,
    build_example1,
    closed_forms,
    parse_grid,
    source_output_terms,
)
from loopinfo.joint import enumerate_joint, simulate
from loopinfo.measures import (
    directed_information,
    entropy,
    fano_decomposition,
    itl_rate,
    mutual_information,
)
from loopinfo.theorems import EQUALITY, check

HB9 = oracle.binary_entropy(0.9)


def cfg(enc="E1", beta=0.503, n=6, **kw):
    return Example1Config(enc, 0.9, beta, n, **kw)


@given(st.sampled_from(["E1", "E2"]), st.integers(1, 8), st.randoms(use_true_random=False))
def test_recursion_matches_hand_coded_path(enc, n, rnd):
    q = [1] + [rnd.randint(0, 1) for _ in range(n)]
    r = [rnd.randint(0, 1) for _ in range(n + 1)]
    sys = build_example1(cfg(enc, n=n))
    exo = {("q", k): q[k] for k in range(n + 1)}
    if enc == "E1":
        exo.update({("r", k): r[k] for k in range(n + 1)})
    traj = simulate(sys, exo)
    want = oracle.example1_path(enc, q, r)
    for name in ("w", "x", "y", "v"):
        got = traj.series(name)
        start = 1 if name in ("w", "v") else 0
        assert list(got) == want[name][start:], name


@pytest.mark.parametrize("enc", ["E1", "E2"])
def test_decoder_is_error_free(enc):
    sys = build_example1(cfg(enc, n=7))
    t = enumerate_joint(sys, sys.variables(["w", "v", "e_n"]))
    assert t.marginal([("e_n", 7)]).atoms == {(0,): pytest.approx(1.0)}
    for k in range(1, 8):
        for (a, b), p in t.marginal([("w", k), ("v", k)]).atoms.items():
            assert a == b or p == 0.0


@pytest.mark.parametrize("enc", ["E1", "E2"])
def test_rate_equals_forward_flow(enc):
    sys = build_example1(cfg(enc, n=6))
    r = check("7", sys)
    assert r.verdict == EQUALITY
    f = fano_decomposition(sys)
    assert f.h_w_given_yp == pytest.approx(0.0, abs=1e-12)
    assert f.r_itl * 6 == pytest.approx(f.di, abs=1e-9)


@pytest.mark.parametrize("n", [2, 5, 8, 10])
def test_message_flow_equals_source_output_information(n):
    c = cfg(n=n)
    sys = build_example1(c)
    t = enumerate_joint(sys, sys.variables(["q", "w", "y"]))
    di = directed_information(t, "w", "y", 0, (), range(1, n + 1)).value_bits
    mi = mutual_information(t, sys.variables(["q"]), sys.variables(["y"]))
    assert di == pytest.approx(mi, abs=1e-9)
    assert sum(source_output_terms(c)) == pytest.approx(mi, abs=1e-9)


def test_e2_rate_is_source_entropy():
    for n in (3, 9):
        assert itl_rate(build_example1(cfg("E2", n=n))).value_bits == pytest.approx(HB9, abs=1e-9)


def test_e2_dominates_e1():
    for beta in (0.0, 0.3, 0.503, 1.0):
        e1 = itl_rate(build_example1(cfg("E1", beta=beta, n=6))).value_bits
        e2 = itl_rate(build_example1(cfg("E2", beta=beta, n=6))).value_bits
        assert e1 <= e2 + 1e-12


def test_beta_zero_message_rate_below_source_entropy():
    sys = build_example1(cfg(beta=0.0, n=8))
    hw = entropy(enumerate_joint(sys, sys.variables(["w"])), sys.variables(["w"])) / 8
    assert hw < HB9


def test_closed_form_marginals():
    cf = closed_forms(0.9, 0.503)
    assert cf.pr_w1 == pytest.approx(0.9 * 0.503, abs=1e-15)
    sys = build_example1(cfg(n=5))
    t = enumerate_joint(sys, sys.variables(["w"]))
    assert t.marginal([("w", 1)]).atoms[(1,)] == pytest.approx(cf.pr_w1, abs=1e-12)
    for k in range(2, 6):
        assert t.marginal([("w", k)]).atoms[(1,)] == pytest.approx(cf.pr_wk, abs=1e-12)


def test_closed_form_rates():
    cf = closed_forms(0.9, 0.503)
    assert cf.r_itl_disagree == pytest.approx(0.2334, abs=5e-5)
    assert cf.r_itl_agree == pytest.approx(0.2356, abs=5e-5)
    assert cf.r_itl_disagree + cf.r_itl_agree == pytest.approx(HB9, abs=1e-12)
    with pytest.raises(ModelError):
        closed_forms(1.5, 0.5)


def test_last_source_term_matches_agree_weighting():
    terms = source_output_terms(cfg(n=6))
    assert terms[-1] == pytest.approx(closed_forms(0.9, 0.503).r_itl_agree, abs=1e-9)


def test_small_sweep_engines_agree():
    grid = parse_grid("0:1:0.25")
    a = beta_sweep(0.9, 5, grid, "tree")
    b = beta_sweep(0.9, 5, grid, "enumerate")
    for ra, rb in zip(a.rows, b.rows):
        assert ra.beta == rb.beta
        for f in ("h_w_rate", "r_itl", "di_forward", "di_backward"):
            assert getattr(ra, f) == pytest.approx(getattr(rb, f), abs=1e-9)
    assert a.best.beta == pytest.approx(0.5)
    text = a.to_csv().splitlines()
    assert text[0] == "beta,H_w_rate_bits,R_ITL_bits,DI_forward_bits,DI_backward_bits"
    assert len(text) == 6


def test_sweep_rows_match_direct_measures():
    row = beta_sweep(0.9, 4, [0.3], "tree").rows[0]
    sys = build_example1(cfg(beta=0.3, n=4))
    assert row.r_itl == pytest.approx(itl_rate(sys).value_bits, abs=1e-9)
    hw = entropy(enumerate_joint(sys, sys.variables(["w"])), sys.variables(["w"]))
    assert row.h_w_rate == pytest.approx(hw / 4, abs=1e-9)


def test_parse_grid():
    assert parse_grid("0:0.1:0.05") == pytest.approx([0.0, 0.05, 0.1])
    assert parse_grid("0.1, 0.3") == [0.1, 0.3]
    for bad in ("", "0:1", "1:0:0.1", "0:1:0", "a,b"):
        with pytest.raises((ModelError, ValueError)):
            parse_grid(bad)


def test_bad_config():
    for kw in ({"encoder": "E3"}, {"alpha": 1.2}, {"beta": -0.1}, {"n": 0}, {"engine": "magic"}):
        with pytest.raises(ModelError):
            build_example1(Example1Config(**kw))


def test_noise_breaks_zero_error():
    f = fano_decomposition(build_example1(cfg("E2", n=4, flip=0.1)))
    assert f.pr_err > 0.1
    assert f.bound_holds
