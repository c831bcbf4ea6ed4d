import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopinfo import dsl
from loopinfo.dsl import BinaryOp, Conditional, IntLiteral, Paren, SignalRef
from loopinfo.errors import CausalityViolation, DanglingReference, EvalError, FutureReference, MissingSample, ParseError
from loopinfo.example1 import E1_DECODER, E1_ENCODER, SOURCE_MAP


def test_source_map_parses_to_conditional():
    ast = dsl.parse(SOURCE_MAP)
    assert isinstance(ast, Conditional)
    cond = ast.cond.inner if isinstance(ast.cond, Paren) else ast.cond
    assert cond.op == "=="
    assert cond.left == SignalRef("q", 1)
    assert ast.then == SignalRef("q", 0)


def test_literal():
    assert dsl.parse("3") == IntLiteral(3)


def test_future_reference_rejected():
    with pytest.raises(FutureReference) as err:
        dsl.parse("q[t+1]")
    assert isinstance(err.value, ParseError)
    assert err.value.line == 1 and err.value.column >= 1


@pytest.mark.parametrize("src", ["", "x[", "x[t-]", "1 +", "(1", "a ? b[t] c", "x[s]", "1 $ 2", "x[t-1] == y[t] == z[t]"])
def test_malformed(src):
    with pytest.raises(ParseError) as err:
        dsl.parse(src)
    assert 0 <= err.value.char_offset <= len(src)


def test_error_position_multiline():
    with pytest.raises(ParseError) as err:
        dsl.parse("1 +\n  * 2")
    assert (err.value.line, err.value.column) == (2, 3)


def test_decoder_second_branch():
    # y(k-1)=3, y(k)=2: (3 mod 2) xor 1 = 0
    ast = dsl.parse(E1_DECODER)
    assert dsl.evaluate(ast, {("y", 4): 3, ("y", 5): 2}, 5, 2) == 0
    assert dsl.evaluate(ast, {("y", 4): 3, ("y", 5): 1}, 5, 2) == 1


def test_e2_encoder_at_zero():
    assert dsl.evaluate(dsl.parse("1"), {}, 0, 4) == 1


def test_final_reduction():
    assert dsl.evaluate(dsl.parse("5 + 1"), {}, 0, 2) == 0
    assert dsl.evaluate(dsl.parse("r[t] + 2"), {("r", 3): 1}, 3, 4) == 3


def test_mathematical_mod_and_comparisons():
    assert dsl.evaluate(dsl.parse("(0 - 3) mod 4"), {}, 0) == 1
    assert dsl.evaluate(dsl.parse("2 < 3"), {}, 0) == 1
    assert dsl.evaluate(dsl.parse("3 <= 2"), {}, 0) == 0
    assert dsl.evaluate(dsl.parse("1 xor 3"), {}, 0) == 2


def test_only_taken_branch_evaluated():
    # the untaken branch reads a sample that is not in the environment
    assert dsl.evaluate(dsl.parse("1 ? 7 : z[t]"), {}, 0) == 7
    with pytest.raises(MissingSample):
        dsl.evaluate(dsl.parse("0 ? 7 : z[t]"), {}, 0)


def _ctx(**kw):
    return dsl.ValidationContext(signals=frozenset({"w", "x", "r", "y"}), **kw)


def test_validate_encoder():
    dsl.validate(dsl.parse(E1_ENCODER), _ctx(output="x", loop_input="w", exogenous_input="r"), 4, 0)


def test_validate_causality():
    with pytest.raises(CausalityViolation):
        dsl.validate(dsl.parse("x[t]"), _ctx(output="y", loop_input="x"), 2, 1)
    dsl.validate(dsl.parse("x[t-1]"), _ctx(output="y", loop_input="x"), 2, 1)


def test_validate_dangling():
    with pytest.raises(DanglingReference):
        dsl.validate(dsl.parse("z[t-1]"), _ctx(output="y", loop_input="x"), 2, 0)


# ---- properties -------------------------------------------------------------

NAMES = st.sampled_from(["a", "b", "x_1", "w"])
OPS = st.sampled_from(["+", "-", "*", "mod", "xor", "==", "!=", "<", "<="])


def _exprs():
    leaves = st.one_of(
        st.integers(0, 20).map(IntLiteral),
        st.builds(SignalRef, NAMES, st.integers(0, 3)),
    )

    def extend(children):
        return st.one_of(
            st.builds(BinaryOp, OPS, children, children),
            st.builds(Conditional, children, children, children),
            st.builds(Paren, children),
        )

    return st.recursive(leaves, extend, max_leaves=12)


def _py(e, env, t):
    """Reference semantics written against the AST directly."""
    if isinstance(e, IntLiteral):
        return e.value
    if isinstance(e, SignalRef):
        return env[(e.name, t - e.lag)]
    if isinstance(e, Paren):
        return _py(e.inner, env, t)
    if isinstance(e, Conditional):
        return _py(e.then, env, t) if _py(e.cond, env, t) != 0 else _py(e.other, env, t)
    a, b = _py(e.left, env, t), _py(e.right, env, t)
    if e.op == "mod" and b == 0:
        raise ZeroDivisionError
    return {
        "+": lambda: a + b,
        "-": lambda: a - b,
        "*": lambda: a * b,
        "mod": lambda: a % abs(b),
        "xor": lambda: a ^ b,
        "==": lambda: int(a == b),
        "!=": lambda: int(a != b),
        "<": lambda: int(a < b),
        "<=": lambda: int(a <= b),
    }[e.op]()


@given(_exprs())
def test_print_parse_round_trip(e):
    once = dsl.parse(dsl.to_source(e))
    assert dsl.parse(dsl.to_source(once)) == once
    assert dsl.to_source(once) == dsl.to_source(dsl.parse(dsl.to_source(once)))


@given(_exprs(), st.dictionaries(st.tuples(NAMES, st.integers(2, 5)), st.integers(0, 3), min_size=0), st.integers(2, 7))
def test_evaluation_matches_reference(e, partial, modulus):
    env = {(n, t): partial.get((n, t), (len(n) + t) % 4) for n in ["a", "b", "x_1", "w"] for t in range(2, 6)}
    src = dsl.parse(dsl.to_source(e))
    try:
        want = _py(src, env, 5)
    except ZeroDivisionError:
        want = None
    if want is None:
        with pytest.raises(EvalError):
            dsl.evaluate(src, env, 5, modulus)
        return
    got = dsl.evaluate(src, env, 5, modulus)
    assert got == want % modulus
    assert dsl.evaluate(src, env, 5, modulus) == got  # purity


@given(_exprs())
def test_refs_are_causal(e):
    assert all(lag >= 0 for _, lag in dsl.refs(e))
