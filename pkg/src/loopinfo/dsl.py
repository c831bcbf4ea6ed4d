"""Causal block expression language.

Grammar (whitespace-insensitive)::

    expr    := ternary
    ternary := or ( "?" expr ":" expr )?
    or      := cmp ( "xor" cmp )*
    cmp     := add ( ("==" | "!=" | "<" | "<=") add )?
    add     := mul ( ("+" | "-") mul )*
    mul     := atom ( ("*" | "mod") atom )*
    atom    := INT | IDENT "[" "t" ( "-" INT )? "]" | "(" expr ")"

Values are unbounded integers during evaluation; the caller reduces the final
result modulo the output alphabet size.  ``mod`` is mathematical (the result
lies in ``0..|m|-1``), comparisons yield 0 or 1, and a conditional only
evaluates the branch that is taken.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

from .errors import (
    CausalityViolation,
    DanglingReference,
    EvalError,
    FutureReference,
    MissingSample,
    ParseError,
    WiringViolation,
)

__all__ = [
    "IntLiteral",
    "SignalRef",
    "BinaryOp",
    "Conditional",
    "Paren",
    "BlockExpr",
    "parse",
    "to_source",
    "refs",
    "evaluate",
    "evaluate_batch",
    "ValidationContext",
    "validate",
]


@dataclass(frozen=True)
class IntLiteral:
    value: int


@dataclass(frozen=True)
class SignalRef:
    name: str
    lag: int = 0


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "BlockExpr"
    right: "BlockExpr"


@dataclass(frozen=True)
class Conditional:
    cond: "BlockExpr"
    then: "BlockExpr"
    other: "BlockExpr"


@dataclass(frozen=True)
class Paren:
    inner: "BlockExpr"


BlockExpr = Union[IntLiteral, SignalRef, BinaryOp, Conditional, Paren]

KEYWORDS = frozenset({"xor", "mod"})
COMPARISONS = ("==", "!=", "<=", "<")

_TOKEN = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>==|!=|<=|<|\?|:|\(|\)|\[|\]|\+|-|\*))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # "int", "ident", "op", "kw", "end"
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            stripped = rest.lstrip()
            if not stripped:
                toks.append(_Tok("end", "", len(text)))
                return toks
            bad = pos + (len(rest) - len(stripped))
            raise ParseError(f"unexpected character {stripped[0]!r}", text, bad)
        kind = m.lastgroup
        tok_text = m.group(kind)
        start = m.start(kind)
        if kind == "ident" and tok_text in KEYWORDS:
            kind = "kw"
        toks.append(_Tok(kind, tok_text, start))
        pos = m.end()


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _is(self, *texts: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text in texts

    def _fail(self, expected, message=None):
        tok = self.tok
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ParseError(message or f"unexpected {found}", self.text, tok.pos, expected)

    def _expect(self, text: str) -> _Tok:
        if not self._is(text):
            self._fail([repr(text)])
        tok = self.tok
        self.i += 1
        return tok

    def parse(self) -> BlockExpr:
        expr = self.expr()
        if self.tok.kind != "end":
            self._fail(["end of input", "operator"])
        return expr

    def expr(self) -> BlockExpr:
        cond = self.or_()
        if self._is("?"):
            self.i += 1
            then = self.expr()
            self._expect(":")
            other = self.expr()
            return Conditional(cond, then, other)
        return cond

    def or_(self) -> BlockExpr:
        left = self.cmp()
        while self._is("xor"):
            self.i += 1
            left = BinaryOp("xor", left, self.cmp())
        return left

    def cmp(self) -> BlockExpr:
        left = self.add()
        if self._is(*COMPARISONS):
            op = self.tok.text
            self.i += 1
            left = BinaryOp(op, left, self.add())
        return left

    def add(self) -> BlockExpr:
        left = self.mul()
        while self._is("+", "-"):
            op = self.tok.text
            self.i += 1
            left = BinaryOp(op, left, self.mul())
        return left

    def mul(self) -> BlockExpr:
        left = self.atom()
        while self._is("*", "mod"):
            op = self.tok.text
            self.i += 1
            left = BinaryOp(op, left, self.atom())
        return left

    def atom(self) -> BlockExpr:
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return IntLiteral(int(tok.text))
        if tok.kind == "ident":
            self.i += 1
            self._expect("[")
            if not (self.tok.kind == "ident" and self.tok.text == "t"):
                self._fail(["'t'"])
            self.i += 1
            lag = 0
            if self._is("-"):
                self.i += 1
                if self.tok.kind != "int":
                    self._fail(["integer lag"])
                lag = int(self.tok.text)
                self.i += 1
            elif self._is("+"):
                raise FutureReference(
                    f"reference to future sample of {tok.text!r} (positive lag forbidden)",
                    self.text,
                    self.tok.pos,
                    ["'-'", "']'"],
                )
            self._expect("]")
            return SignalRef(tok.text, lag)
        if self._is("("):
            self.i += 1
            inner = self.expr()
            self._expect(")")
            return Paren(inner)
        self._fail(["integer", "identifier", "'('"])


def parse(text: str) -> BlockExpr:
    """Parse a block expression; raises :class:`ParseError` with position."""
    return _Parser(text).parse()


_LEVEL = {"xor": 1, **{c: 2 for c in COMPARISONS}, "+": 3, "-": 3, "*": 4, "mod": 4}


def _level(expr: BlockExpr) -> int:
    if isinstance(expr, Conditional):
        return 0
    if isinstance(expr, BinaryOp):
        return _LEVEL[expr.op]
    return 5


def _wrap(expr: BlockExpr, need: int) -> str:
    text = to_source(expr)
    return text if _level(expr) >= need else f"({text})"


def to_source(expr: BlockExpr) -> str:
    """Canonical source text; ``parse(to_source(parse(s))) == parse(s)``.

    Parentheses are added only where a hand-built tree would otherwise
    read back differently.
    """
    if isinstance(expr, IntLiteral):
        return str(expr.value)
    if isinstance(expr, SignalRef):
        return f"{expr.name}[t]" if expr.lag == 0 else f"{expr.name}[t-{expr.lag}]"
    if isinstance(expr, BinaryOp):
        lv = _LEVEL[expr.op]
        left_need = lv + 1 if lv == 2 else lv  # comparisons do not chain
        return f"{_wrap(expr.left, left_need)} {expr.op} {_wrap(expr.right, lv + 1)}"
    if isinstance(expr, Conditional):
        return f"{_wrap(expr.cond, 1)} ? {to_source(expr.then)} : {to_source(expr.other)}"
    if isinstance(expr, Paren):
        return f"({to_source(expr.inner)})"
    raise TypeError(f"not a block expression: {expr!r}")


def refs(expr: BlockExpr) -> frozenset[tuple[str, int]]:
    """All ``(signal, lag)`` pairs referenced anywhere in the expression."""
    out: set[tuple[str, int]] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, SignalRef):
            out.add((node.name, node.lag))
        elif isinstance(node, BinaryOp):
            stack.extend((node.left, node.right))
        elif isinstance(node, Conditional):
            stack.extend((node.cond, node.then, node.other))
        elif isinstance(node, Paren):
            stack.append(node.inner)
    return frozenset(out)


def _apply(op: str, a: int, b: int) -> int:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "mod":
        if b == 0:
            raise EvalError("mod by zero")
        return a % abs(b)
    if op == "xor":
        return a ^ b
    if op == "==":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    raise EvalError(f"unknown operator {op!r}")


def _eval(expr: BlockExpr, lookup: Callable[[str, int], int], t: int) -> int:
    if isinstance(expr, IntLiteral):
        return expr.value
    if isinstance(expr, SignalRef):
        return lookup(expr.name, t - expr.lag)
    if isinstance(expr, BinaryOp):
        return _apply(expr.op, _eval(expr.left, lookup, t), _eval(expr.right, lookup, t))
    if isinstance(expr, Conditional):
        branch = expr.then if _eval(expr.cond, lookup, t) != 0 else expr.other
        return _eval(branch, lookup, t)
    if isinstance(expr, Paren):
        return _eval(expr.inner, lookup, t)
    raise TypeError(f"not a block expression: {expr!r}")


def evaluate(
    expr: BlockExpr,
    env: Mapping[tuple[str, int], int] | Callable[[str, int], int],
    t: int,
    modulus: int | None = None,
) -> int:
    """Evaluate ``expr`` at time ``t``.

    ``env`` maps ``(signal, time)`` to a symbol, or is a ``lookup(name, time)``
    callable. With ``modulus`` the result is reduced into ``0..modulus-1``.
    """
    if callable(env):
        lookup = env
    else:
        def lookup(name: str, time: int) -> int:
            try:
                return int(env[(name, time)])
            except KeyError:
                raise MissingSample(f"sample {name}[{time}] missing from environment") from None

    value = _eval(expr, lookup, t)
    return value % modulus if modulus is not None else value


_NP_OPS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "xor": np.bitwise_xor,
    "==": np.equal,
    "!=": np.not_equal,
    "<": np.less,
    "<=": np.less_equal,
}


def _eval_batch(expr, lookup, t, size, mask):
    if isinstance(expr, IntLiteral):
        return np.full(size, expr.value, dtype=np.int64)
    if isinstance(expr, SignalRef):
        return np.asarray(lookup(expr.name, t - expr.lag), dtype=np.int64)
    if isinstance(expr, Paren):
        return _eval_batch(expr.inner, lookup, t, size, mask)
    if isinstance(expr, BinaryOp):
        a = _eval_batch(expr.left, lookup, t, size, mask)
        b = _eval_batch(expr.right, lookup, t, size, mask)
        if expr.op == "mod":
            zero = b == 0
            if np.any(zero & mask):
                raise EvalError("mod by zero")
            return np.mod(a, np.where(zero, 1, np.abs(b)))
        return _NP_OPS[expr.op](a, b).astype(np.int64, copy=False)
    if isinstance(expr, Conditional):
        c = _eval_batch(expr.cond, lookup, t, size, mask) != 0
        a = _eval_batch(expr.then, lookup, t, size, mask & c)
        b = _eval_batch(expr.other, lookup, t, size, mask & ~c)
        return np.where(c, a, b)
    raise TypeError(f"not a block expression: {expr!r}")


def evaluate_batch(
    expr: BlockExpr,
    lookup: Callable[[str, int], np.ndarray],
    t: int,
    size: int,
    modulus: int | None = None,
) -> np.ndarray:
    """Vectorised :func:`evaluate` over ``size`` lanes.

    Both conditional branches are computed, but errors (``mod`` by zero) are
    only raised for lanes where the branch is actually taken.
    """
    out = _eval_batch(expr, lookup, t, size, np.ones(size, dtype=bool))
    out = np.broadcast_to(out, (size,)).astype(np.int64)
    return np.mod(out, modulus) if modulus is not None else out


@dataclass(frozen=True)
class ValidationContext:
    """What a block is allowed to read.

    ``signals`` holds every declared signal name.  A block may reference its
    loop input at lag >= ``delay``, its exogenous input at any lag, and its own
    output at lag >= 1.  With ``output=None`` (derived signals) every declared
    signal may be read at any non-negative lag.
    """

    signals: frozenset[str]
    output: str | None = None
    loop_input: str | None = None
    exogenous_input: str | None = None


def validate(expr, context: ValidationContext, alphabet: int, delay: int = 0) -> None:
    """Check references of ``expr`` against ``context``; raise on the first problem."""
    if alphabet < 1:
        raise ValueError("output alphabet must have at least one symbol")
    for name, lag in sorted(refs(expr)):
        if name not in context.signals:
            raise DanglingReference(f"reference to undeclared signal {name!r}")
        if context.output is None:
            continue
        if name == context.loop_input:
            if lag < delay:
                raise CausalityViolation(
                    f"{context.output}: loop input {name}[t-{lag}] violates delay {delay}"
                )
        elif name == context.output:
            if lag < 1:
                raise CausalityViolation(f"{context.output}: reads its own current output")
        elif name != context.exogenous_input:
            raise WiringViolation(
                f"{context.output}: {name!r} is neither its loop input, exogenous input nor own output"
            )
