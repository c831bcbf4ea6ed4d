"""Domain types for finite-alphabet feedback loops of causal blocks.

A :class:`LoopSystem` is a cycle of deterministic causal blocks.  Each block
computes one internal signal from its loop input (delayed by a constant
``delay``), its optional exogenous input, and its own past output.  All
randomness comes from the exogenous signals, whose joint law is declared
structurally as independent *coupling groups*.
"""

from __future__ import annotations

import dataclasses
import graphlib
import itertools
import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from . import dsl
from .errors import (
    AlphabetOverflow,
    BadPmf,
    CausalityViolation,
    DanglingReference,
    DelayViolation,
    ModelError,
    UnknownSignal,
)

MAX_ALPHABET = 16
PMF_TOL = 1e-12

EXOGENOUS = "exogenous"
INTERNAL = "internal"


@dataclass(frozen=True)
class Alphabet:
    """Symbols ``0..size-1``."""

    size: int

    def __post_init__(self):
        if not isinstance(self.size, (int, np.integer)) or self.size < 1:
            raise ModelError(f"alphabet size must be a positive integer, got {self.size!r}")
        if self.size > MAX_ALPHABET:
            raise AlphabetOverflow(f"alphabet size {self.size} exceeds {MAX_ALPHABET}")

    def __contains__(self, symbol) -> bool:
        return isinstance(symbol, (int, np.integer)) and 0 <= symbol < self.size


def _alphabet(a) -> Alphabet:
    return a if isinstance(a, Alphabet) else Alphabet(int(a))


def _frozen(mapping) -> Mapping:
    return MappingProxyType(dict(mapping or {}))


@dataclass(frozen=True)
class SignalDecl:
    name: str
    alphabet: Alphabet
    role: str = INTERNAL
    start: int = 1
    prologue: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "alphabet", _alphabet(self.alphabet))
        object.__setattr__(self, "prologue", _frozen(self.prologue))
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", self.name) or self.name in dsl.KEYWORDS:
            raise ModelError(f"invalid signal name {self.name!r}")
        if self.role not in (EXOGENOUS, INTERNAL):
            raise ModelError(f"{self.name}: role must be 'exogenous' or 'internal'")
        if self.start not in (0, 1):
            raise ModelError(f"{self.name}: start index must be 0 or 1")
        for t, v in self.prologue.items():
            if t >= self.start:
                raise ModelError(f"{self.name}: prologue time {t} is not before start {self.start}")
            if v not in self.alphabet:
                raise ModelError(f"{self.name}: prologue value {v} outside alphabet")

    @property
    def size(self) -> int:
        return self.alphabet.size


def _norm_pmf(pmf: Mapping, arity: int) -> dict[tuple[int, ...], float]:
    out: dict[tuple[int, ...], float] = {}
    for key, p in pmf.items():
        key = tuple(int(k) for k in key) if isinstance(key, (tuple, list)) else (int(key),)
        if len(key) != arity:
            raise BadPmf(f"pmf key {key} has wrong arity (expected {arity})")
        p = float(p)
        if p < 0 or math.isnan(p):
            raise BadPmf(f"negative or NaN mass {p} at {key}")
        out[key] = out.get(key, 0.0) + p
    total = math.fsum(out.values())
    if abs(total - 1.0) > PMF_TOL:
        raise BadPmf(f"pmf masses sum to {total!r}, not 1")
    return {k: v for k, v in sorted(out.items()) if v > 0.0}


@dataclass(frozen=True)
class ExoGroup:
    """Jointly distributed exogenous signals, independent of every other group.

    ``pmf`` is the per-step joint law used at every time step (i.i.d. across
    time); ``steps`` overrides it at specific times (a point mass gives a
    deterministic sample such as ``q(0) = 1``).
    """

    signals: tuple[str, ...]
    pmf: Mapping[tuple[int, ...], float] | None = None
    steps: Mapping[int, Mapping[tuple[int, ...], float]] = field(default_factory=dict)

    def __post_init__(self):
        sigs = (self.signals,) if isinstance(self.signals, str) else tuple(self.signals)
        if not sigs:
            raise ModelError("empty coupling group")
        object.__setattr__(self, "signals", sigs)
        k = len(sigs)
        if self.pmf is not None:
            object.__setattr__(self, "pmf", _frozen(_norm_pmf(self.pmf, k)))
        object.__setattr__(
            self, "steps", _frozen({int(t): _frozen(_norm_pmf(p, k)) for t, p in self.steps.items()})
        )

    def pmf_at(self, t: int) -> Mapping[tuple[int, ...], float]:
        if t in self.steps:
            return self.steps[t]
        if self.pmf is None:
            raise ModelError(f"group {self.signals} has no pmf for step {t}")
        return self.pmf

    @property
    def iid(self) -> bool:
        return self.pmf is not None


@dataclass(frozen=True)
class ExogenousSpec:
    groups: tuple[ExoGroup, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))

    def group_of(self, name: str) -> ExoGroup:
        for g in self.groups:
            if name in g.signals:
                return g
        raise UnknownSignal(name)

    @property
    def partition(self) -> tuple[frozenset[str], ...]:
        return tuple(frozenset(g.signals) for g in self.groups)


def independent(**pmfs: Mapping) -> ExogenousSpec:
    """Shorthand: one i.i.d. singleton group per keyword, e.g. ``independent(q={0: .1, 1: .9})``."""
    return ExogenousSpec(tuple(ExoGroup((name,), pmf) for name, pmf in pmfs.items()))


@dataclass(frozen=True)
class LookupTable:
    """Explicit map over a finite window of ``(signal, lag)`` inputs.

    ``table`` is indexed row-major with the first input most significant.
    """

    inputs: tuple[tuple[str, int], ...]
    sizes: tuple[int, ...]
    table: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple((str(n), int(l)) for n, l in self.inputs))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "table", tuple(int(v) for v in self.table))
        if len(self.inputs) != len(self.sizes):
            raise ModelError("lookup table inputs and sizes differ in length")
        if len(self.table) != math.prod(self.sizes):
            raise ModelError("lookup table has wrong number of entries")
        if any(lag < 0 for _, lag in self.inputs):
            raise ModelError("lookup table lags must be non-negative")


@dataclass(frozen=True)
class CallableMap:
    """Arbitrary causal map ``fn(get, t)`` where ``get(name, time)`` returns samples.

    ``window`` declares the ``(signal, lag)`` pairs it reads; ``None`` means
    the full history may be read (such blocks cannot be compiled to a
    finite-state model).  ``fn`` must accept numpy arrays from ``get``.
    """

    fn: Callable
    window: frozenset[tuple[str, int]] | None = None


BlockMap = Union[dsl.BlockExpr, LookupTable, CallableMap]


def as_map(m) -> BlockMap:
    return dsl.parse(m) if isinstance(m, str) else m


def map_refs(m: BlockMap) -> frozenset[tuple[str, int]] | None:
    """Referenced ``(signal, lag)`` pairs, or ``None`` for an unbounded history map."""
    if isinstance(m, LookupTable):
        return frozenset(m.inputs)
    if isinstance(m, CallableMap):
        return None if m.window is None else frozenset(m.window)
    return dsl.refs(m)


def eval_map(m: BlockMap, lookup, t: int, modulus: int) -> int:
    if isinstance(m, LookupTable):
        idx = 0
        for (name, lag), size in zip(m.inputs, m.sizes):
            idx = idx * size + int(lookup(name, t - lag))
        return m.table[idx] % modulus
    if isinstance(m, CallableMap):
        return int(m.fn(lookup, t)) % modulus
    return dsl.evaluate(m, lookup, t, modulus)


def eval_map_batch(m: BlockMap, lookup, t: int, size: int, modulus: int | None) -> np.ndarray:
    if isinstance(m, LookupTable):
        idx = np.zeros(size, dtype=np.int64)
        for (name, lag), s in zip(m.inputs, m.sizes):
            idx = idx * s + np.asarray(lookup(name, t - lag), dtype=np.int64)
        out = np.asarray(m.table, dtype=np.int64)[idx]
    elif isinstance(m, CallableMap):
        out = np.broadcast_to(np.asarray(m.fn(lookup, t), dtype=np.int64), (size,))
    else:
        return dsl.evaluate_batch(m, lookup, t, size, modulus)
    return np.mod(out, modulus) if modulus is not None else out


def map_source(m: BlockMap) -> str:
    if isinstance(m, LookupTable):
        ins = " ".join(f"{n}@{l}" for n, l in m.inputs)
        return f"table {ins} : {' '.join(map(str, m.table))}"
    if isinstance(m, CallableMap):
        return "<callable>"
    return dsl.to_source(m)


@dataclass(frozen=True)
class Block:
    name: str
    output: str
    loop_input: str
    delay: int
    map: BlockMap
    exogenous: str | None = None
    overrides: Mapping[int, BlockMap] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "map", as_map(self.map))
        object.__setattr__(
            self, "overrides", _frozen({int(t): as_map(m) for t, m in self.overrides.items()})
        )
        if not isinstance(self.delay, (int, np.integer)) or self.delay < 0:
            raise DelayViolation(f"block {self.name}: delay must be a non-negative integer")

    def map_at(self, t: int) -> BlockMap:
        return self.overrides.get(t, self.map)


STEP = "step"
ANY = "any"


@dataclass(frozen=True)
class DerivedSignal:
    """A signal computed from trajectories but not fed back into the loop.

    ``mode="step"`` gives one sample per time step.  ``mode="any"`` gives a
    single end-of-horizon binary variable that is 1 iff the expression is
    non-zero at some step (e.g. a block-error indicator).
    """

    name: str
    map: BlockMap
    alphabet: Alphabet = Alphabet(2)
    start: int = 1
    mode: str = STEP

    def __post_init__(self):
        object.__setattr__(self, "alphabet", _alphabet(self.alphabet))
        object.__setattr__(self, "map", as_map(self.map))
        if self.mode not in (STEP, ANY):
            raise ModelError(f"derived {self.name}: mode must be 'step' or 'any'")
        if self.start not in (0, 1):
            raise ModelError(f"derived {self.name}: start index must be 0 or 1")
        if self.mode == ANY and self.alphabet.size != 2:
            raise ModelError(f"derived {self.name}: 'any' indicators are binary")


@dataclass(frozen=True)
class LoopSystem:
    """A validated closed loop.  Build with :func:`build_system`."""

    signals: tuple[SignalDecl, ...]
    exogenous: ExogenousSpec
    blocks: tuple[Block, ...]
    horizon: int
    derived: tuple[DerivedSignal, ...] = ()
    order: tuple[tuple[str, int], ...] = field(default=(), compare=False, repr=False)

    # ---- lookups -------------------------------------------------------------
    def signal(self, name: str) -> SignalDecl:
        for s in self.signals:
            if s.name == name:
                return s
        raise UnknownSignal(name)

    def derived_signal(self, name: str) -> DerivedSignal:
        for d in self.derived:
            if d.name == name:
                return d
        raise UnknownSignal(name)

    def has(self, name: str) -> bool:
        return any(s.name == name for s in self.signals) or any(d.name == name for d in self.derived)

    def alphabet_size(self, name: str) -> int:
        for s in self.signals:
            if s.name == name:
                return s.size
        return self.derived_signal(name).alphabet.size

    def start(self, name: str) -> int:
        for s in self.signals:
            if s.name == name:
                return s.start
        d = self.derived_signal(name)
        return self.horizon if d.mode == ANY else d.start

    def times(self, name: str) -> range:
        return range(self.start(name), self.horizon + 1)

    @property
    def exogenous_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.signals if s.role == EXOGENOUS)

    @property
    def internal_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.signals if s.role == INTERNAL)

    @property
    def loop_delay(self) -> int:
        return sum(b.delay for b in self.blocks)

    def block_for(self, output: str) -> Block:
        for b in self.blocks:
            if b.output == output:
                return b
        raise UnknownSignal(output)

    def variables(self, names: Iterable[str] | None = None) -> list[tuple[str, int]]:
        """Every ``(signal, time)`` sample of the named signals (default: all)."""
        if names is None:
            names = [s.name for s in self.signals] + [d.name for d in self.derived]
        return [(n, t) for n in names for t in self.times(n)]

    def prologue_value(self, name: str, t: int) -> int:
        decl = self.signal(name)
        try:
            return decl.prologue[t]
        except KeyError:
            raise DanglingReference(f"{name}[{t}] lies before start and has no prologue") from None

    # ---- derivation helpers --------------------------------------------------
    def replace(self, **changes) -> "LoopSystem":
        fields = {
            "signals": self.signals,
            "exogenous": self.exogenous,
            "blocks": self.blocks,
            "horizon": self.horizon,
            "derived": self.derived,
        }
        fields.update(changes)
        return build_system(**fields)

    def with_horizon(self, n: int) -> "LoopSystem":
        return self.replace(horizon=n)


def _check_refs(
    what: str,
    m: BlockMap,
    t: int,
    starts: Mapping[str, int],
    prologues: Mapping[str, Mapping[int, int]],
) -> None:
    refs = map_refs(m)
    if refs is None:
        return
    for name, lag in refs:
        tau = t - lag
        if tau < starts[name] and tau not in prologues.get(name, {}):
            raise DanglingReference(
                f"{what} at t={t} reads {name}[{tau}], before its start {starts[name]} with no prologue"
            )


def _validate_map(m: BlockMap, ctx: dsl.ValidationContext, alphabet: int, delay: int) -> None:
    if isinstance(m, (LookupTable, CallableMap)):
        refs = map_refs(m)
        if refs is None:
            return
        fake = dsl.IntLiteral(0)
        for name, lag in refs:
            fake = dsl.BinaryOp("+", fake, dsl.SignalRef(name, lag))
        dsl.validate(fake, ctx, alphabet, delay)
        if isinstance(m, LookupTable):
            bad = [v for v in m.table if not 0 <= v < alphabet]
            if bad:
                raise ModelError(f"{ctx.output}: lookup table value {bad[0]} outside alphabet")
        return
    dsl.validate(m, ctx, alphabet, delay)


def build_system(
    signals: Sequence[SignalDecl],
    exogenous: ExogenousSpec,
    blocks: Sequence[Block],
    horizon: int,
    derived: Sequence[DerivedSignal] = (),
) -> LoopSystem:
    """Validate a declaration and return a :class:`LoopSystem`.

    Raises DelayViolation, DanglingReference, CausalityViolation,
    WiringViolation, BadPmf or AlphabetOverflow.
    """
    signals = tuple(signals)
    blocks = tuple(blocks)
    derived = tuple(derived)
    if horizon < 1:
        raise ModelError("horizon must be at least 1")

    names = [s.name for s in signals] + [d.name for d in derived]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ModelError(f"duplicate signal names: {sorted(dup)}")
    decl = {s.name: s for s in signals}
    exo = {s.name for s in signals if s.role == EXOGENOUS}
    internal = [s.name for s in signals if s.role == INTERNAL]

    # exogenous groups partition the exogenous set
    seen: set[str] = set()
    for g in exogenous.groups:
        for n in g.signals:
            if n not in decl:
                raise UnknownSignal(f"coupling group names undeclared signal {n!r}")
            if n not in exo:
                raise ModelError(f"{n!r} is in a coupling group but is not exogenous")
            if n in seen:
                raise ModelError(f"{n!r} appears in more than one coupling group")
            seen.add(n)
        group_starts = {decl[n].start for n in g.signals}
        if len(group_starts) > 1:
            raise ModelError(f"signals of group {g.signals} must share a start index")
        start = group_starts.pop()
        for t in range(start, horizon + 1):
            pmf = g.pmf_at(t)
            for key in pmf:
                for n, v in zip(g.signals, key):
                    if v not in decl[n].alphabet:
                        raise BadPmf(f"pmf of {g.signals} puts mass on {n}={v}, outside its alphabet")
        for t in g.steps:
            if not start <= t <= horizon:
                raise ModelError(f"group {g.signals}: per-step pmf at t={t} outside {start}..{horizon}")
    if seen != exo:
        raise ModelError(f"exogenous signals without a coupling group: {sorted(exo - seen)}")

    # blocks form one cycle through every internal signal
    if not blocks:
        raise ModelError("a loop needs at least one block")
    outputs = [b.output for b in blocks]
    if sorted(outputs) != sorted(internal):
        raise ModelError("each internal signal must be the output of exactly one block")
    for i, b in enumerate(blocks):
        nxt = blocks[(i + 1) % len(blocks)]
        if nxt.loop_input != b.output:
            raise ModelError(
                f"blocks are not wired in a cycle: {b.name} outputs {b.output!r} "
                f"but {nxt.name} reads {nxt.loop_input!r}"
            )
        if b.exogenous is not None and b.exogenous not in exo:
            raise DanglingReference(f"block {b.name}: exogenous input {b.exogenous!r} is not exogenous")
    if sum(b.delay for b in blocks) < 1:
        raise DelayViolation("the loop must contain a delay of at least one sample")

    starts = {s.name: s.start for s in signals}
    prologues = {s.name: s.prologue for s in signals}
    for d in derived:
        starts[d.name] = d.start
    all_names = frozenset(starts)
    for b in blocks:
        ctx = dsl.ValidationContext(
            signals=frozenset(decl), output=b.output, loop_input=b.loop_input, exogenous_input=b.exogenous
        )
        size = decl[b.output].size
        for t, m in [(None, b.map), *b.overrides.items()]:
            _validate_map(m, ctx, size, b.delay)
        for t in b.overrides:
            if not starts[b.output] <= t <= horizon:
                raise ModelError(f"block {b.name}: override at t={t} outside signal range")
        for t in range(starts[b.output], horizon + 1):
            _check_refs(f"block {b.name}", b.map_at(t), t, starts, prologues)

    for i, d in enumerate(derived):
        visible = frozenset(decl) | {e.name for e in derived[:i] if e.mode == STEP}
        ctx = dsl.ValidationContext(signals=visible)
        refs = map_refs(d.map)
        if refs is None:
            raise ModelError(f"derived {d.name}: a finite window must be declared")
        _validate_map(d.map, ctx, d.alphabet.size, 0)
        for t in range(d.start, horizon + 1):
            _check_refs(f"derived {d.name}", d.map, t, starts, prologues)

    order = _dependency_order(signals, blocks, derived, horizon, starts, all_names)
    return LoopSystem(signals, exogenous, blocks, horizon, derived, order)


def _dependency_order(signals, blocks, derived, horizon, starts, all_names):
    """Topological order of computed ``(signal, time)`` samples."""
    sorter: graphlib.TopologicalSorter = graphlib.TopologicalSorter()
    computed = set()
    for b in blocks:
        for t in range(starts[b.output], horizon + 1):
            node = (b.output, t)
            computed.add(node)
            refs = map_refs(b.map_at(t))
            if refs is None:  # unbounded history: everything causally admissible
                deps = [(b.loop_input, tau) for tau in range(starts[b.loop_input], t - b.delay + 1)]
                deps += [(b.output, tau) for tau in range(starts[b.output], t)]
            else:
                deps = [(n, t - lag) for n, lag in refs if t - lag >= starts[n]]
            sorter.add(node, *deps)
    for d in derived:
        for t in range(d.start, horizon + 1):
            node = (d.name, t)
            computed.add(node)
            sorter.add(node, *[(n, t - lag) for n, lag in map_refs(d.map) if t - lag >= starts[n]])
    try:
        order = tuple(sorter.static_order())
    except graphlib.CycleError as exc:
        raise CausalityViolation(f"sample-level dependency cycle: {exc.args[1]}") from None
    return tuple(node for node in order if node in computed)


def attach_derived(
    sys: LoopSystem,
    name: str,
    expr,
    alphabet: int = 2,
    start: int = 1,
    mode: str = STEP,
) -> LoopSystem:
    """Return a copy of ``sys`` with one more derived signal.

    ``expr`` may be source text; a future reference such as ``w[t+1]`` raises
    :class:`DanglingReference`.
    """
    d = DerivedSignal(name, expr, Alphabet(alphabet), start, mode)
    return sys.replace(derived=sys.derived + (d,))


# ---- structural independence ------------------------------------------------


@dataclass(frozen=True)
class PatternResult:
    holds: bool
    explanation: str

    def __bool__(self) -> bool:
        return self.holds


_INDEP_SEP = re.compile(r"⊥|_\|_|\bindep\b")
_MARKOV_SEP = re.compile(r"↔|<->")
_TERM = re.compile(
    r"^\s*(?P<name>[A-Za-z][A-Za-z0-9]*)(?P<suffix>_\{[^}]*\}\^\w+|\^\w+|\+|-)?\s*$"
)


def _split_top(text: str, seps: tuple[str, ...]) -> list[str]:
    parts, depth, cur, i = [], 0, "", 0
    while i < len(text):
        ch = text[i]
        if ch in "({":
            depth += 1
        elif ch in ")}":
            depth -= 1
        if depth == 0:
            hit = next((s for s in seps if text.startswith(s, i)), None)
            if hit:
                parts.append(cur)
                cur = ""
                i += len(hit)
                continue
        cur += ch
        i += 1
    parts.append(cur)
    return [p.strip() for p in parts if p.strip()]


def _side_terms(side: str) -> list[tuple[str, str]]:
    side = side.strip()
    if side.startswith("(") and side.endswith(")"):
        side = side[1:-1]
    out = []
    for part in side.split(","):
        m = _TERM.match(part)
        if not m:
            raise ValueError(f"cannot parse pattern term {part!r}")
        suffix = m.group("suffix") or ""
        if suffix.startswith("_{") or suffix == "+":
            kind = "future"
        elif suffix.startswith("^") or suffix == "-":
            kind = "past"
        else:
            kind = "all"
        out.append((m.group("name"), kind))
    return out


def check_independence_pattern(sys: LoopSystem, pattern: str) -> PatternResult:
    """Decide whether the declared coupling groups imply ``pattern``.

    Clauses are separated by top-level commas, ``;`` or ``and``.  Supported
    clauses: ``A ⊥ B [⊥ C ...]`` (the sides are mutually independent; ``_|_``
    may be used instead of ``⊥``) and Markov chains ``A ↔ B ↔ C`` (or
    ``<->``), where a term may carry ``_{i+1}^k`` / ``+`` (future samples) or
    ``^i`` / ``-`` (past samples).  Only group structure is inspected, never
    numerical pmfs.
    """
    exo = set(sys.exogenous_names)
    partition = sys.exogenous.partition

    def group_ids(terms):
        ids = set()
        for name, _ in terms:
            if name not in exo:
                raise UnknownSignal(f"pattern references {name!r}, which is not an exogenous signal")
            ids.add(next(i for i, g in enumerate(partition) if name in g))
        return ids

    notes = []
    for clause in _split_top(pattern, (",", ";", " and ")):
        if _MARKOV_SEP.search(clause):
            sides = [_side_terms(s) for s in _MARKOV_SEP.split(clause)]
            if len(sides) != 3:
                raise ValueError(f"Markov clause needs three parts: {clause!r}")
            a, b, c = sides
            ga, gb, gc = group_ids(a), group_ids(b), group_ids(c)
            if all(k == "future" for _, k in a) and all(k == "past" for _, k in b + c):
                notes.append(f"{clause}: holds (exogenous samples are independent across time steps)")
                continue
            if ga & gc:
                return PatternResult(False, f"{clause}: a coupling group touches both ends of the chain")
            notes.append(f"{clause}: holds (no coupling group touches both ends)")
        else:
            sides = [_side_terms(s) for s in _INDEP_SEP.split(clause)]
            if len(sides) < 2:
                # a single parenthesised side list with commas was split at top level
                raise ValueError(f"independence clause needs at least two sides: {clause!r}")
            ids = [group_ids(s) for s in sides]
            for i, j in itertools.combinations(range(len(ids)), 2):
                shared = ids[i] & ids[j]
                if shared:
                    grp = sorted(partition[next(iter(shared))])
                    return PatternResult(False, f"{clause}: coupling group {{{', '.join(grp)}}} spans both sides")
            notes.append(f"{clause}: holds (sides lie in distinct coupling groups)")
    return PatternResult(True, "; ".join(notes))
