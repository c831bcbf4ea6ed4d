"""Plain-text loop descriptions.

A spec file is a sequence of ``[section]`` headers followed by one
declaration per line.  ``#`` starts a comment outside quoted strings.

::

    [horizon]
    n = 6
    t_min = 0                       # default start index of signals

    [signal]
    q : 2 exogenous start=0
    y : 4 start=0 prologue=-1:0

    [exogenous]
    q ~ 0:0.1 1:0.9 @0 1:1          # i.i.d. pmf, then per-step overrides
    (p,s) ~ 0,0:0.5 1,1:0.5         # a coupled group

    [block]                         # listed in cycle order
    E : w -> x delay 0 exo r = "(w[t] == (x[t-1] mod 2)) ? r[t] : r[t] + 2"
    E@0 = "r[t]"
    S : y -> w delay 1 = table y@1 q@0 : 0 1 1 0

    [derived]
    v : 2 start=1 = "y[t] mod 2"
    e_n : 2 any = "v[t] != w[t]"

    [measure]
    DI(w -> y | p, u@1) range 1..8 delay 0
    RDI(y -> w)
    ITL(w | y, p)
    H(w | y) range 1..4
    I(w ; y | p) engine tree

    [check]
    7, 8, massey

Lookup-table maps list their ``signal@lag`` inputs (first most
significant) and the row-major output values; input sizes come from the
signal declarations.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import dsl
from .errors import ModelError, ParseError
from .joint import DEFAULT_BUDGET, Budget
from .measures import (
    ENGINES,
    MeasureResult,
    cond_entropy,
    directed_information,
    itl_terms,
    mutual_information,
    reverse_directed_information,
)
from .model import (
    ANY,
    EXOGENOUS,
    INTERNAL,
    STEP,
    Block,
    CallableMap,
    DerivedSignal,
    ExoGroup,
    ExogenousSpec,
    LookupTable,
    LoopSystem,
    SignalDecl,
    build_system,
)

SECTIONS = ("horizon", "signal", "exogenous", "block", "derived", "measure", "check")
MEASURE_KINDS = ("DI", "RDI", "ITL", "H", "I")


# ---- measure requests ---------------------------------------------------------------


@dataclass(frozen=True)
class MeasureSpec:
    """A parsed measure request.

    ``sources``/``target`` are used by DI, RDI and ITL (message, output);
    H and I use ``groups`` (the sides of ``;``) and ``given``.
    """

    kind: str
    sources: tuple[str, ...] = ()
    target: str = ""
    conditions: tuple[tuple[str, int], ...] = ()
    groups: tuple[tuple[str, ...], ...] = ()
    given: tuple[str, ...] = ()
    range: tuple[int, int] | None = None
    delay: int | None = None
    engine: str = "enumerate"

    def to_text(self) -> str:
        def conds():
            return ", ".join(n if lag == 0 else f"{n}@{lag}" for n, lag in self.conditions)

        if self.kind in ("DI", "RDI"):
            body = f"{','.join(self.sources)} -> {self.target}" + (f" | {conds()}" if self.conditions else "")
        elif self.kind == "ITL":
            body = f"{self.sources[0]} | {self.target}" + "".join(f", {n}" for n, _ in self.conditions)
        else:
            body = " ; ".join(", ".join(g) for g in self.groups)
            if self.given:
                body += " | " + ", ".join(self.given)
        out = f"{self.kind}({body})"
        if self.range is not None:
            out += f" range {self.range[0]}..{self.range[1]}"
        if self.delay is not None:
            out += f" delay {self.delay}"
        if self.engine != "enumerate":
            out += f" engine {self.engine}"
        return out


_MEASURE = re.compile(r"^\s*(?P<kind>[A-Za-z]+)\s*\((?P<body>[^()]*)\)(?P<rest>.*)$")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _names(text: str, what: str, src: str, off: int) -> tuple[str, ...]:
    out = tuple(p.strip() for p in text.split(",") if p.strip())
    for n in out:
        if not _NAME.match(n):
            raise ParseError(f"bad signal name {n!r} in {what}", src, off)
    return out


def _conditions(text: str, src: str, off: int) -> tuple[tuple[str, int], ...]:
    out = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)(?:@(\d+))?", part)
        if not m:
            raise ParseError(f"bad condition {part!r}; expected name or name@lag", src, off)
        out.append((m.group(1), int(m.group(2) or 0)))
    return tuple(out)


def parse_measure(text: str, src: str | None = None, offset: int = 0) -> MeasureSpec:
    """Parse one ``[measure]`` line.  ``src``/``offset`` place errors in a file."""
    src = text if src is None else src
    m = _MEASURE.match(text)
    if not m:
        raise ParseError("expected KIND(...) measure request", src, offset)
    kind = m.group("kind").upper()
    if kind not in MEASURE_KINDS:
        raise ParseError(f"unknown measure {m.group('kind')!r}; choose from {MEASURE_KINDS}", src, offset)
    body = m.group("body")
    boff = offset + m.start("body")
    fields: dict = {"kind": kind}
    if kind in ("DI", "RDI"):
        if "->" not in body:
            raise ParseError("directed information needs 'source -> target'", src, boff)
        lhs, rhs = body.split("->", 1)
        tgt, _, cond = rhs.partition("|")
        fields["sources"] = _names(lhs, "source", src, boff)
        targets = _names(tgt, "target", src, boff)
        if len(fields["sources"]) == 0 or len(targets) != 1:
            raise ParseError("need at least one source and exactly one target", src, boff)
        if kind == "RDI" and len(fields["sources"]) != 1:
            raise ParseError("reverse directed information takes one source", src, boff)
        fields["target"] = targets[0]
        fields["conditions"] = _conditions(cond, src, boff)
    elif kind == "ITL":
        msg, bar, rest = body.partition("|")
        parts = _names(rest, "output", src, boff)
        if not bar or len(parts) not in (1, 2):
            raise ParseError("ITL needs 'message | output[, side]'", src, boff)
        fields["sources"] = _names(msg, "message", src, boff)
        if len(fields["sources"]) != 1:
            raise ParseError("ITL takes one message signal", src, boff)
        fields["target"] = parts[0]
        fields["conditions"] = tuple((p, 0) for p in parts[1:])
    else:
        main, _, given = body.partition("|")
        groups = tuple(_names(g, "argument", src, boff) for g in main.split(";"))
        if kind == "H" and len(groups) != 1:
            raise ParseError("H takes one group of signals", src, boff)
        if kind == "I" and len(groups) != 2:
            raise ParseError("I needs two groups separated by ';'", src, boff)
        if any(not g for g in groups):
            raise ParseError("empty signal group", src, boff)
        fields["groups"] = groups
        fields["given"] = _names(given, "condition", src, boff)

    rest = m.group("rest")
    roff = offset + m.start("rest")
    toks = rest.split()
    i = 0
    while i < len(toks):
        key = toks[i]
        if i + 1 >= len(toks):
            raise ParseError(f"option {key!r} needs a value", src, roff + rest.find(key))
        val = toks[i + 1]
        pos = roff + rest.find(val)
        if key == "range":
            r = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", val)
            if not r or int(r.group(1)) > int(r.group(2)):
                raise ParseError(f"bad range {val!r}; expected a..b with a <= b", src, pos)
            fields["range"] = (int(r.group(1)), int(r.group(2)))
        elif key == "delay":
            if not val.isdigit():
                raise ParseError(f"bad delay {val!r}", src, pos)
            if kind not in ("DI",):
                raise ParseError("only DI takes a delay", src, pos)
            fields["delay"] = int(val)
        elif key == "engine":
            if val not in ENGINES:
                raise ParseError(f"unknown engine {val!r}", src, pos)
            fields["engine"] = val
        else:
            raise ParseError(f"unknown option {key!r}", src, roff + rest.find(key))
        i += 2
    return MeasureSpec(**fields)


def _samples(sys: LoopSystem, names: Sequence[str], rng: tuple[int, int] | None):
    out = []
    for n in names:
        for t in sys.times(n):
            if rng is None or rng[0] <= t <= rng[1]:
                out.append((n, t))
    return out


def evaluate_measure(sys: LoopSystem, ms: MeasureSpec, budget: Budget = DEFAULT_BUDGET) -> MeasureResult:
    """Compute one request exactly; raises ModelError for unknown signals or ranges."""
    for n in ms.sources + (ms.target,) * bool(ms.target) + tuple(c for c, _ in ms.conditions):
        if not sys.has(n):
            raise ModelError(f"measure references unknown signal {n!r}")
    for n in [x for g in ms.groups for x in g] + list(ms.given):
        if not sys.has(n):
            raise ModelError(f"measure references unknown signal {n!r}")
    steps = None
    if ms.range is not None:
        times = sys.times(ms.target) if ms.target else None
        steps = list(range(ms.range[0], ms.range[1] + 1))
        if times is not None and any(t not in times for t in steps):
            raise ModelError(f"range {ms.range[0]}..{ms.range[1]} leaves the samples of {ms.target}")
    text = ms.to_text()
    if ms.kind == "DI":
        r = directed_information(sys, list(ms.sources), ms.target, ms.delay or 0, ms.conditions, steps, ms.engine, budget)
    elif ms.kind == "RDI":
        r = reverse_directed_information(sys, ms.sources[0], ms.target, ms.conditions, steps, ms.engine, budget)
    elif ms.kind == "ITL":
        side = ms.conditions[0][0] if ms.conditions else None
        r = itl_terms(sys, ms.sources[0], ms.target, side, ms.engine, budget)
        if steps is not None:
            keep = [(t, v) for t, v in zip(r.steps, r.per_step_terms) if t in steps]
            r = MeasureResult(r.spec, math.fsum(v for _, v in keep), tuple(v for _, v in keep), tuple(t for t, _ in keep))
    else:
        from .joint import enumerate_joint

        names = [x for g in ms.groups for x in g] + list(ms.given)
        table = enumerate_joint(sys, sys.variables(list(dict.fromkeys(names))), budget)
        groups = [_samples(sys, g, ms.range) for g in ms.groups]
        given = _samples(sys, ms.given, ms.range)
        if any(not g for g in groups):
            raise ModelError(f"{text}: no samples fall in the requested range")
        if ms.kind == "H":
            value = cond_entropy(table, groups[0], given)
        else:
            value = mutual_information(table, groups[0], groups[1], given)
        return MeasureResult(text, value)
    return MeasureResult(text, r.value_bits, r.per_step_terms, r.steps)


# ---- files ----------------------------------------------------------------------------


@dataclass
class SpecFile:
    system: LoopSystem
    measures: list[MeasureSpec] = field(default_factory=list)
    checks: list[str] = field(default_factory=list)
    t_min: int = 1


@dataclass
class _Line:
    text: str  # comment stripped
    offset: int  # of text[0] in the file


def _strip_comment(line: str) -> str:
    quote = False
    for i, ch in enumerate(line):
        if ch == '"':
            quote = not quote
        elif ch == "#" and not quote:
            return line[:i]
    return line


def _int(tok: str, src: str, off: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer for {what}, got {tok!r}", src, off) from None


def _map_from(rhs: str, src: str, off: int, sizes: dict[str, int]):
    """Parse the right-hand side of ``=``: a quoted expression or a table."""
    stripped = rhs.strip()
    lead = off + (len(rhs) - len(rhs.lstrip()))
    if stripped.startswith('"'):
        if len(stripped) < 2 or not stripped.endswith('"'):
            raise ParseError("unterminated expression string", src, lead)
        body = stripped[1:-1]
        try:
            return dsl.parse(body)
        except ParseError as exc:
            raise type(exc)(exc.message, src, lead + 1 + exc.char_offset, exc.expected) from None
    if stripped.startswith("table"):
        head, colon, vals = stripped[5:].partition(":")
        if not colon:
            raise ParseError("table needs 'inputs : values'", src, lead)
        inputs = []
        for tok in head.split():
            m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)@(\d+)", tok)
            if not m:
                raise ParseError(f"bad table input {tok!r}; expected name@lag", src, lead + stripped.find(tok))
            if m.group(1) not in sizes:
                raise ParseError(f"table input {m.group(1)!r} is not a declared signal", src, lead + stripped.find(tok))
            inputs.append((m.group(1), int(m.group(2))))
        values = [_int(v, src, lead, "table entry") for v in vals.split()]
        try:
            return LookupTable(tuple(inputs), tuple(sizes[n] for n, _ in inputs), tuple(values))
        except ModelError as exc:
            raise ParseError(str(exc), src, lead) from None
    raise ParseError('expected a quoted expression or "table ..."', src, lead)


def _pmf(tokens: list[tuple[str, int]], src: str) -> dict:
    pmf = {}
    for tok, off in tokens:
        key, colon, p = tok.rpartition(":")
        if not colon:
            raise ParseError(f"bad pmf entry {tok!r}; expected symbols:probability", src, off)
        try:
            sym = tuple(int(v) for v in key.split(","))
            pmf[sym] = pmf.get(sym, 0.0) + float(p)
        except ValueError:
            raise ParseError(f"bad pmf entry {tok!r}", src, off) from None
    return pmf


def _tokens(text: str, offset: int) -> list[tuple[str, int]]:
    return [(m.group(0), offset + m.start()) for m in re.finditer(r"\S+", text)]


def parse_spec(src: str) -> SpecFile:
    """Parse spec text into a validated system plus its requests.

    Syntax problems raise :class:`ParseError` with the line and column;
    semantic problems (wiring, causality, pmfs) raise :class:`ModelError`.
    """
    sections: dict[str, list[_Line]] = {s: [] for s in SECTIONS}
    current = None
    pos = 0
    for raw in src.splitlines(keepends=True):
        line = _strip_comment(raw.rstrip("\r\n"))
        if line.strip():
            lead = len(line) - len(line.lstrip())
            head = re.fullmatch(r"\s*\[([A-Za-z_]+)\]\s*", line)
            if head:
                current = head.group(1).lower()
                if current not in SECTIONS:
                    raise ParseError(f"unknown section [{head.group(1)}]", src, pos + lead)
            elif current is None:
                raise ParseError("declaration before the first [section]", src, pos + lead)
            else:
                sections[current].append(_Line(line.strip(), pos + lead))
        pos += len(raw)

    # horizon
    n = None
    t_min = 1
    for ln in sections["horizon"]:
        key, eq, val = ln.text.partition("=")
        key = key.strip()
        if not eq or key not in ("n", "t_min"):
            raise ParseError("expected 'n = <int>' or 't_min = <int>'", src, ln.offset)
        v = _int(val.strip(), src, ln.offset + ln.text.find(val.strip()), key)
        if key == "n":
            n = v
        else:
            t_min = v
    if n is None:
        raise ParseError("missing [horizon] n = <int>", src, len(src))

    # signals
    signals = []
    sizes: dict[str, int] = {}
    for ln in sections["signal"]:
        name, colon, rest = ln.text.partition(":")
        name = name.strip()
        if not colon or not _NAME.match(name):
            raise ParseError("expected 'name : size [exogenous] [start=N] [prologue=t:v,...]'", src, ln.offset)
        toks = _tokens(rest, ln.offset + len(ln.text) - len(rest))
        if not toks:
            raise ParseError("missing alphabet size", src, ln.offset + len(ln.text))
        size = _int(toks[0][0], src, toks[0][1], "alphabet size")
        role, start, prologue = INTERNAL, t_min, {}
        for tok, off in toks[1:]:
            if tok in (EXOGENOUS, INTERNAL):
                role = tok
            elif tok.startswith("start="):
                start = _int(tok[6:], src, off + 6, "start")
            elif tok.startswith("prologue="):
                for item in tok[9:].split(","):
                    t, c, v = item.partition(":")
                    if not c:
                        raise ParseError(f"bad prologue item {item!r}; expected time:value", src, off)
                    prologue[_int(t, src, off, "prologue time")] = _int(v, src, off, "prologue value")
            else:
                raise ParseError(f"unknown signal attribute {tok!r}", src, off)
        signals.append(SignalDecl(name, size, role, start, prologue))
        sizes[name] = size

    # exogenous groups
    groups = []
    for ln in sections["exogenous"]:
        lhs, tilde, rhs = ln.text.partition("~")
        if not tilde:
            raise ParseError("expected 'name ~ pmf' or '(a,b) ~ pmf'", src, ln.offset)
        names = lhs.strip().strip("()")
        members = _names(names, "coupling group", src, ln.offset)
        toks = _tokens(rhs, ln.offset + len(lhs) + 1)
        base, steps, cur = [], {}, None
        for tok, off in toks:
            if tok.startswith("@"):
                cur = _int(tok[1:], src, off + 1, "override time")
                steps[cur] = []
            elif cur is None:
                base.append((tok, off))
            else:
                steps[cur].append((tok, off))
        pmf = _pmf(base, src) if base else None
        groups.append(ExoGroup(members, pmf, {t: _pmf(v, src) for t, v in steps.items()}))

    # blocks
    blocks: list[dict] = []
    by_name: dict[str, dict] = {}
    for ln in sections["block"]:
        m = re.match(r"([A-Za-z_][A-Za-z0-9_]*)@(\d+)\s*=", ln.text)
        if m:
            if m.group(1) not in by_name:
                raise ParseError(f"override for undeclared block {m.group(1)!r}", src, ln.offset)
            rhs_off = ln.offset + m.end()
            by_name[m.group(1)]["overrides"][int(m.group(2))] = _map_from(ln.text[m.end():], src, rhs_off, sizes)
            continue
        m = re.match(
            r"(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*:\s*(?P<inp>[A-Za-z_][A-Za-z0-9_]*)\s*->\s*(?P<out>[A-Za-z_][A-Za-z0-9_]*)"
            r"\s+delay\s+(?P<delay>\d+)(?:\s+exo\s+(?P<exo>[A-Za-z_][A-Za-z0-9_]*))?\s*=",
            ln.text,
        )
        if not m:
            raise ParseError("expected 'NAME : input -> output delay D [exo E] = map'", src, ln.offset)
        b = {
            "name": m.group("name"),
            "output": m.group("out"),
            "loop_input": m.group("inp"),
            "delay": int(m.group("delay")),
            "exogenous": m.group("exo"),
            "map": _map_from(ln.text[m.end():], src, ln.offset + m.end(), sizes),
            "overrides": {},
        }
        blocks.append(b)
        by_name[b["name"]] = b

    derived = []
    for ln in sections["derived"]:
        m = re.match(r"(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*:(?P<attrs>(?:\s*(?:start=-?\d+|[A-Za-z0-9_]+))*)\s*=", ln.text)
        if not m:
            raise ParseError("expected 'name : size [start=N] [any] = expr'", src, ln.offset)
        toks = _tokens(m.group("attrs"), ln.offset + m.start("attrs"))
        if not toks:
            raise ParseError("missing alphabet size", src, ln.offset)
        size = _int(toks[0][0], src, toks[0][1], "alphabet size")
        start, mode = 1, STEP
        for tok, off in toks[1:]:
            if tok.startswith("start="):
                start = _int(tok[6:], src, off + 6, "start")
            elif tok in (ANY, STEP):
                mode = tok
            else:
                raise ParseError(f"unknown derived attribute {tok!r}", src, off)
        mp = _map_from(ln.text[m.end():], src, ln.offset + m.end(), sizes)
        derived.append(DerivedSignal(m.group("name"), mp, size, start, mode))

    measures = [parse_measure(ln.text, src, ln.offset) for ln in sections["measure"]]
    checks = []
    for ln in sections["check"]:
        checks.extend(c.strip() for c in ln.text.split(",") if c.strip())

    system = build_system(
        signals, ExogenousSpec(tuple(groups)), [Block(**b) for b in blocks], n, derived
    )
    return SpecFile(system, measures, checks, t_min)


def load_spec(path: str | Path) -> SpecFile:
    return parse_spec(Path(path).read_text(encoding="utf-8"))


# ---- writing ----------------------------------------------------------------------------


def _map_text(m) -> str:
    if isinstance(m, LookupTable):
        ins = " ".join(f"{n}@{l}" for n, l in m.inputs)
        return f"table {ins} : {' '.join(map(str, m.table))}"
    if isinstance(m, CallableMap):
        raise ModelError("callable block maps cannot be written to a spec file")
    return '"' + dsl.to_source(m) + '"'


def _pmf_text(pmf) -> str:
    return " ".join(f"{','.join(map(str, k))}:{p!r}" for k, p in pmf.items())


def dump_spec(system: LoopSystem, measures: Sequence[MeasureSpec] = (), checks: Sequence[str] = ()) -> str:
    """Spec text that :func:`parse_spec` turns back into an equal system."""
    out = ["[horizon]", f"n = {system.horizon}", "", "[signal]"]
    for s in system.signals:
        line = f"{s.name} : {s.size} {s.role} start={s.start}"
        if s.prologue:
            line += " prologue=" + ",".join(f"{t}:{v}" for t, v in sorted(s.prologue.items()))
        out.append(line)
    out += ["", "[exogenous]"]
    for g in system.exogenous.groups:
        lhs = g.signals[0] if len(g.signals) == 1 else "(" + ",".join(g.signals) + ")"
        parts = [_pmf_text(g.pmf)] if g.pmf is not None else []
        parts += [f"@{t} {_pmf_text(p)}" for t, p in sorted(g.steps.items())]
        out.append(f"{lhs} ~ {' '.join(parts)}")
    out += ["", "[block]"]
    for b in system.blocks:
        exo = f" exo {b.exogenous}" if b.exogenous else ""
        out.append(f"{b.name} : {b.loop_input} -> {b.output} delay {b.delay}{exo} = {_map_text(b.map)}")
        for t, m in sorted(b.overrides.items()):
            out.append(f"{b.name}@{t} = {_map_text(m)}")
    if system.derived:
        out += ["", "[derived]"]
        for d in system.derived:
            mode = " any" if d.mode == ANY else ""
            out.append(f"{d.name} : {d.alphabet.size} start={d.start}{mode} = {_map_text(d.map)}")
    if measures:
        out += ["", "[measure]"] + [m.to_text() for m in measures]
    if checks:
        out += ["", "[check]", ", ".join(checks)]
    return "\n".join(out) + "\n"
