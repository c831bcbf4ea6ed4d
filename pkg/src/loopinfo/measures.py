"""Entropies, (conditional) mutual and directed information in bits.

Every function accepts either a :class:`~loopinfo.joint.JointTable` or a
:class:`~loopinfo.model.LoopSystem`.  Systems are evaluated exactly, by full
enumeration (``engine="enumerate"``), by the belief tree (``engine="tree"``)
or by enumeration with a tree fallback when the atom budget is exceeded
(``engine="auto"``).

Histories are written as ``(signal, lag)`` conditions: the per-step term at
step ``i`` conditions on every sample of ``signal`` up to time ``i - lag``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np

from .errors import BudgetExceeded, ModelError, VariableMissing
from .fsm import compile_fsm, tree_chain_entropies
from .joint import DEFAULT_BUDGET, Budget, JointTable, _group_rows, enumerate_joint, grouped_fsum
from .model import LoopSystem

Var = tuple[str, int]
Source = Union[JointTable, LoopSystem]
ENGINES = ("enumerate", "tree", "auto")


@dataclass(frozen=True)
class MeasureResult:
    """A measure value with its per-step decomposition (empty for plain entropies)."""

    spec: str
    value_bits: float
    per_step_terms: tuple[float, ...] = ()
    steps: tuple[int, ...] = ()

    def __float__(self) -> float:
        return self.value_bits

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "value_bits": self.value_bits,
            "per_step_terms": list(self.per_step_terms),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---- table-level primitives ----------------------------------------------------


def entropy(table: JointTable, A: Sequence[Var]) -> float:
    return table.entropy(list(A))


def cond_entropy(table: JointTable, A: Sequence[Var], B: Sequence[Var] = ()) -> float:
    A, B = list(A), list(B)
    return table.entropy(A + B) - table.entropy(B)


def mutual_information(
    table: JointTable, A: Sequence[Var], B: Sequence[Var], C: Sequence[Var] = ()
) -> float:
    """I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)."""
    A, B, C = list(A), list(B), list(C)
    return table.entropy(A + C) + table.entropy(B + C) - table.entropy(A + B + C) - table.entropy(C)


# ---- histories -------------------------------------------------------------------


def _times(table: JointTable, name: str) -> list[int]:
    return sorted(t for n, t in table.variables if n == name)


def _history(table: JointTable, name: str, upto: int) -> list[Var]:
    ts = _times(table, name)
    if not ts:
        raise VariableMissing(f"signal {name!r} not in table")
    return [(name, t) for t in ts if t <= upto]


def _signals_of(source: Source, names) -> None:
    for n in names:
        if isinstance(source, LoopSystem):
            if not source.has(n):
                raise VariableMissing(f"unknown signal {n!r}")
        elif not _times(source, n):
            raise VariableMissing(f"signal {n!r} not in table")


def _table_for(source: Source, names, budget: Budget) -> JointTable:
    if isinstance(source, JointTable):
        return source
    return enumerate_joint(source, source.variables(list(dict.fromkeys(names))), budget)


def _default_steps(source: Source, target: str) -> list[int]:
    if isinstance(source, LoopSystem):
        return list(source.times(target))
    return _times(source, target)


def _fmt_conds(conditions) -> str:
    if not conditions:
        return ""
    return " || " + ", ".join(f"{n}@{l}" if l else n for n, l in conditions)


# ---- directed information ------------------------------------------------------


def _sources(source) -> list[str]:
    return [source] if isinstance(source, str) else list(source)


def _terms_from_table(table, source, target, delay, conditions, steps):
    terms = []
    for i in steps:
        past_y = _history(table, target, i - 1)
        cond = [v for n, lag in conditions for v in _history(table, n, i - lag)]
        x_hist = [v for n in _sources(source) for v in _history(table, n, i - delay)]
        if not x_hist:
            terms.append(0.0)
            continue
        terms.append(mutual_information(table, [(target, i)], x_hist, past_y + cond))
    return terms


def _tree_cond_entropies(sys: LoopSystem, comps, steps, budget: Budget) -> list[float]:
    """H(last comp at i | all components' past, earlier comps at i) for i in steps."""
    first = min([steps[0]] + [sys.start(n) + l for n, l in comps])
    first = max(first, 0)
    model = compile_fsm(sys, comps, first=first, budget=budget)
    H = tree_chain_entropies(model, steps[-1], budget)
    return [float(H[i - first, -1]) for i in steps]


def _terms_from_tree(sys, source, target, delay, conditions, steps, budget):
    conds = [(n, l) for n, l in conditions]
    without = _tree_cond_entropies(sys, conds + [(target, 0)], steps, budget)
    srcs = [(n, delay) for n in _sources(source)]
    with_x = _tree_cond_entropies(sys, conds + srcs + [(target, 0)], steps, budget)
    first_src = min(sys.start(n) for n in _sources(source))
    terms = []
    for i, a, b in zip(steps, without, with_x):
        # source samples all lie before their start: the term vanishes
        terms.append(0.0 if i - delay < first_src else a - b)
    return terms


def directed_information(
    source_obj: Source,
    source: str | Sequence[str],
    target: str,
    delay: int = 0,
    conditions: Sequence[tuple[str, int]] = (),
    steps: Sequence[int] | None = None,
    engine: str = "enumerate",
    budget: Budget = DEFAULT_BUDGET,
) -> MeasureResult:
    """Sum over ``steps`` of I(target(i); source^{i-delay} | target^{<i}, conditions).

    ``source`` may name several signals, which then act jointly.
    ``conditions`` lists ``(signal, lag)`` pairs for causal conditioning.
    Terms whose source history is empty contribute 0.
    """
    if delay < 0:
        raise ModelError("delay must be non-negative")
    conditions = [(str(n), int(l)) for n, l in conditions]
    if any(l < 0 for _, l in conditions):
        raise ModelError("condition lags must be non-negative")
    if engine not in ENGINES:
        raise ModelError(f"engine must be one of {ENGINES}")
    names = _sources(source) + [target] + [n for n, _ in conditions]
    _signals_of(source_obj, names)
    steps = list(steps) if steps is not None else _default_steps(source_obj, target)
    if not steps:
        raise ModelError("empty summation range")
    spec = f"DI({','.join(_sources(source))} -> {target}{_fmt_conds(conditions)}) delay {delay} range {steps[0]}..{steps[-1]}"
    if isinstance(source_obj, LoopSystem) and engine != "enumerate":
        for i in steps:
            if i not in source_obj.times(target):
                raise VariableMissing(f"{target}[{i}] is not a sample of the system")
        if engine == "tree":
            terms = _terms_from_tree(source_obj, source, target, delay, conditions, steps, budget)
            return MeasureResult(spec, math.fsum(terms), tuple(terms), tuple(steps))
        try:
            table = _table_for(source_obj, names, budget)
        except BudgetExceeded:
            terms = _terms_from_tree(source_obj, source, target, delay, conditions, steps, budget)
            return MeasureResult(spec, math.fsum(terms), tuple(terms), tuple(steps))
    else:
        table = _table_for(source_obj, names, budget)
    terms = _terms_from_table(table, source, target, delay, conditions, steps)
    return MeasureResult(spec, math.fsum(terms), tuple(terms), tuple(steps))


def reverse_directed_information(
    source_obj: Source,
    y: str,
    x: str,
    conditions: Sequence[tuple[str, int]] = (),
    steps: Sequence[int] | None = None,
    engine: str = "enumerate",
    budget: Budget = DEFAULT_BUDGET,
) -> MeasureResult:
    """Backward flow: sum over i of I(x(i); y^{i-1} | x^{i-1}, conditions)."""
    r = directed_information(source_obj, y, x, 1, conditions, steps, engine, budget)
    return MeasureResult(
        f"RDI(0*{y} -> {x}{_fmt_conds(conditions)})", r.value_bits, r.per_step_terms, r.steps
    )


# ---- in-the-loop rate and its decompositions -------------------------------------


def _itl_conditions(output: str, side: str | None):
    conds = [(output, 1)]
    if side is not None:
        conds.append((side, 0))
    return conds


def itl_terms(
    source_obj: Source,
    message: str = "w",
    output: str = "y",
    side: str | None = None,
    engine: str = "enumerate",
    budget: Budget = DEFAULT_BUDGET,
) -> MeasureResult:
    """Per-step H(w(k) | w^{k-1}, y^{k-1}, p^k); the value is their sum."""
    names = [message, output] + ([side] if side else [])
    _signals_of(source_obj, names)
    steps = _default_steps(source_obj, message)
    conds = _itl_conditions(output, side)
    spec = f"ITL({message} | {output}{', ' + side if side else ''})"
    if isinstance(source_obj, LoopSystem) and engine != "enumerate":
        try:
            if engine == "tree":
                raise BudgetExceeded(0, 0)
            table = _table_for(source_obj, names, budget)
        except BudgetExceeded:
            terms = _tree_cond_entropies(source_obj, conds + [(message, 0)], steps, budget)
            return MeasureResult(spec, math.fsum(terms), tuple(terms), tuple(steps))
    else:
        table = _table_for(source_obj, names, budget)
    terms = []
    for k in steps:
        cond = _history(table, message, k - 1)
        for n, lag in conds:
            cond += _history(table, n, k - lag)
        terms.append(cond_entropy(table, [(message, k)], cond))
    return MeasureResult(spec, math.fsum(terms), tuple(terms), tuple(steps))


def itl_rate(
    source_obj: Source,
    message: str = "w",
    output: str = "y",
    side: str | None = None,
    engine: str = "enumerate",
    budget: Budget = DEFAULT_BUDGET,
) -> MeasureResult:
    """In-the-loop transmission rate in bits per sample."""
    r = itl_terms(source_obj, message, output, side, engine, budget)
    n = len(r.per_step_terms)
    return MeasureResult(r.spec.replace("ITL", "R_ITL"), r.value_bits / n, r.per_step_terms, r.steps)


def _forward_flow(table, message, output, side):
    conds = [(side, 0)] if side else []
    return directed_information(table, message, output, 0, conds)


def _backward_flow(table, message, output, side):
    conds = [(side, 0)] if side else []
    steps = _times(table, message)
    return directed_information(table, output, message, 1, conds, steps)


@dataclass(frozen=True)
class FanoRecord:
    n: int
    r_itl: float
    di: float  # I(w -> y || p), bits over the horizon
    h_w_given_yp: float
    h_e_given_yp: float
    h_w_given_yp_err: float  # 0 by convention when Pr{e=1} = 0
    pr_err: float
    bound_rhs: float
    theorem7_error: float  # n R - (H(w|y,p) + DI)
    identity_error: float  # n R - (H(e|y,p) + H(w|y,p,e=1) Pr{e=1} + DI)
    zero_mass_flag: bool = False

    @property
    def bound_holds(self) -> bool:
        return self.pr_err >= self.bound_rhs - 1e-9

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bound_holds"] = self.bound_holds
        return d


def _hist_all(table, name):
    return [(name, t) for t in _times(table, name)]


def fano_decomposition(
    sys: LoopSystem,
    message: str = "w",
    output: str = "y",
    side: str | None = None,
    indicator: str = "e_n",
    budget: Budget = DEFAULT_BUDGET,
) -> FanoRecord:
    """Every term of the in-the-loop Fano identity and bound on one system."""
    names = [message, output, indicator] + ([side] if side else [])
    table = _table_for(sys, names, budget)
    n = len(_times(table, message))
    itl = itl_terms(table, message, output, side)
    R = itl.value_bits / n
    di = _forward_flow(table, message, output, side).value_bits
    W = _hist_all(table, message)
    YP = _hist_all(table, output) + (_hist_all(table, side) if side else [])
    E = _hist_all(table, indicator)
    h_w = cond_entropy(table, W, YP)
    h_e = cond_entropy(table, E, YP)
    pe_table = table.marginal(E)
    pr_err = math.fsum(p for row, p in zip(pe_table.symbols, pe_table.probs) if row[0] == 1)
    flag = False
    if pr_err > 0.0:
        sub = table.condition({E[0]: 1})
        h_err = cond_entropy(sub, W, YP)
    else:
        h_err, flag = 0.0, True
    size = sys.alphabet_size(message)
    bound = (R - di / n - 1.0 / n) / math.log2(size)
    return FanoRecord(
        n=n,
        r_itl=R,
        di=di,
        h_w_given_yp=h_w,
        h_e_given_yp=h_e,
        h_w_given_yp_err=h_err,
        pr_err=pr_err,
        bound_rhs=bound,
        theorem7_error=n * R - (h_w + di),
        identity_error=n * R - (h_e + h_err * pr_err + di),
        zero_mass_flag=flag,
    )


@dataclass(frozen=True)
class ConservationRecord:
    h_w: float
    backward: float  # I(y_0^{n-1} -> w || p)
    forward: float  # I(w -> y || p)
    h_w_given_yp: float
    n_r_itl: float
    side_leak: float = 0.0  # I(p -> w), zero-delay flow from side information into w

    @property
    def lhs(self) -> float:
        return self.h_w - self.backward

    @property
    def middle(self) -> float:
        return self.forward + self.h_w_given_yp

    @property
    def max_error(self) -> float:
        return max(abs(self.lhs - self.middle), abs(self.middle - self.n_r_itl), abs(self.lhs - self.n_r_itl))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(lhs=self.lhs, middle=self.middle, max_error=self.max_error, leak_error=self.leak_error)
        return d

    @property
    def leak_error(self) -> float:
        """Error of H(w) - backward - I(p -> w) = n R_ITL, which holds on every loop."""
        return self.lhs - self.side_leak - self.n_r_itl


def conservation_extended(
    source_obj: Source,
    message: str = "w",
    output: str = "y",
    side: str | None = None,
    budget: Budget = DEFAULT_BUDGET,
) -> ConservationRecord:
    """H(w) - backward flow, forward flow + H(w|y,p) and n R_ITL side by side."""
    names = [message, output] + ([side] if side else [])
    table = _table_for(source_obj, names, budget)
    W = _hist_all(table, message)
    YP = _hist_all(table, output) + (_hist_all(table, side) if side else [])
    return ConservationRecord(
        h_w=entropy(table, W),
        backward=_backward_flow(table, message, output, side).value_bits,
        forward=_forward_flow(table, message, output, side).value_bits,
        h_w_given_yp=cond_entropy(table, W, YP),
        n_r_itl=itl_terms(table, message, output, side).value_bits,
        side_leak=(
            directed_information(table, side, message, 0, (), _times(table, message)).value_bits if side else 0.0
        ),
    )


def markov_tv(table: JointTable, A: Sequence[Var], B: Sequence[Var], C: Sequence[Var]) -> float:
    """Largest total-variation distance, over conditioning atoms c, between
    P(A,B|c) and P(A|c)P(B|c).  Zero iff A <-> C <-> B."""
    A, B, C = list(A), list(B), list(C)
    sub = table.marginal(A + B + C)
    cols = {v: i for i, v in enumerate(sub.variables)}
    ia = [cols[v] for v in dict.fromkeys(A)]
    ib = [cols[v] for v in dict.fromkeys(B)]
    ic = [cols[v] for v in dict.fromkeys(C)]

    def groups(idx):
        if not idx:
            return np.zeros(len(sub), dtype=np.int64), 1
        _, inv = _group_rows(sub.symbols[:, idx], [sub.sizes[i] for i in idx])
        return inv, int(inv.max()) + 1

    gc, nc = groups(ic)
    gac, nac = groups(ic + ia)
    gbc, nbc = groups(ic + ib)
    p = sub.probs
    pc = grouped_fsum(gc, p, nc)[gc]
    pac = grouped_fsum(gac, p, nac)[gac]
    pbc = grouped_fsum(gbc, p, nbc)[gbc]
    joint = p / pc
    prod = (pac / pc) * (pbc / pc)
    dev = grouped_fsum(gc, np.abs(joint - prod), nc)
    covered = grouped_fsum(gc, prod, nc)
    tv = 0.5 * (dev + np.maximum(0.0, 1.0 - covered))
    return float(tv.max()) if tv.size else 0.0


@dataclass(frozen=True)
class MasseyRecord:
    forward: float
    backward: float
    mutual: float

    @property
    def error(self) -> float:
        return self.forward + self.backward - self.mutual


def massey_conservation(
    source_obj: Source, x: str, y: str, steps: Sequence[int] | None = None, budget: Budget = DEFAULT_BUDGET
) -> MasseyRecord:
    """I(x->y) + I(0*y -> x) against I(x;y) over a common index range."""
    table = _table_for(source_obj, [x, y], budget)
    if steps is None:
        steps = sorted(set(_times(table, x)) & set(_times(table, y)))
    steps = list(steps)
    sub_x = [(x, t) for t in steps]
    sub_y = [(y, t) for t in steps]
    sub = table.marginal(sub_x + sub_y)
    fwd = directed_information(sub, x, y, 0, (), steps).value_bits
    bwd = directed_information(sub, y, x, 1, (), steps).value_bits
    return MasseyRecord(fwd, bwd, mutual_information(sub, sub_x, sub_y))
