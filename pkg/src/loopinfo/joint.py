"""Exact and sampled probability tables over ``(signal, time)`` samples.

The exogenous process is a product of independent ``(group, step)`` slots.
:func:`enumerate_joint` walks every exogenous atom, simulates the loop
(vectorised over chunks of atoms) and accumulates the pushforward masses of
the requested variables with compensated summation, so the result does not
depend on how the atom space is chunked.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    CausalityViolation,
    DanglingReference,
    MissingSample,
    VariableMissing,
    ZeroMassEvent,
)
from .model import ANY, CallableMap, LoopSystem, eval_map, eval_map_batch

Var = tuple[str, int]

MASS_TOL = 1e-12


@dataclass(frozen=True)
class Budget:
    """Work limits; ``atoms`` for enumeration, ``leaves`` for the belief tree."""

    atoms: int = 2**28
    leaves: int = 2**26
    chunk: int = 2**16


DEFAULT_BUDGET = Budget()


# ---- compensated grouped summation --------------------------------------------


def grouped_fsum(inverse: np.ndarray, weights: np.ndarray, ngroups: int) -> np.ndarray:
    """Per-group sums of ``weights`` with Neumaier compensation.

    The result is independent of the order of elements within each group up
    to the compensated-summation error (a few ulps).
    """
    inverse = np.asarray(inverse, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0:
        return np.zeros(ngroups)
    counts = np.bincount(inverse, minlength=ngroups)
    order = np.argsort(inverse, kind="stable")
    sorted_w = weights[order]
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    out = np.zeros(ngroups)
    big = counts > 64
    if np.any(big):
        for g in np.flatnonzero(big):
            out[g] = math.fsum(sorted_w[starts[g] : starts[g] + counts[g]])
    small = np.flatnonzero(~big & (counts > 0))
    if small.size:
        s = np.zeros(small.size)
        c = np.zeros(small.size)
        cnt = counts[small]
        st = starts[small]
        for r in range(int(cnt.max())):
            live = cnt > r
            x = sorted_w[st[live] + r]
            sl = s[live]
            t = sl + x
            c[live] += np.where(np.abs(sl) >= np.abs(x), (sl - t) + x, (x - t) + sl)
            s[live] = t
        out[small] = s + c
    return out


def _row_keys(symbols: np.ndarray, sizes: Sequence[int]) -> tuple[np.ndarray, int] | None:
    """Mixed-radix integer keys (first column most significant), or None on overflow."""
    total = 1
    for s in sizes:
        total *= int(s)
    if total >= 2**62:
        return None
    keys = np.zeros(symbols.shape[0], dtype=np.int64)
    for j, s in enumerate(sizes):
        keys = keys * int(s) + symbols[:, j].astype(np.int64)
    return keys, total


def _group_rows(symbols: np.ndarray, sizes: Sequence[int]):
    """Unique rows in lexicographic order and the inverse index."""
    if symbols.shape[1] == 0:
        return np.zeros((1 if symbols.shape[0] else 0, 0), dtype=symbols.dtype), np.zeros(
            symbols.shape[0], dtype=np.int64
        )
    rk = _row_keys(symbols, sizes)
    if rk is not None:
        keys, _ = rk
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        return symbols[first], inverse.reshape(-1)
    uniq, inverse = np.unique(symbols, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


# ---- tables --------------------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    kind: str = "exact"  # "exact" | "empirical"
    count: int | None = None
    seed: int | None = None


def _var_name(v: Var) -> str:
    return f"{v[0]}[{v[1]}]"


@dataclass(frozen=True)
class JointTable:
    """Probability table over an ordered tuple of ``(signal, time)`` variables.

    Atoms are stored sorted lexicographically by symbol tuple; zero-mass atoms
    are never stored.
    """

    variables: tuple[Var, ...]
    sizes: tuple[int, ...]
    symbols: np.ndarray
    probs: np.ndarray
    provenance: Provenance = Provenance()
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_rows(cls, variables, sizes, symbols, weights, provenance=Provenance()) -> "JointTable":
        """Aggregate (possibly repeated) rows into a normalised table."""
        variables = tuple((str(n), int(t)) for n, t in variables)
        sizes = tuple(int(s) for s in sizes)
        symbols = np.asarray(symbols, dtype=np.int8).reshape(len(weights), len(variables))
        weights = np.asarray(weights, dtype=np.float64)
        uniq, inverse = _group_rows(symbols, sizes)
        probs = grouped_fsum(inverse, weights, uniq.shape[0])
        keep = probs > 0.0
        uniq, probs = uniq[keep], probs[keep]
        total = math.fsum(probs)
        if total <= 0:
            raise ZeroMassEvent("table has no mass")
        if abs(total - 1.0) > MASS_TOL:
            probs = probs / total
        return cls(variables, sizes, uniq, probs, provenance)

    def __len__(self) -> int:
        return self.probs.shape[0]

    def index(self, var: Var) -> int:
        try:
            return self.variables.index((var[0], int(var[1])))
        except ValueError:
            raise VariableMissing(f"variable {_var_name(var)} not in table") from None

    def _indices(self, vars: Iterable[Var]) -> list[int]:
        idx = []
        for v in vars:
            i = self.index(v)
            if i not in idx:
                idx.append(i)
        return idx

    @property
    def atoms(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(x) for x in row): float(p) for row, p in zip(self.symbols, self.probs)}

    def total(self) -> float:
        return math.fsum(self.probs)

    def marginal(self, vars: Sequence[Var]) -> "JointTable":
        idx = self._indices(vars)
        sub = self.symbols[:, idx]
        sizes = [self.sizes[i] for i in idx]
        uniq, inverse = _group_rows(sub, sizes)
        probs = grouped_fsum(inverse, self.probs, uniq.shape[0])
        keep = probs > 0.0
        return JointTable(
            tuple(self.variables[i] for i in idx), tuple(sizes), uniq[keep], probs[keep], self.provenance
        )

    def condition(self, assignment: Mapping[Var, int]) -> "JointTable":
        mask = np.ones(len(self), dtype=bool)
        for v, val in assignment.items():
            mask &= self.symbols[:, self.index(v)] == int(val)
        mass = math.fsum(self.probs[mask])
        if mass <= 0.0:
            raise ZeroMassEvent(f"conditioning event {dict(assignment)} has zero probability")
        return JointTable(
            self.variables, self.sizes, self.symbols[mask], self.probs[mask] / mass, self.provenance
        )

    def entropy(self, vars: Sequence[Var]) -> float:
        """Joint entropy in bits of the listed variables."""
        idx = tuple(sorted(set(self._indices(vars))))
        hit = self._cache.get(idx)
        if hit is not None:
            return hit
        if not idx:
            h = 0.0
        else:
            sub = self.symbols[:, list(idx)]
            _, inverse = _group_rows(sub, [self.sizes[i] for i in idx])
            p = grouped_fsum(inverse, self.probs, int(inverse.max()) + 1)
            p = p[p > 0.0]
            h = float(-np.sum(p * np.log2(p)))
            h = max(h, 0.0)
        self._cache[idx] = h
        return h

    # ---- export --------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([_var_name(v) for v in self.variables] + ["probability"])
        for row, p in zip(self.symbols, self.probs):
            w.writerow([int(x) for x in row] + [repr(float(p))])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "variables": [_var_name(v) for v in self.variables],
            "provenance": self.provenance.__dict__,
            "atoms": [
                {"symbols": [int(x) for x in row], "probability": float(p)}
                for row, p in zip(self.symbols, self.probs)
            ],
        }
        return json.dumps(doc, indent=1)


def query(table: JointTable, op: str, arg) -> JointTable:
    """``query(t, "marginalize", vars)`` or ``query(t, "condition", {var: value})``."""
    if op == "marginalize":
        return table.marginal(arg)
    if op == "condition":
        return table.condition(arg)
    raise ValueError(f"unknown query {op!r}")


# ---- simulation ----------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """One joint realisation; ``samples[name]`` is indexed from the signal's start."""

    samples: Mapping[str, tuple[int, ...]]
    starts: Mapping[str, int]

    def __getitem__(self, key: Var) -> int:
        name, t = key
        return self.samples[name][t - self.starts[name]]

    def series(self, name: str) -> tuple[int, ...]:
        return self.samples[name]


def _guarded(sys: LoopSystem, name: str, lookup):
    """Runtime causality guard for blocks with unbounded-history callables."""
    try:
        b = sys.block_for(name)
    except Exception:
        return lambda t: lookup

    def make(t):
        def get(sig, tau):
            ok = (
                (sig == b.loop_input and tau <= t - b.delay)
                or (sig == b.exogenous and tau <= t)
                or (sig == b.output and tau < t)
            )
            if not ok:
                raise CausalityViolation(f"block {b.name} read {sig}[{tau}] at t={t}")
            return lookup(sig, tau)

        return get

    return make


def _node_map(sys: LoopSystem, name: str, t: int):
    for b in sys.blocks:
        if b.output == name:
            return b.map_at(t), sys.alphabet_size(name), False
    d = sys.derived_signal(name)
    return d.map, (None if d.mode == ANY else d.alphabet.size), d.mode == ANY


def simulate(sys: LoopSystem, exo_atom: Mapping[Var, int]) -> Trajectory:
    """Scalar reference simulator: one exogenous realisation to one trajectory."""
    vals: dict[Var, int] = {}
    for name in sys.exogenous_names:
        for t in sys.times(name):
            try:
                vals[(name, t)] = int(exo_atom[(name, t)])
            except KeyError:
                raise MissingSample(f"exogenous sample {name}[{t}] missing") from None

    def lookup(name: str, tau: int) -> int:
        try:
            return vals[(name, tau)]
        except KeyError:
            return sys.prologue_value(name, tau)

    anys: dict[str, int] = {}
    for name, t in sys.order:
        m, modulus, is_any = _node_map(sys, name, t)
        get = lookup
        if isinstance(m, CallableMap) and m.window is None:
            get = _guarded(sys, name, lookup)(t)
        if is_any:
            anys[name] = anys.get(name, 0) | int(eval_map(m, get, t, 2**62) != 0)
        else:
            vals[(name, t)] = eval_map(m, get, t, modulus)
    for name, v in anys.items():
        vals[(name, sys.horizon)] = v
    samples = {}
    starts = {}
    for name in [s.name for s in sys.signals] + [d.name for d in sys.derived]:
        starts[name] = sys.start(name)
        samples[name] = tuple(vals[(name, t)] for t in sys.times(name))
    return Trajectory(samples, starts)


def simulate_batch(sys: LoopSystem, exo: Mapping[Var, np.ndarray], size: int) -> dict[Var, np.ndarray]:
    """Vectorised simulation over ``size`` exogenous realisations at once."""
    vals: dict[Var, np.ndarray] = dict(exo)
    prologue_cache: dict[Var, np.ndarray] = {}

    def lookup(name: str, tau: int) -> np.ndarray:
        try:
            return vals[(name, tau)]
        except KeyError:
            pass
        if (name, tau) not in prologue_cache:
            try:
                v = sys.prologue_value(name, tau)
            except DanglingReference:
                raise MissingSample(f"sample {name}[{tau}] missing (engine bug)") from None
            prologue_cache[(name, tau)] = np.full(size, v, dtype=np.int64)
        return prologue_cache[(name, tau)]

    anys: dict[str, np.ndarray] = {}
    for name, t in sys.order:
        m, modulus, is_any = _node_map(sys, name, t)
        get = lookup
        if isinstance(m, CallableMap) and m.window is None:
            get = _guarded(sys, name, lookup)(t)
        out = eval_map_batch(m, get, t, size, modulus)
        if is_any:
            prev = anys.get(name, np.zeros(size, dtype=np.int64))
            anys[name] = prev | (out != 0).astype(np.int64)
        else:
            vals[(name, t)] = out
    for name, v in anys.items():
        vals[(name, sys.horizon)] = v
    return vals


# ---- exogenous atom space --------------------------------------------------------


@dataclass(frozen=True)
class _Slot:
    group: int
    t: int
    keys: np.ndarray  # (support, arity)
    probs: np.ndarray
    iid: bool


def _slots(sys: LoopSystem, full_support: bool = False) -> list[_Slot]:
    slots = []
    for gi, g in enumerate(sys.exogenous.groups):
        start = sys.start(g.signals[0])
        for t in range(start, sys.horizon + 1):
            iid = t not in g.steps
            pmf = g.pmf_at(t)
            if full_support and iid:
                grid = np.indices([sys.alphabet_size(n) for n in g.signals]).reshape(len(g.signals), -1).T
                keys = grid.astype(np.int64)
                probs = np.array([pmf.get(tuple(int(x) for x in k), 0.0) for k in keys])
            else:
                keys = np.array(list(pmf.keys()), dtype=np.int64).reshape(len(pmf), len(g.signals))
                probs = np.array(list(pmf.values()), dtype=np.float64)
            slots.append(_Slot(gi, t, keys, probs, iid))
    return slots


def atom_count(sys: LoopSystem) -> int:
    """Number of positive-mass exogenous atoms over the horizon."""
    return math.prod(len(s.probs) for s in _slots(sys))


def _decode(sys: LoopSystem, slots: list[_Slot], lo: int, hi: int):
    idx = np.arange(lo, hi, dtype=np.int64)
    sel = [None] * len(slots)
    for j in range(len(slots) - 1, -1, -1):
        n = len(slots[j].probs)
        sel[j] = idx % n
        idx //= n
    weights = np.ones(hi - lo)
    exo: dict[Var, np.ndarray] = {}
    for j, slot in enumerate(slots):
        weights = weights * slot.probs[sel[j]]
        g = sys.exogenous.groups[slot.group]
        for pos, name in enumerate(g.signals):
            exo[(name, slot.t)] = slot.keys[sel[j], pos]
    return exo, weights, sel


def _resolve_vars(sys: LoopSystem, variables: Sequence[Var] | None) -> list[Var]:
    if variables is None:
        return sys.variables()
    out = []
    for name, t in variables:
        if not sys.has(name) or t not in sys.times(name):
            raise VariableMissing(f"{name}[{t}] is not a sample of the system")
        out.append((name, int(t)))
    return out


def enumerate_joint(
    sys: LoopSystem,
    variables: Sequence[Var] | None = None,
    budget: Budget = DEFAULT_BUDGET,
    chunk: int | None = None,
) -> JointTable:
    """Exact pushforward law of ``variables`` (default: every sample)."""
    vars_ = _resolve_vars(sys, variables)
    slots = _slots(sys)
    total = math.prod(len(s.probs) for s in slots)
    if total > budget.atoms:
        raise BudgetExceeded(total, budget.atoms, "exogenous atoms")
    chunk = chunk or budget.chunk
    sizes = [sys.alphabet_size(n) for n, _ in vars_]
    rows, weights = [], []
    for lo in range(0, total, chunk):
        hi = min(total, lo + chunk)
        exo, w, _ = _decode(sys, slots, lo, hi)
        vals = simulate_batch(sys, exo, hi - lo)
        sym = np.stack([vals[v] for v in vars_], axis=1) if vars_ else np.zeros((hi - lo, 0))
        sym = sym.astype(np.int8)
        if total > chunk:
            # reduce per chunk, keeping compensated partial sums
            uniq, inverse = _group_rows(sym, sizes)
            rows.append(uniq)
            weights.append(grouped_fsum(inverse, w, uniq.shape[0]))
        else:
            rows.append(sym)
            weights.append(w)
    return JointTable.from_rows(vars_, sizes, np.concatenate(rows), np.concatenate(weights))


def sample(
    sys: LoopSystem,
    count: int,
    seed: int,
    variables: Sequence[Var] | None = None,
) -> JointTable:
    """Empirical table of ``count`` i.i.d. trajectories from a seeded generator."""
    if count < 1:
        raise ValueError("count must be at least 1")
    vars_ = _resolve_vars(sys, variables)
    rng = np.random.default_rng(seed)
    slots = _slots(sys)
    exo: dict[Var, np.ndarray] = {}
    for slot in slots:
        pick = rng.choice(len(slot.probs), size=count, p=slot.probs / slot.probs.sum())
        g = sys.exogenous.groups[slot.group]
        for pos, name in enumerate(g.signals):
            exo[(name, slot.t)] = slot.keys[pick, pos]
    vals = simulate_batch(sys, exo, count)
    sizes = [sys.alphabet_size(n) for n, _ in vars_]
    sym = np.stack([vals[v] for v in vars_], axis=1).astype(np.int8)
    uniq, inverse = _group_rows(sym, sizes)
    counts = np.bincount(inverse, minlength=uniq.shape[0])
    probs = counts / count
    return JointTable(
        tuple(vars_), tuple(sizes), uniq, probs, Provenance("empirical", count, seed)
    )


# ---- factorised re-weighting ------------------------------------------------------


@dataclass(frozen=True)
class FactorizedJoint:
    """Pushforward grouped by (projected row, per-group symbol counts).

    Re-weighting under new i.i.d. group pmfs only needs the counts, so a
    parameter sweep simulates once.
    """

    variables: tuple[Var, ...]
    sizes: tuple[int, ...]
    symbols: np.ndarray  # (rows, V)
    counts: np.ndarray  # (rows, total support columns)
    fixed: np.ndarray  # (rows,) product of per-step override masses, summed
    columns: tuple[tuple[int, tuple[int, ...]], ...]  # (group index, symbol tuple) per count column

    def reweight(self, pmfs: Mapping[int, Mapping]) -> JointTable:
        """``pmfs`` maps group index to its new per-step pmf (others keep zero weight)."""
        logw = np.zeros(self.symbols.shape[0])
        weight = self.fixed.copy()
        for c, (gi, key) in enumerate(self.columns):
            pmf = pmfs[gi]
            p = float(pmf.get(key, pmf.get(key[0], 0.0) if len(key) == 1 else 0.0))
            col = self.counts[:, c]
            if p == 0.0:
                weight = np.where(col > 0, 0.0, weight)
            else:
                logw += col * math.log(p)
        weight = weight * np.exp(logw)
        return JointTable.from_rows(self.variables, self.sizes, self.symbols, weight)


def enumerate_factorized(
    sys: LoopSystem, variables: Sequence[Var], budget: Budget = DEFAULT_BUDGET
) -> FactorizedJoint:
    vars_ = _resolve_vars(sys, variables)
    slots = _slots(sys, full_support=True)
    total = math.prod(len(s.probs) for s in slots)
    if total > budget.atoms:
        raise BudgetExceeded(total, budget.atoms, "exogenous atoms")
    columns = []
    col_of = {}
    for gi, g in enumerate(sys.exogenous.groups):
        if g.pmf is None:
            continue
        for key in np.indices([sys.alphabet_size(n) for n in g.signals]).reshape(len(g.signals), -1).T:
            k = tuple(int(x) for x in key)
            col_of[(gi, k)] = len(columns)
            columns.append((gi, k))
    sizes = [sys.alphabet_size(n) for n, _ in vars_]
    exo, _, sel = _decode(sys, slots, 0, total)
    vals = simulate_batch(sys, exo, total)
    sym = np.stack([vals[v] for v in vars_], axis=1).astype(np.int8)
    counts = np.zeros((total, len(columns)), dtype=np.int16)
    fixed = np.ones(total)
    for j, slot in enumerate(slots):
        if slot.iid:
            for s_idx, key in enumerate(slot.keys):
                c = col_of[(slot.group, tuple(int(x) for x in key))]
                counts[:, c] += (sel[j] == s_idx).astype(np.int16)
        else:
            fixed = fixed * slot.probs[sel[j]]
    keep = fixed > 0
    sym, counts, fixed = sym[keep], counts[keep], fixed[keep]
    combo = np.concatenate([sym.astype(np.int64), counts.astype(np.int64)], axis=1)
    uniq, inverse = np.unique(combo, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    agg = grouped_fsum(inverse, fixed, uniq.shape[0])
    return FactorizedJoint(
        tuple(vars_),
        tuple(sizes),
        uniq[:, : len(vars_)].astype(np.int8),
        uniq[:, len(vars_) :],
        agg,
        tuple(columns),
    )
