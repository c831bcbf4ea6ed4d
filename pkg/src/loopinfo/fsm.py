"""Finite-state reformulation of a loop and exact observation-prefix entropies.

When every map reads a bounded window and the exogenous groups are i.i.d.
across time, the tuple of lagged samples the maps reference is a Markov
state.  :func:`compile_fsm` builds the transition kernel jointly over
(next state, observation) and :func:`tree_chain_entropies` runs the forward
algorithm down the observation-prefix tree, merging prefixes whose posterior
beliefs coincide (the per-step entropies only depend on the belief and the
prefix mass).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, ModelError, NonIIDExogenous, UnboundedWindow, ZeroMassEvent
from .joint import DEFAULT_BUDGET, Budget, enumerate_joint, grouped_fsum
from .model import ANY, LoopSystem, eval_map_batch, map_refs

Component = tuple[str, int]  # (signal, lag): component value at step i is signal(i - lag)

DRIFT_TOL = 1e-6
MERGE_DIGITS = 12


@dataclass(frozen=True)
class MarkovModel:
    """Exact hidden-state model of a loop with per-step observation tuples.

    ``kernel[o, s, s2]`` is the probability of moving from state ``s`` to
    ``s2`` while emitting observation index ``o`` (components mixed-radix,
    first component most significant).  Steps ``first..t0`` are handled by
    direct enumeration (``prefix``), later steps by the kernel.
    """

    system: LoopSystem
    observables: tuple[Component, ...]
    obs_sizes: tuple[int, ...]
    first: int
    t0: int
    slots: tuple[tuple[str, int], ...]  # state coordinates: (signal, j) holds signal(t - j)
    states: np.ndarray  # (S, len(slots))
    kernel: np.ndarray  # (O, S, S)

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def n_obs(self) -> int:
        return self.kernel.shape[0]


def _refs_of(sys: LoopSystem):
    """Yield (target, refs) for every computed signal's base map."""
    for b in sys.blocks:
        yield b.output, b, map_refs(b.map)
    for d in sys.derived:
        yield d.name, d, map_refs(d.map)


def _needed_derived(sys: LoopSystem, observables) -> set[str]:
    derived = {d.name: d for d in sys.derived}
    need, stack = set(), [n for n, _ in observables if n in derived]
    while stack:
        n = stack.pop()
        if n in need:
            continue
        need.add(n)
        if derived[n].mode == ANY:
            raise ModelError(f"'any'-mode indicator {n!r} cannot be a per-step observable")
        stack.extend(r for r, _ in map_refs(derived[n].map) if r in derived)
    return need


def compile_fsm(
    sys: LoopSystem,
    observables,
    first: int = 1,
    budget: Budget = DEFAULT_BUDGET,
) -> MarkovModel:
    """Compile ``sys`` into a :class:`MarkovModel` observing ``observables``.

    Raises UnboundedWindow if a map declares no finite window and
    NonIIDExogenous if a coupling group has no time-invariant pmf.
    """
    observables = tuple((str(n), int(l)) for n, l in observables)
    if not observables:
        raise ModelError("at least one observable component is required")
    for n, l in observables:
        if not sys.has(n):
            raise ModelError(f"unknown observable signal {n!r}")
        if l < 0:
            raise ModelError("observable lags must be non-negative")
    for g in sys.exogenous.groups:
        if not g.iid:
            raise NonIIDExogenous(f"group {g.signals} has no time-invariant pmf")
    derived_needed = _needed_derived(sys, observables)

    depth: dict[str, int] = {}
    override_times = [0]
    for target, owner, refs in _refs_of(sys):
        if target in {d.name for d in sys.derived} and target not in derived_needed:
            continue
        maps = [owner.map] + list(getattr(owner, "overrides", {}).values())
        for m in maps:
            r = map_refs(m)
            if r is None:
                raise UnboundedWindow(f"{target}: map reads an unbounded history")
            for name, lag in r:
                depth[name] = max(depth.get(name, 0), lag)
        override_times += list(getattr(owner, "overrides", {}).keys())
    for name, lag in observables:
        depth[name] = max(depth.get(name, 0), lag)
    for g in sys.exogenous.groups:
        override_times += list(g.steps.keys())

    computed = [b.output for b in sys.blocks] + [d.name for d in sys.derived if d.name in derived_needed]
    starts = {n: sys.start(n) for n in list(sys.exogenous_names) + computed}
    t_h = max(
        [max(override_times), first - 1, 1]
        + [s for s in starts.values()]
        + [sys.start(n) + l - 1 for n, l in observables]
    )
    slots = tuple((n, j) for n in sorted(depth) for j in range(depth[n]))

    # within-step evaluation order at a homogeneous step
    ref_t = t_h + 1
    step_order = [n for n, t in sys.with_horizon(ref_t).order if t == ref_t and n in computed]

    obs_sizes = tuple(sys.alphabet_size(n) for n, _ in observables)
    draws = _draw_table(sys)

    # initial states from a truncated enumeration
    t0 = t_h
    init_vars = [(n, t0 - j) for n, j in slots if t0 - j >= starts[n]]
    init = enumerate_joint(sys.with_horizon(t0), init_vars, budget)
    init_states = _state_rows(sys, slots, init_vars, init.symbols, t0, starts)

    def step(states: np.ndarray):
        """All (state, draw) successors: next-state rows, observation index, prob."""
        S, M = states.shape[0], draws["prob"].size
        size = S * M
        cur: dict[str, np.ndarray] = {}
        for name, arr in draws["values"].items():
            cur[name] = np.tile(arr, S)
        col = {sl: np.repeat(states[:, k], M) for k, sl in enumerate(slots)}

        def lookup(name: str, tau: int):
            lag = ref_t - tau
            if lag == 0:
                return cur[name]
            return col[(name, lag - 1)]

        for name in step_order:
            if name in {d.name for d in sys.derived}:
                d = sys.derived_signal(name)
                cur[name] = eval_map_batch(d.map, lookup, ref_t, size, d.alphabet.size)
            else:
                b = sys.block_for(name)
                cur[name] = eval_map_batch(b.map, lookup, ref_t, size, sys.alphabet_size(name))
        obs = np.zeros(size, dtype=np.int64)
        for (name, lag), s in zip(observables, obs_sizes):
            obs = obs * s + (cur[name] if lag == 0 else col[(name, lag - 1)])
        nxt = np.zeros((size, len(slots)), dtype=np.int64)
        for k, (name, j) in enumerate(slots):
            nxt[:, k] = cur[name] if j == 0 else col[(name, j - 1)]
        return nxt, obs, np.tile(draws["prob"], S)

    # reachability
    known: dict[tuple, int] = {}
    rows: list[tuple] = []
    frontier = []
    for r in init_states:
        key = tuple(int(x) for x in r)
        if key not in known:
            known[key] = len(rows)
            rows.append(key)
            frontier.append(key)
    transitions = []
    while frontier:
        arr = np.array(frontier, dtype=np.int64).reshape(len(frontier), len(slots))
        src_idx = np.array([known[k] for k in frontier])
        nxt, obs, prob = step(arr)
        M = draws["prob"].size
        frontier = []
        dst = np.empty(nxt.shape[0], dtype=np.int64)
        for i, r in enumerate(map(tuple, nxt.tolist())):
            idx = known.get(r)
            if idx is None:
                idx = known[r] = len(rows)
                rows.append(r)
                frontier.append(r)
            dst[i] = idx
        transitions.append((np.repeat(src_idx, M), dst, obs, prob))
    S = len(rows)
    O = math.prod(obs_sizes)
    if O * S * S > budget.leaves * 4:
        raise BudgetExceeded(O * S * S, budget.leaves * 4, "kernel entries")
    kernel = np.zeros((O, S, S))
    for src, dst, obs, prob in transitions:
        np.add.at(kernel, (obs, src, dst), prob)
    sums = kernel.sum(axis=(0, 2))
    if np.max(np.abs(sums - 1.0)) > 1e-12:
        raise ModelError("kernel rows do not sum to one")
    states = np.array(rows, dtype=np.int64).reshape(S, len(slots))
    return MarkovModel(sys, observables, obs_sizes, first, t0, slots, states, kernel)


def _draw_table(sys: LoopSystem):
    """All joint exogenous draws of one homogeneous step with their masses."""
    values: dict[str, np.ndarray] = {}
    prob = np.ones(1)
    for g in sys.exogenous.groups:
        keys = np.array(list(g.pmf.keys()), dtype=np.int64)
        p = np.array(list(g.pmf.values()))
        K = len(p)
        values = {n: np.repeat(v, K) for n, v in values.items()}
        reps = prob.size
        for pos, n in enumerate(g.signals):
            values[n] = np.tile(keys[:, pos], reps)
        prob = np.repeat(prob, K) * np.tile(p, reps)
    return {"values": values, "prob": prob}


def _value_or_fill(sys, name, tau, starts):
    if tau >= starts[name]:
        return None
    try:
        return sys.prologue_value(name, tau)
    except Exception:
        return 0


def _state_rows(sys, slots, vars_, symbols, t0, starts) -> np.ndarray:
    out = np.zeros((symbols.shape[0], len(slots)), dtype=np.int64)
    pos = {v: i for i, v in enumerate(vars_)}
    for k, (name, j) in enumerate(slots):
        tau = t0 - j
        if (name, tau) in pos:
            out[:, k] = symbols[:, pos[(name, tau)]]
        else:
            out[:, k] = _value_or_fill(sys, name, tau, starts)
    return out


def _prefix_entropies(p: np.ndarray, sizes) -> np.ndarray:
    """Per-row entropies of the marginals over component prefixes 1..C.

    ``p`` has shape (N, O) with rows summing to one.
    """
    N = p.shape[0]
    full = p.reshape((N,) + tuple(sizes))
    out = np.zeros((N, len(sizes)))
    for c in range(len(sizes)):
        marg = full.reshape(N, math.prod(sizes[: c + 1]), -1).sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(marg > 0, -marg * np.log2(np.where(marg > 0, marg, 1.0)), 0.0)
        out[:, c] = terms.sum(axis=1)
    return out


def _merge(beliefs: np.ndarray, mass: np.ndarray):
    key = np.round(beliefs, MERGE_DIGITS)
    uniq, first_idx, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    m = grouped_fsum(inverse, mass, uniq.shape[0])
    return beliefs[first_idx], m


def tree_chain_entropies(model: MarkovModel, n: int, budget: Budget = DEFAULT_BUDGET) -> np.ndarray:
    """``H[i - first][c] = H(o_c(i) | o^{i-1}, o_{<c}(i))`` in bits for i = first..n.

    Early steps come from an exact enumeration; later steps from the forward
    algorithm over the (merged) observation-prefix tree.
    """
    sys = model.system
    first = model.first
    if n < first:
        raise ModelError(f"horizon {n} precedes the first observed step {first}")
    C = len(model.observables)
    t0 = min(model.t0, n)
    H = np.zeros((n - first + 1, C))

    # ---- enumerated prefix ---------------------------------------------------
    base = sys.with_horizon(t0) if sys.horizon != t0 else sys
    starts = {nm: base.start(nm) for nm, _ in model.observables}
    obs_vars = []  # per step, per component: variable or None
    for i in range(first, t0 + 1):
        obs_vars.append([(nm, i - l) if i - l >= starts[nm] else None for nm, l in model.observables])
    flat = sorted({v for row in obs_vars for v in row if v is not None})
    state_starts = {nm: base.start(nm) for nm, _ in model.slots}
    state_vars = [(nm, t0 - j) for nm, j in model.slots if t0 - j >= state_starts[nm]]
    need = sorted(set(flat) | (set(state_vars) if t0 < n else set()))
    table = enumerate_joint(base, need, budget)
    hist: list = []
    for k, row in enumerate(obs_vars):
        for c, v in enumerate(row):
            h_prev = table.entropy(hist)
            if v is not None:
                hist.append(v)
            H[k, c] = table.entropy(hist) - h_prev
    if t0 == n:
        return H

    # initial beliefs: group by the observation prefix
    index = {tuple(int(x) for x in r): i for i, r in enumerate(model.states)}
    pos = {v: i for i, v in enumerate(table.variables)}
    st = np.zeros((len(table), len(model.slots)), dtype=np.int64)
    for k, (nm, j) in enumerate(model.slots):
        tau = t0 - j
        if (nm, tau) in pos:
            st[:, k] = table.symbols[:, pos[(nm, tau)]]
        else:
            st[:, k] = _value_or_fill(base, nm, tau, state_starts)
    sidx = np.array([index[tuple(r)] for r in st.tolist()], dtype=np.int64)
    ocols = [pos[v] for v in flat]
    okey = table.symbols[:, ocols] if ocols else np.zeros((len(table), 0), dtype=np.int8)
    uniq, inverse = np.unique(okey, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    S = model.n_states
    B = np.zeros((uniq.shape[0], S))
    np.add.at(B, (inverse, sidx), table.probs)
    mass = B.sum(axis=1)
    B = B / mass[:, None]
    B, mass = _merge(B, mass)

    K = model.kernel  # (O, S, S)
    O = model.n_obs
    Kflat = np.transpose(K, (1, 0, 2)).reshape(S, O * S)
    for i in range(t0 + 1, n + 1):
        N = B.shape[0]
        if N * S * O > budget.leaves:
            raise BudgetExceeded(N * S * O, budget.leaves, "tree frontier entries")
        child = (B @ Kflat).reshape(N, O, S)
        pobs = child.sum(axis=2)
        drift = np.max(np.abs(pobs.sum(axis=1) - 1.0))
        if drift > DRIFT_TOL:
            raise ModelError(f"belief drift {drift:.3g} exceeds {DRIFT_TOL}")
        hrow = _prefix_entropies(pobs, model.obs_sizes)
        cum = np.array([math.fsum(mass * hrow[:, c]) for c in range(C)])
        H[i - first, 0] = cum[0]
        H[i - first, 1:] = np.diff(cum)
        cm = (mass[:, None] * pobs).reshape(-1)
        keep = cm > 0.0
        if not np.any(keep):
            raise ZeroMassEvent("all observation branches have zero mass")
        nb = child.reshape(N * O, S)[keep]
        nb = nb / nb.sum(axis=1, keepdims=True)
        B, mass = _merge(nb, cm[keep])
    return H


def chain_entropy(model: MarkovModel, n: int, budget: Budget = DEFAULT_BUDGET) -> float:
    """Joint entropy of the observation sequence over steps ``first..n``."""
    return math.fsum(tree_chain_entropies(model, n, budget).reshape(-1))
