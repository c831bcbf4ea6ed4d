"""Slow reference implementations used as test oracles.

Nothing here touches the package's engines: trajectories are computed by a
fixed-point pass over plain dicts and every information quantity is summed
directly from its definition.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict

from loopinfo import dsl
from loopinfo.model import ANY, LookupTable


class _Missing(Exception):
    pass


def _eval(m, get, t, modulus):
    if isinstance(m, LookupTable):
        idx = 0
        for (name, lag), size in zip(m.inputs, m.sizes):
            idx = idx * size + get(name, t - lag)
        return m.table[idx] % modulus
    return dsl.evaluate(m, get, t, modulus)


def trajectory(sys, exo: dict) -> dict:
    """All samples of one realisation, computed without a dependency order."""
    vals = dict(exo)
    decl = {s.name: s for s in sys.signals}

    def get(name, tau):
        if (name, tau) in vals:
            return vals[(name, tau)]
        if name in decl and tau in decl[name].prologue:
            return decl[name].prologue[tau]
        raise _Missing

    pending = [(b, t) for b in sys.blocks for t in sys.times(b.output)]
    while pending:
        left = []
        for b, t in pending:
            try:
                vals[(b.output, t)] = _eval(b.map_at(t), get, t, decl[b.output].size)
            except _Missing:
                left.append((b, t))
        if len(left) == len(pending):
            raise AssertionError("oracle could not resolve the loop")
        pending = left
    for d in sys.derived:
        size = d.alphabet.size
        if d.mode == ANY:
            hit = any(_eval(d.map, get, t, None) != 0 for t in range(d.start, sys.horizon + 1))
            vals[(d.name, sys.horizon)] = int(hit)
        else:
            for t in range(d.start, sys.horizon + 1):
                vals[(d.name, t)] = _eval(d.map, get, t, size)
    return vals


def joint(sys, names=None) -> tuple[list, dict]:
    """(variables, {symbol tuple: probability}) by brute force."""
    slots = []
    for g in sys.exogenous.groups:
        start = sys.start(g.signals[0])
        for t in range(start, sys.horizon + 1):
            slots.append((g.signals, t, list(g.pmf_at(t).items())))
    variables = sys.variables(None if names is None else list(dict.fromkeys(names)))
    dist = defaultdict(float)
    for combo in itertools.product(*[s[2] for s in slots]):
        exo, w = {}, 1.0
        for (sigs, t, _), (key, p) in zip(slots, combo):
            w *= p
            for n, v in zip(sigs, key):
                exo[(n, t)] = v
        if w == 0.0:
            continue
        vals = trajectory(sys, exo)
        dist[tuple(vals[v] for v in variables)] += w
    return variables, dict(dist)


class Dist:
    """Entropy and information helpers over a brute-force distribution."""

    def __init__(self, variables, probs):
        self.variables = list(variables)
        self.probs = probs
        self.pos = {v: i for i, v in enumerate(self.variables)}

    @classmethod
    def of(cls, sys, names=None):
        return cls(*joint(sys, names))

    def marginal(self, vs) -> dict:
        out = defaultdict(float)
        for atom, p in self.probs.items():
            out[tuple(atom[self.pos[v]] for v in vs)] += p
        return out

    def H(self, vs, given=()) -> float:
        def h(xs):
            if not xs:
                return 0.0
            return -math.fsum(p * math.log2(p) for p in self.marginal(list(xs)).values() if p > 0)

        return h(list(vs) + list(given)) - h(list(given))

    def I(self, A, B, C=()) -> float:
        A, B, C = list(A), list(B), list(C)
        return self.H(A, C) - self.H(A, B + C)

    def hist(self, name, upto, frm=None) -> list:
        ts = sorted(t for n, t in self.variables if n == name)
        return [(name, t) for t in ts if t <= upto and (frm is None or t >= frm)]

    def DI(self, src, dst, delay=0, conds=(), steps=None) -> float:
        """sum_i I(dst(i); src^{i-delay} | dst^{<i}, cond^{<= i-lag})."""
        srcs = [src] if isinstance(src, str) else list(src)
        if steps is None:
            steps = [t for n, t in self.variables if n == dst and t >= 1]
        total = []
        for i in steps:
            xs = [v for s in srcs for v in self.hist(s, i - delay)]
            if not xs:
                continue
            c = self.hist(dst, i - 1) + [v for n, lag in conds for v in self.hist(n, i - lag)]
            total.append(self.I([(dst, i)], xs, c))
        return math.fsum(total)


def binary_entropy(p: float) -> float:
    return 0.0 if p in (0.0, 1.0) else -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def example1_path(encoder: str, q: list[int], r: list[int]) -> dict:
    """Hand-coded Example 1 recursion; q and r are indexed from 0."""
    n = len(q) - 1
    y = [r[0] if encoder == "E1" else 1]
    x = [y[0]]
    w, v = [None], [None]
    for k in range(1, n + 1):
        prev = y[k - 1] % 2
        w.append(q[k] if q[k - 1] == prev else prev)
        if encoder == "E1":
            x.append(r[k] if w[k] == x[k - 1] % 2 else r[k] + 2)
        else:
            x.append(w[k])
        y.append(x[k])
        if encoder == "E1":
            v.append(prev if y[k] <= 1 else prev ^ 1)
        else:
            v.append(y[k])
    return {"w": w, "x": x, "y": y, "v": v}
