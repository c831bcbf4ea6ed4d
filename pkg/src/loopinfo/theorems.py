"""Numerical verification of the closed-loop information inequalities.

Three loop shapes are recognised by their signal names:

* four-block loop ``u -S1(r)-> e -S2(p)-> x -S3(s)-> y -S4(q)-> u``;
* in-the-loop coding loop ``w -E(r)-> x -C(s)-> y -D(p)-> v -S(q)-> w``
  (side information ``p`` and the other exogenous inputs are optional);
* two-block loop ``u -S1(r)-> y -S2(q)-> u`` with a deterministic ``y(0)``.

:func:`check` evaluates every side of a claim exactly and classifies the
outcome.  :func:`generate` builds seeded random loops of each shape and
:func:`sweep` runs checks over many of them.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ModelError
from .joint import DEFAULT_BUDGET, Budget, JointTable, enumerate_joint
from .measures import (
    conservation_extended,
    directed_information,
    fano_decomposition,
    markov_tv,
    massey_conservation,
    mutual_information,
)
from .model import (
    ANY,
    EXOGENOUS,
    Block,
    DerivedSignal,
    ExoGroup,
    ExogenousSpec,
    LookupTable,
    LoopSystem,
    SignalDecl,
    build_system,
    check_independence_pattern,
)

TOL = 1e-9
STRICT = 1e-6

HOLDS = "holds"
EQUALITY = "equality"
VIOLATED = "violated"
UNMET = "hypotheses-unmet"

FOUR_BLOCK = ("e", "x", "y", "u")
FOUR_EXO = ("r", "p", "s", "q")


# ---- reports -----------------------------------------------------------------------


@dataclass(frozen=True)
class Claim:
    """One asserted relation.  ``gap`` is oriented so that the claim holds iff
    ``gap >= -tol`` (inequality) or ``|gap| <= tol`` (equality)."""

    label: str
    kind: str  # "ge" | "eq"
    lhs: float
    rhs: float
    requires: tuple[str, ...] = ()
    asserted: bool = True

    @property
    def gap(self) -> float:
        return self.lhs - self.rhs

    def ok(self, tol: float) -> bool:
        return abs(self.gap) <= tol if self.kind == "eq" else self.gap >= -tol


@dataclass
class CheckReport:
    theorem: str
    hypotheses: dict[str, bool]
    claims: list[Claim]
    terms: dict[str, float] = field(default_factory=dict)
    tolerance: float = TOL
    notes: list[str] = field(default_factory=list)
    main: str | None = None  # label of the headline claim

    @property
    def main_claim(self) -> Claim:
        if self.main is not None:
            for c in self.claims:
                if c.label == self.main:
                    return c
        return self.claims[0]

    @property
    def lhs(self) -> float:
        return self.main_claim.lhs

    @property
    def rhs(self) -> float:
        return self.main_claim.rhs

    @property
    def gap(self) -> float:
        return self.main_claim.gap

    @property
    def violations(self) -> list[Claim]:
        return [c for c in self.claims if c.asserted and not c.ok(self.tolerance)]

    @property
    def verdict(self) -> str:
        if self.violations:
            return VIOLATED
        m = self.main_claim
        if not m.asserted:
            return UNMET
        if abs(m.gap) <= self.tolerance:
            return EQUALITY
        return HOLDS

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "verdict": self.verdict,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "gap": self.gap,
            "tolerance": self.tolerance,
            "hypotheses": dict(self.hypotheses),
            "claims": [
                dict(asdict(c), gap=c.gap, ok=c.ok(self.tolerance)) for c in self.claims
            ],
            "terms": dict(self.terms),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _claim(label, kind, lhs, rhs, hyps: dict[str, bool], requires=()) -> Claim:
    requires = tuple(requires)
    return Claim(label, kind, float(lhs), float(rhs), requires, all(hyps[h] for h in requires))


# ---- helpers ------------------------------------------------------------------------


def _require(sys: LoopSystem, names: Iterable[str], what: str) -> None:
    missing = [n for n in names if not sys.has(n)]
    if missing:
        raise ModelError(f"{what} needs signals {missing}, absent from the system")


def _hyp(sys: LoopSystem, pattern: str) -> bool:
    return check_independence_pattern(sys, pattern).holds


def _all(table: JointTable, *names: str) -> list[tuple[str, int]]:
    return [(n, t) for n in names for t in sorted(t for m, t in table.variables if m == n)]


def _delay(sys: LoopSystem, *outputs: str) -> int:
    return sum(sys.block_for(o).delay for o in outputs)


def _four_block_table(sys: LoopSystem, budget: Budget) -> JointTable:
    _require(sys, FOUR_BLOCK + FOUR_EXO, "this check")
    return enumerate_joint(sys, sys.variables(list(FOUR_BLOCK + FOUR_EXO)), budget)


def _di(table, src, dst, delay, conds=()):
    steps = sorted(t for n, t in table.variables if n == dst and t >= 1)
    return directed_information(table, src, dst, delay, conds, steps).value_bits


def _four_block_hypotheses(sys: LoopSystem) -> dict[str, bool]:
    pats = {
        "s ⊥ (p,q,r)": "s ⊥ (p,q,r)",
        "r ⊥ (p,q)": "r ⊥ (p,q)",
        "(q,s) ⊥ (r,p)": "(q,s) ⊥ (r,p)",
        "q ⊥ s": "q ⊥ s",
        "(p,s) ⊥ (r,q)": "(p,s) ⊥ (r,q)",
        "p ⊥ s": "p ⊥ s",
        "q ⊥ (r,p,s)": "q ⊥ (r,p,s)",
        "r ⊥ p ⊥ q ⊥ s": "r ⊥ p ⊥ q ⊥ s",
        "q+ ↔ q- ↔ s-": "q_{i+1}^k ↔ q^i ↔ s^i",
    }
    return {k: _hyp(sys, v) for k, v in pats.items()}


# ---- individual checks ------------------------------------------------------------------


def _check_thm1(sys, table, hyps):
    d3 = _delay(sys, "y")
    theta = ("p", "q", "r")
    di = _di(table, "x", "y", d3)
    flow = _di(table, theta, "y", 0)
    leak = _di(table, theta, "y", 0, [("x", d3)])
    mi = mutual_information(table, _all(table, *theta), _all(table, "y"))
    claims = [
        _claim("I(x->y) <= I(p,q,r;y)", "ge", mi, di, hyps),
        _claim("I(x->y) = I(pqr->y) - I(pqr->y||x)", "eq", di, flow - leak, hyps),
        _claim("I(x->y) = I(p,q,r;y)", "eq", mi, di, hyps, ["s ⊥ (p,q,r)"]),
    ]
    terms = {"I(x->y)": di, "I(p,q,r;y)": mi, "I(pqr->y)": flow, "I(pqr->y||x)": leak}
    return claims, terms


def _check_thm2(sys, table, hyps):
    d = {o: sys.block_for(o).delay for o in FOUR_BLOCK}
    di_xy = _di(table, "x", "y", d["y"])
    di_eu = _di(table, "e", "u", d["x"] + d["y"] + d["u"])
    di_xy_q = _di(table, "x", "y", d["y"], [("q", 0)])
    part1 = (hyps["(q,s) ⊥ (r,p)"] and hyps["q ⊥ s"]) or (hyps["(p,s) ⊥ (r,q)"] and hyps["p ⊥ s"])
    hyps = dict(hyps, **{"case 1": part1})
    claims = [
        _claim("I(x->y) >= I(e->u)", "ge", di_xy, di_eu, hyps, ["case 1"]),
        _claim("I(x->y||q) >= I(e->u)", "ge", di_xy_q, di_eu, hyps, ["(q,s) ⊥ (r,p)", "q+ ↔ q- ↔ s-"]),
    ]
    return claims, {"I(x->y)": di_xy, "I(e->u)": di_eu, "I(x->y||q)": di_xy_q}, hyps


def _check_thm3(sys, table, hyps):
    d3 = _delay(sys, "y")
    di = _di(table, "x", "y", d3)
    Y = _all(table, "y")
    R = _all(table, "r")
    PQ = _all(table, "p", "q")
    i_r = mutual_information(table, R, Y)
    i_pq = mutual_information(table, PQ, Y)
    cmi = mutual_information(table, PQ, R, Y)
    tv = markov_tv(table, PQ, R, Y)
    req = ["s ⊥ (p,q,r)", "r ⊥ (p,q)"]
    rhs = i_r + i_pq
    claims = [
        _claim("I(x->y) >= I(r;y) + I(p,q;y)", "ge", di, rhs, hyps, req),
        _claim("gap = I(p,q;r|y)", "eq", di - rhs, cmi, hyps, req),
    ]
    asserted = all(hyps[h] for h in req)
    markov = tv <= TOL
    equal = abs(di - rhs) <= TOL
    # equality iff the Markov chain holds
    claims.append(Claim("equality <=> (p,q) <-> y <-> r", "eq", float(equal), float(markov), tuple(req), asserted))
    return claims, {"I(x->y)": di, "I(r;y)": i_r, "I(p,q;y)": i_pq, "I(p,q;r|y)": cmi, "markov_tv": tv}


def _check_thm4(sys, table, hyps):
    d3 = _delay(sys, "y")
    di = _di(table, "x", "y", d3)
    R, P, Q = _all(table, "r"), _all(table, "p"), _all(table, "q")
    U, E, Y = _all(table, "u"), _all(table, "e"), _all(table, "y")
    t = {
        "I(r;u)": mutual_information(table, R, U),
        "I(p;e)": mutual_information(table, P, E),
        "I(q;y)": mutual_information(table, Q, Y),
        "I(p;u|e)": mutual_information(table, P, U, E),
        "I(r,p;y|u)": mutual_information(table, R + P, Y, U),
    }
    rhs = math.fsum(t.values())
    claims = [_claim("I(x->y) = sum of five flows", "eq", di, rhs, hyps, ["r ⊥ p ⊥ q ⊥ s"])]
    return claims, dict(t, **{"I(x->y)": di})


def _check_thm5(sys, table, hyps):
    di_xy = _di(table, "x", "y", _delay(sys, "y"))
    di_ey = _di(table, "e", "y", _delay(sys, "x", "y"))
    claims = [_claim("I(x->y) >= I(e->y)", "ge", di_xy, di_ey, hyps, ["s ⊥ (p,q,r)"])]
    return claims, {"I(x->y)": di_xy, "I(e->y)": di_ey}


def _thm6_terms(sys, table):
    di_xy = _di(table, "x", "y", _delay(sys, "y"))
    di_xu = _di(table, "x", "u", _delay(sys, "y", "u"))
    Q, Y, U = _all(table, "q"), _all(table, "y"), _all(table, "u")
    RP, R = _all(table, "r", "p"), _all(table, "r")
    return {
        "I(x->y)": di_xy,
        "I(x->u)": di_xu,
        "I(q;y)": mutual_information(table, Q, Y),
        "I(r,p;y|u)": mutual_information(table, RP, Y, U),
        "I(q;r|u,y)": mutual_information(table, Q, R, U + Y),
        "I(r,p;q|u,y)": mutual_information(table, RP, Q, U + Y),
        "I(r,p;q)": mutual_information(table, RP, Q),
    }


def _check_thm6(sys, table, hyps):
    t = _thm6_terms(sys, table)
    four = ["I(x->u)", "I(q;y)", "I(r,p;y|u)", "I(q;r|u,y)"]
    rhs33 = math.fsum(t[k] for k in four)
    rhs34 = math.fsum(t[k] for k in four[:3])
    req = ["s ⊥ (p,q,r)"]
    claims = [
        _claim("I(x->y) >= I(x->u) + I(q;y) + I(r,p;y|u) + I(q;r|u,y)", "ge", t["I(x->y)"], rhs33, hyps, req),
        # the same bound with the dropped I(r,p;q) term restored; always valid under s ⊥ (p,q,r)
        _claim("I(x->y) + I(r,p;q) >= I(x->u) + I(q;y) + I(r,p;y|u) + I(q;r|u,y)", "ge", t["I(x->y)"] + t["I(r,p;q)"], rhs33, hyps, req),
        _claim("I(x->y) = I(x->u) + I(q;y) + I(r,p;y|u)", "eq", t["I(x->y)"], rhs34, hyps, req + ["q ⊥ (r,p,s)"]),
    ]
    for k in four:
        claims.append(_claim(f"{k} >= 0", "ge", t[k], 0.0, hyps))
    return claims, t


def _check_inner_bound(sys, table, hyps):
    t = _thm6_terms(sys, table)
    req = ["s ⊥ (p,q,r)"]
    claims = [
        _claim("I(x->y) >= I(x->u)", "ge", t["I(x->y)"], t["I(x->u)"], hyps, req),
        _claim("I(x->y) + I(r,p;q) >= I(x->u)", "ge", t["I(x->y)"] + t["I(r,p;q)"], t["I(x->u)"], hyps, req),
    ]
    return claims, {k: t[k] for k in ("I(x->y)", "I(x->u)", "I(r,p;q)")}


def _check_ref_bound(sys, table, hyps):
    di = _di(table, "x", "y", _delay(sys, "y"))
    mi = mutual_information(table, _all(table, "r"), _all(table, "y"))
    return [_claim("I(x->y) >= I(r;y)", "ge", di, mi, hyps, ["s ⊥ (p,q,r)"])], {"I(x->y)": di, "I(r;y)": mi}


def _check_side_split(sys, table, hyps):
    d3 = _delay(sys, "y")
    di = _di(table, "x", "y", d3)
    P, Y = _all(table, "p"), _all(table, "y")
    mi = mutual_information(table, P, Y)
    # every term conditions on the whole of p, not its causal prefix
    steps = sorted(t for n, t in table.variables if n == "y" and t >= 1)
    cond_terms = []
    for i in steps:
        past = [(n, t) for n, t in Y if t < i]
        x_hist = [(n, t) for n, t in _all(table, "x") if t <= i - d3]
        if x_hist:
            cond_terms.append(mutual_information(table, [("y", i)], x_hist, past + P))
    di_p = math.fsum(cond_terms)
    claims = [_claim("I(x->y) = I(p;y) + I(x->y|p)", "eq", di, mi + di_p, hyps, ["s ⊥ (p,q,r)"])]
    return claims, {"I(x->y)": di, "I(p;y)": mi, "I(x->y|p)": di_p}


# ---- Lemma 2 (two-block loop) ---------------------------------------------------------


def _check_lemma2(sys: LoopSystem, budget: Budget) -> CheckReport:
    _require(sys, ("u", "y", "r", "q"), "the two-block lemma")
    table = enumerate_joint(sys, sys.variables(["u", "y", "r", "q"]), budget)
    hyps = {"r ⊥ q": _hyp(sys, "r ⊥ q")}
    R, Q = _all(table, "r"), _all(table, "q")
    k = sys.horizon
    worst = 0.0
    claims = []
    terms = {}
    for i in range(1, k + 1):
        for j in (i - 1, i):
            if j < 0:
                continue
            C = [("u", t) for t in range(sys.start("u"), i + 1)] + [("y", t) for t in range(sys.start("y"), j + 1)]
            tv = markov_tv(table, R, Q, C)
            terms[f"tv(i={i},j={j})"] = tv
            worst = max(worst, tv)
            claims.append(_claim(f"r <-> (u^{i}, y^{j}) <-> q", "eq", tv, 0.0, hyps, ["r ⊥ q"]))
    claims.insert(0, _claim("max TV over (i,j)", "eq", worst, 0.0, hyps, ["r ⊥ q"]))
    return CheckReport("lemma2", hyps, claims, terms, TOL)


# ---- in-the-loop coding checks ---------------------------------------------------------


def _itl_roles(sys: LoopSystem):
    _require(sys, ("w", "y"), "the in-the-loop coding checks")
    side = "p" if sys.has("p") else None
    return side


def _ensure_indicator(sys: LoopSystem) -> LoopSystem:
    if any(d.name == "e_n" for d in sys.derived):
        return sys
    _require(sys, ("v",), "the decoding-error indicator")
    return sys.replace(derived=sys.derived + (DerivedSignal("e_n", "v[t] != w[t]", 2, 1, ANY),))


def _path_delay(sys: LoopSystem, src: str, dst: str) -> int | None:
    """Total block delay along the loop from ``src`` to ``dst``; None if not on one path."""
    total, cur, seen = 0, dst, set()
    while cur != src:
        if cur in seen:
            return None
        seen.add(cur)
        try:
            b = sys.block_for(cur)
        except ModelError:
            return None
        total += b.delay
        cur = b.loop_input
    return total


def _itl_hyps(sys: LoopSystem) -> dict[str, bool]:
    exo = set(sys.exogenous_names)
    fb = _path_delay(sys, "y", "w")
    h = {"w reads y with delay >= 1": fb is not None and fb >= 1}
    left = [n for n in ("r", "p") if n in exo]
    right = [n for n in ("s", "q") if n in exo]
    if left and right:
        h["(r,p) ⊥ (s,q)"] = _hyp(sys, f"({','.join(left)}) ⊥ ({','.join(right)})")
    else:
        h["(r,p) ⊥ (s,q)"] = True
    if "s" in exo and "q" in exo:
        h["s ⊥ q"] = _hyp(sys, "s ⊥ q")
    else:
        h["s ⊥ q"] = True
    return h


def _check_thm7(sys: LoopSystem, budget: Budget) -> CheckReport:
    side = _itl_roles(sys)
    sys = _ensure_indicator(sys)
    f = fano_decomposition(sys, "w", "y", side, "e_n", budget)
    hyps = _itl_hyps(sys)
    n = f.n
    zero_cond = abs(f.h_w_given_yp) <= TOL
    claims = [
        _claim("R_ITL >= DI/n", "ge", f.r_itl, f.di / n, hyps),
        _claim("n R_ITL = H(w|y,p) + DI", "eq", f.theorem7_error, 0.0, hyps),
        _claim("n R_ITL = H(e|y,p) + H(w|y,p,e=1) Pr{e=1} + DI", "eq", f.identity_error, 0.0, hyps),
        _claim("Pr{e=1} >= (R_ITL - DI/n - 1/n)/log|W|", "ge", f.pr_err, f.bound_rhs, hyps),
        Claim("equality <=> H(w|y,p) = 0", "eq", float(abs(n * f.r_itl - f.di) <= TOL), float(zero_cond)),
    ]
    rep = CheckReport("7", hyps, claims, f.to_dict(), TOL)
    if f.zero_mass_flag:
        rep.notes.append("Pr{e_n=1} = 0: the conditional-entropy factor is taken as 0")
    return rep


def _check_thm8(sys: LoopSystem, budget: Budget) -> CheckReport:
    side = _itl_roles(sys)
    _require(sys, ("x",), "the rate chain")
    sys = _ensure_indicator(sys)
    f = fano_decomposition(sys, "w", "y", side, "e_n", budget)
    names = ["w", "x", "y"] + ([side] if side else [])
    table = enumerate_joint(sys, sys.variables(names), budget)
    conds = [(side, 0)] if side else []
    di_xy = directed_information(table, "x", "y", 0, conds).value_bits
    n = f.n
    hyps = _itl_hyps(sys)
    req = ["(r,p) ⊥ (s,q)", "s ⊥ q", "w reads y with delay >= 1"]
    claims = [
        _claim("R_ITL <= DI(w->y||p)/n + H(w|y,p)/n", "eq", f.r_itl, (f.di + f.h_w_given_yp) / n, hyps),
        _claim("DI(x->y||p) >= DI(w->y||p)", "ge", di_xy, f.di, hyps, req),
        _claim("R_ITL - H(w|y,p)/n <= DI(x->y||p)/n", "ge", di_xy / n, f.r_itl - f.h_w_given_yp / n, hyps, req),
    ]
    terms = dict(f.to_dict(), **{"DI(x->y||p)": di_xy})
    return CheckReport("8", hyps, claims, terms, TOL, main="R_ITL - H(w|y,p)/n <= DI(x->y||p)/n")


def _check_conservation(sys: LoopSystem, budget: Budget) -> CheckReport:
    side = _itl_roles(sys)
    rec = conservation_extended(sys, "w", "y", side, budget)
    hyps = _itl_hyps(sys) if side else {}
    req = ["(r,p) ⊥ (s,q)"] if side else []
    claims = [
        _claim("H(w) - backward = forward + H(w|y,p)", "eq", rec.lhs, rec.middle, hyps, req),
        _claim("forward + H(w|y,p) = n R_ITL", "eq", rec.middle, rec.n_r_itl, hyps),
        _claim("H(w) - backward = n R_ITL", "eq", rec.lhs, rec.n_r_itl, hyps, req),
        _claim("H(w) - backward - I(p->w) = n R_ITL", "eq", rec.leak_error, 0.0, hyps),
    ]
    return CheckReport("conservation", hyps, claims, rec.to_dict(), TOL)


# ---- identities valid on every loop -------------------------------------------------------


def _pair(sys: LoopSystem) -> tuple[str, str]:
    for a, b in (("x", "y"), ("w", "y"), ("u", "y")):
        if sys.has(a) and sys.has(b):
            return a, b
    names = sys.internal_names
    if len(names) < 2:
        raise ModelError("need two internal signals")
    return names[0], names[1]


def _check_massey(sys: LoopSystem, budget: Budget) -> CheckReport:
    x, y = _pair(sys)
    steps = [t for t in sys.times(y) if t in sys.times(x) and t >= 1]
    rec = massey_conservation(sys, x, y, steps, budget)
    claims = [_claim(f"I({x}->{y}) + I(0*{y}->{x}) = I({x};{y})", "eq", rec.forward + rec.backward, rec.mutual, {})]
    return CheckReport("massey", {}, claims, asdict(rec), TOL)


def _check_chain(sys: LoopSystem, budget: Budget, seed: int = 0, trials: int = 5) -> CheckReport:
    table = enumerate_joint(sys, sys.variables(list(sys.internal_names) + list(sys.exogenous_names)), budget)
    rng = np.random.default_rng(seed)
    vars_ = list(table.variables)
    claims = []
    for k in range(trials):
        lab = rng.integers(0, 5, size=len(vars_))  # 0:a 1:b 2:c 3:d 4:unused
        a, b, c, d = ([v for v, l in zip(vars_, lab) if l == g] for g in range(4))
        lhs = mutual_information(table, a + b, c, d)
        rhs = mutual_information(table, b, c, d) + mutual_information(table, a, c, b + d)
        claims.append(_claim(f"chain rule split {k}", "eq", lhs, rhs, {}))
    return CheckReport("chain", {}, claims, {}, TOL)


# ---- dispatch --------------------------------------------------------------------------------

FOUR_BLOCK_CHECKS = {
    "1": _check_thm1,
    "3": _check_thm3,
    "4": _check_thm4,
    "5": _check_thm5,
    "6": _check_thm6,
    "inner-bound": _check_inner_bound,
    "ref-bound": _check_ref_bound,
    "side-split": _check_side_split,
}
THEOREM_IDS = ("1", "2", "3", "4", "5", "6", "ref-bound", "side-split", "inner-bound", "lemma2", "7", "8", "massey", "conservation", "chain")


def check(
    theorem_id: str,
    sys: LoopSystem,
    budget: Budget = DEFAULT_BUDGET,
    table: JointTable | None = None,
    seed: int = 0,
) -> CheckReport:
    """Evaluate one theorem on ``sys`` and return a :class:`CheckReport`.

    ``table`` may pass a precomputed full table of the four-block signals.
    """
    tid = str(theorem_id).lower().removeprefix("thm").strip()
    if tid not in THEOREM_IDS:
        raise ModelError(f"unknown theorem id {theorem_id!r}; choose from {THEOREM_IDS}")
    if tid in FOUR_BLOCK_CHECKS or tid == "2":
        if table is None:
            table = _four_block_table(sys, budget)
        hyps = _four_block_hypotheses(sys)
        if tid == "2":
            claims, terms, hyps = _check_thm2(sys, table, hyps)
            return CheckReport("2", hyps, claims, terms, TOL)
        claims, terms = FOUR_BLOCK_CHECKS[tid](sys, table, hyps)
        return CheckReport(tid, hyps, claims, terms, TOL)
    if tid == "lemma2":
        return _check_lemma2(sys, budget)
    if tid == "7":
        return _check_thm7(sys, budget)
    if tid == "8":
        return _check_thm8(sys, budget)
    if tid == "conservation":
        return _check_conservation(sys, budget)
    if tid == "massey":
        return _check_massey(sys, budget)
    return _check_chain(sys, budget, seed)


def check_many(theorem_ids: Sequence[str], sys: LoopSystem, budget: Budget = DEFAULT_BUDGET) -> list[CheckReport]:
    """Run several checks sharing one enumeration for the four-block ones."""
    table = None
    out = []
    for tid in theorem_ids:
        t = str(tid).lower().removeprefix("thm").strip()
        if t in FOUR_BLOCK_CHECKS or t == "2":
            if table is None:
                table = _four_block_table(sys, budget)
            out.append(check(t, sys, budget, table))
        else:
            out.append(check(t, sys, budget))
    return out


# ---- random systems ---------------------------------------------------------------------------

PATTERNS: dict[str, tuple[tuple[str, ...], ...]] = {
    "independent": (("r",), ("p",), ("s",), ("q",)),
    "qs": (("q", "s"), ("r",), ("p",)),
    "ps": (("p", "s"), ("r",), ("q",)),
    "rp": (("r", "p"), ("s",), ("q",)),
    "rq": (("r", "q"), ("p",), ("s",)),
    "sr": (("s", "r"), ("p",), ("q",)),
    "pq": (("p", "q"), ("r",), ("s",)),
    "rpq": (("r", "p", "q"), ("s",)),
    "all": (("r", "p", "s", "q"),),
    "qs|rp": (("q", "s"), ("r", "p")),
    "ps|rq": (("p", "s"), ("r", "q")),
}
ALIASES = {
    "all independent": "independent",
    "(q,s) coupled, ⊥ (r,p)": "qs|rp",
    "all coupled": "all",
    "coupled": "rq",
}
FAMILIES = ("four-block", "itl", "two-block")


@dataclass(frozen=True)
class RandomSystemParams:
    """Seeded description of a random loop.

    ``delays`` lists the block delays in loop order (``None`` draws them).
    ``pattern`` names which exogenous signals share a coupling group.
    """

    seed: int = 0
    horizon: int = 3
    alphabet: int = 2
    delays: tuple[int, ...] | None = None
    pattern: str = "independent"
    family: str = "four-block"
    own_memory: bool = True

    def __post_init__(self):
        if not 1 <= self.horizon <= 5:
            raise ModelError("random systems use horizons 1..5")
        if not 2 <= self.alphabet <= 3:
            raise ModelError("random systems use alphabet sizes 2 or 3")
        if self.family not in FAMILIES:
            raise ModelError(f"family must be one of {FAMILIES}")
        pat = ALIASES.get(self.pattern, self.pattern)
        if pat not in PATTERNS:
            raise ModelError(f"unknown pattern {self.pattern!r}; choose from {sorted(PATTERNS)}")
        object.__setattr__(self, "pattern", pat)
        nblocks = 2 if self.family == "two-block" else 4
        if self.delays is not None:
            if len(self.delays) != nblocks or sum(self.delays) < 1 or min(self.delays) < 0:
                raise ModelError(f"delays must be {nblocks} non-negative integers with a positive sum")


def _random_table(rng, inputs, sizes, out_size) -> LookupTable:
    return LookupTable(tuple(inputs), tuple(sizes), tuple(int(v) for v in rng.integers(0, out_size, math.prod(sizes))))


def _draw_delays(rng, n: int) -> tuple[int, ...]:
    while True:
        d = tuple(int(x) for x in rng.integers(0, 2, n))
        if sum(d) >= 1:
            return d


def _groups_for(rng, pattern: str, present: Sequence[str], A: int) -> ExogenousSpec:
    groups = []
    for g in PATTERNS[pattern]:
        g = tuple(n for n in g if n in present)
        if not g:
            continue
        K = A ** len(g)
        w = rng.dirichlet(np.ones(K))
        keys = list(itertools.product(range(A), repeat=len(g)))
        pmf = dict(zip(keys, w))
        # make the masses sum to one exactly in floating point
        last = keys[-1]
        pmf[last] = max(0.0, 1.0 - math.fsum(v for k, v in pmf.items() if k != last))
        groups.append(ExoGroup(g, pmf))
    return ExogenousSpec(tuple(groups))


def _loop_block(rng, name, out, inp, delay, exo, A, own_memory, start_override=None):
    inputs = [(inp, delay), (inp, delay + 1)]
    if exo is not None:
        inputs += [(exo, 0), (exo, 1)]
    if own_memory and rng.random() < 0.5:
        inputs.append((out, 1))
    table = _random_table(rng, inputs, [A] * len(inputs), A)
    overrides = start_override or {}
    return Block(name, out, inp, delay, table, exogenous=exo, overrides=overrides)


def generate(params: RandomSystemParams) -> LoopSystem:
    """Deterministic random loop for ``params`` (same params, same system)."""
    rng = np.random.default_rng(params.seed)
    A, k = params.alphabet, params.horizon
    pro = {0: 0, -1: 0}
    if params.family == "two-block":
        d = params.delays or (int(rng.integers(0, 2)), 1)
        signals = [
            SignalDecl("y", A, start=0, prologue={-1: 0, -2: 0}),
            SignalDecl("u", A, start=1, prologue=pro),
            SignalDecl("r", A, EXOGENOUS, start=1, prologue=pro),
            SignalDecl("q", A, EXOGENOUS, start=1, prologue=pro),
        ]
        y0 = str(int(rng.integers(0, A)))
        pattern = "rq" if params.pattern in ("rq", "all", "ps|rq", "coupled") else "independent"
        exo = _groups_for(rng, pattern, ("r", "q"), A)
        blocks = [
            _loop_block(rng, "S1", "y", "u", d[0], "r", A, params.own_memory, {0: y0}),
            _loop_block(rng, "S2", "u", "y", d[1], "q", A, params.own_memory),
        ]
        return build_system(signals, exo, blocks, k)
    d = params.delays or _draw_delays(rng, 4)
    ex = [SignalDecl(n, A, EXOGENOUS, start=1, prologue=pro) for n in FOUR_EXO]
    if params.family == "four-block":
        signals = [SignalDecl(n, A, start=1, prologue=pro) for n in FOUR_BLOCK] + ex
        blocks = [
            _loop_block(rng, "S1", "e", "u", d[0], "r", A, params.own_memory),
            _loop_block(rng, "S2", "x", "e", d[1], "p", A, params.own_memory),
            _loop_block(rng, "S3", "y", "x", d[2], "s", A, params.own_memory),
            _loop_block(rng, "S4", "u", "y", d[3], "q", A, params.own_memory),
        ]
        return build_system(signals, _groups_for(rng, params.pattern, FOUR_EXO, A), blocks, k)
    # in-the-loop coding loop
    signals = [
        SignalDecl("w", A, start=1, prologue=pro),
        SignalDecl("x", A, start=1, prologue=pro),
        SignalDecl("y", A, start=0, prologue={-1: 0, -2: 0}),
        SignalDecl("v", A, start=1, prologue=pro),
    ] + ex
    if params.delays is None:
        while d[2] + d[3] < 1:  # the message sees the output only after a delay
            d = _draw_delays(rng, 4)
    blocks = [
        _loop_block(rng, "E", "x", "w", d[0], "r", A, params.own_memory),
        _loop_block(rng, "C", "y", "x", d[1], "s", A, params.own_memory, {0: "0"}),
        _loop_block(rng, "D", "v", "y", d[2], "p", A, params.own_memory),
        _loop_block(rng, "S", "w", "v", d[3], "q", A, params.own_memory),
    ]
    derived = [DerivedSignal("e_n", "v[t] != w[t]", 2, 1, ANY)]
    return build_system(signals, _groups_for(rng, params.pattern, FOUR_EXO, A), blocks, k, derived)


# ---- sweeps --------------------------------------------------------------------------------


@dataclass
class TheoremSummary:
    theorem: str
    runs: int = 0
    violations: int = 0
    unmet: int = 0
    equality: int = 0
    strict: int = 0  # asserted inequalities with gap > STRICT
    min_gap: float = math.inf  # over asserted inequality claims
    max_identity_error: float = 0.0  # over asserted equality claims
    failures: list[str] = field(default_factory=list)


@dataclass
class SweepReport:
    summaries: dict[str, TheoremSummary]
    reports: list[tuple[int, CheckReport]]

    @property
    def ok(self) -> bool:
        return all(s.violations == 0 for s in self.summaries.values())

    def table(self) -> str:
        head = f"{'theorem':>12} {'runs':>5} {'viol':>5} {'unmet':>6} {'equal':>6} {'strict':>6} {'min gap':>12} {'max |id err|':>13}"
        rows = [head]
        for s in self.summaries.values():
            mg = "-" if s.min_gap == math.inf else f"{s.min_gap:.3e}"
            rows.append(
                f"{s.theorem:>12} {s.runs:>5} {s.violations:>5} {s.unmet:>6} {s.equality:>6} {s.strict:>6} {mg:>12} {s.max_identity_error:>13.3e}"
            )
        return "\n".join(rows)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "summaries": {k: asdict(v) for k, v in self.summaries.items()},
            "reports": [dict(r.to_dict(), seed=s) for s, r in self.reports],
        }


def family_for(theorem_id: str) -> str:
    t = str(theorem_id).lower().removeprefix("thm").strip()
    if t == "lemma2":
        return "two-block"
    if t in ("7", "8", "conservation"):
        return "itl"
    return "four-block"


def _wanted(ids: Sequence[str], family: str) -> list[str]:
    return [t for t in ids if family_for(t) == family or t in ("massey", "chain")]


def _run_system(args) -> list[CheckReport]:
    ids, params, budget = args
    return check_many(_wanted(ids, params.family), generate(params), budget)


def sweep(
    theorem_ids: Sequence[str],
    params_list: Sequence[RandomSystemParams],
    budget: Budget = DEFAULT_BUDGET,
    keep_reports: bool = False,
    workers: int = 1,
) -> SweepReport:
    """Run every applicable theorem on every generated system.

    With ``workers > 1`` systems are checked in separate processes; the
    summary is merged in input order, so it does not depend on scheduling.
    """
    ids = [str(t).lower().removeprefix("thm").strip() for t in theorem_ids]
    for t in ids:
        if t not in THEOREM_IDS:
            raise ModelError(f"unknown theorem id {t!r}; choose from {THEOREM_IDS}")
    summaries = {t: TheoremSummary(t) for t in ids}
    jobs = [(ids, p, budget) for p in params_list]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_system, jobs, chunksize=4))
    else:
        results = [_run_system(j) for j in jobs]
    kept = []
    for params, reports in zip(params_list, results):
        for rep in reports:
            s = summaries[rep.theorem]
            s.runs += 1
            v = rep.verdict
            if v == VIOLATED:
                s.violations += 1
                s.failures.append(f"seed {params.seed}: {[c.label for c in rep.violations]}")
            elif v == UNMET:
                s.unmet += 1
            elif v == EQUALITY:
                s.equality += 1
            for c in rep.claims:
                if not c.asserted:
                    continue
                if c.kind == "ge":
                    s.min_gap = min(s.min_gap, c.gap)
                    if c is rep.main_claim and c.gap > STRICT:
                        s.strict += 1
                else:
                    s.max_identity_error = max(s.max_identity_error, abs(c.gap))
            if keep_reports:
                kept.append((params.seed, rep))
    return SweepReport(summaries, kept)


def default_params(
    seed_start: int,
    count: int,
    horizons=(2, 3, 4),
    family: str | None = None,
    alphabet: int = 2,
    families: Sequence[str] | None = None,
):
    """Seeded parameter list cycling through horizons, patterns and shapes."""
    pats = sorted(PATTERNS)
    fams = tuple(families) if families else (FAMILIES if family is None else (family,))
    out = []
    for i in range(count):
        seed = seed_start + i
        out.append(
            RandomSystemParams(
                seed=seed,
                horizon=horizons[i % len(horizons)],
                alphabet=alphabet,
                pattern=pats[i % len(pats)],
                family=fams[(i // len(pats)) % len(fams)],
            )
        )
    return out
