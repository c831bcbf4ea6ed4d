"""Binary message over a quaternary feedback channel with two encoder choices.

The channel output ``y`` takes values in {0,1,2,3}.  The channel passes
``x`` through unchanged (optionally flipping the low bit).  The feedback
path forms the message ``w`` from the binary source ``q`` and the parity of
the past channel output.  Encoder ``E1`` uses the high bit of ``x`` to flag
whether the message matches the fed-back parity; ``E2`` sends the message
directly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ModelError
from .model import (
    ANY,
    Block,
    DerivedSignal,
    EXOGENOUS,
    ExoGroup,
    ExogenousSpec,
    LoopSystem,
    SignalDecl,
    build_system,
)

ENCODERS = ("E1", "E2")
ENGINES = ("enumerate", "tree")

# feedback path: w(t) = q(t) when the previous source symbol agreed with the
# parity of the previous channel output, else that parity
SOURCE_MAP = "(q[t-1] == (y[t-1] mod 2)) ? q[t] : (y[t-1] mod 2)"

E1_ENCODER = "(w[t] == (x[t-1] mod 2)) ? r[t] : r[t] + 2"
E1_DECODER = "(y[t] <= 1) ? (y[t-1] mod 2) : ((y[t-1] mod 2) xor 1)"
E2_ENCODER = "w[t]"
E2_DECODER = "y[t]"
AGREE = "((y[t] mod 2) == q[t]) ? 1 : 0"


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


@dataclass(frozen=True)
class Example1Config:
    encoder: str = "E1"
    alpha: float = 0.9
    beta: float = 0.5
    n: int = 6
    engine: str = "enumerate"
    flip: float = 0.0  # low-bit flip probability of the channel (0 = noiseless)

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ModelError(f"encoder must be one of {ENCODERS}")
        if self.engine not in ENGINES:
            raise ModelError(f"engine must be one of {ENGINES}")
        for label, v in (("alpha", self.alpha), ("beta", self.beta), ("flip", self.flip)):
            if not (0.0 <= v <= 1.0):
                raise ModelError(f"{label} must lie in [0, 1], got {v}")
        if self.n < 1:
            raise ModelError("n must be at least 1")


def _bern(p: float) -> dict:
    return {(0,): 1.0 - p, (1,): p}


def build_example1(cfg: Example1Config) -> LoopSystem:
    """Loop with message ``w``, encoder output ``x``, channel output ``y``.

    Derived signals: decoded message ``v``, agreement flag ``a`` and the
    block-error indicator ``e_n`` (1 iff ``v(k) != w(k)`` for some k).
    """
    e1 = cfg.encoder == "E1"
    signals = [
        SignalDecl("q", 2, EXOGENOUS, start=0),
        SignalDecl("w", 2, start=1),
        SignalDecl("x", 4, start=0),
        SignalDecl("y", 4, start=0),
    ]
    groups = [ExoGroup(("q",), _bern(cfg.alpha), steps={0: {(1,): 1.0}})]
    if e1:
        signals.append(SignalDecl("r", 2, EXOGENOUS, start=0))
        groups.append(ExoGroup(("r",), _bern(cfg.beta)))
        enc = Block("E", "x", "w", 0, E1_ENCODER, exogenous="r", overrides={0: "r[t]"})
    else:
        enc = Block("E", "x", "w", 0, E2_ENCODER, overrides={0: "1"})
    if cfg.flip > 0.0:
        signals.append(SignalDecl("s", 2, EXOGENOUS, start=1))
        groups.append(ExoGroup(("s",), _bern(cfg.flip)))
        chan = Block("C", "y", "x", 0, "x[t] xor s[t]", exogenous="s", overrides={0: "x[t]"})
    else:
        chan = Block("C", "y", "x", 0, "x[t]")
    src = Block("S", "w", "y", 1, SOURCE_MAP, exogenous="q")
    derived = [
        DerivedSignal("v", E1_DECODER if e1 else E2_DECODER, 2 if e1 else 4, start=1),
        DerivedSignal("a", AGREE, 2, start=0),
        DerivedSignal("e_n", "v[t] != w[t]", 2, start=1, mode=ANY),
    ]
    return build_system(signals, ExogenousSpec(tuple(groups)), [enc, chan, src], cfg.n, derived)


@dataclass(frozen=True)
class ClosedForms:
    pr_w1: float
    pr_wk: float
    r_itl_disagree: float
    r_itl_agree: float


def closed_forms(alpha: float, beta: float) -> ClosedForms:
    """Hand-derived marginals and the two candidate per-step ITL increments.

    ``r_itl_disagree`` weights H_b(alpha) by Pr{r != q}; ``r_itl_agree`` weights it
    by Pr{r == q}.
    """
    if not (0 <= alpha <= 1 and 0 <= beta <= 1):
        raise ModelError("alpha and beta must lie in [0, 1]")
    hb = binary_entropy(alpha)
    return ClosedForms(
        pr_w1=alpha * beta,
        pr_wk=(alpha**2 + (1 - alpha) ** 2) * beta + alpha * (1 - alpha),
        r_itl_disagree=hb * (alpha * (1 - beta) + (1 - alpha) * beta),
        r_itl_agree=hb * (alpha * beta + (1 - alpha) * (1 - beta)),
    )


# ---- beta sweep -------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    beta: float
    h_w_rate: float  # H(w_1^n)/n
    r_itl: float
    di_forward: float  # I(w_1^n -> y_0^n)/n
    di_backward: float  # I(0*y -> w)/n


@dataclass
class SweepResult:
    alpha: float
    n: int
    engine: str
    rows: list[SweepRow] = field(default_factory=list)

    @property
    def best(self) -> SweepRow:
        return max(self.rows, key=lambda r: r.h_w_rate)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["beta", "H_w_rate_bits", "R_ITL_bits", "DI_forward_bits", "DI_backward_bits"])
        for r in self.rows:
            w.writerow([f"{r.beta:.12g}"] + [f"{v:.12g}" for v in (r.h_w_rate, r.r_itl, r.di_forward, r.di_backward)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        b = self.best
        return {
            "alpha": self.alpha,
            "n": self.n,
            "engine": self.engine,
            "argmax_beta": b.beta,
            "max_h_w_rate": b.h_w_rate,
            "rows": [vars(r) for r in self.rows],
        }


def parse_grid(text: str) -> list[float]:
    """``"lo:hi:step"`` (inclusive) or a comma list."""
    if ":" in text:
        try:
            lo, hi, step = (float(v) for v in text.split(":"))
        except ValueError as exc:
            raise ModelError(f"bad grid {text!r}; expected lo:hi:step") from exc
        if step <= 0 or hi < lo:
            raise ModelError(f"bad grid {text!r}")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 12) for i in range(count)]
    try:
        out = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ModelError(f"bad grid {text!r}") from exc
    if not out:
        raise ModelError("empty beta grid")
    return out


def _row_from_system(sys: LoopSystem, beta: float, n: int, engine: str) -> SweepRow:
    from .fsm import compile_fsm, tree_chain_entropies
    from .measures import directed_information, itl_rate

    steps = list(range(1, n + 1))
    if engine == "tree":
        model = compile_fsm(sys, [("w", 0)], first=1)
        h_w = math.fsum(tree_chain_entropies(model, n)[:, -1])
    else:
        from .measures import entropy

        h_w = entropy(sys, [("w", t) for t in steps])
    return SweepRow(
        beta,
        h_w / n,
        itl_rate(sys, engine=engine).value_bits,
        directed_information(sys, "w", "y", 0, steps=steps, engine=engine).value_bits / n,
        directed_information(sys, "y", "w", 1, steps=steps, engine=engine).value_bits / n,
    )


def _rows_factorized(alpha: float, n: int, grid: Sequence[float]) -> list[SweepRow]:
    from .joint import enumerate_factorized
    from .measures import directed_information, entropy, itl_rate

    sys = build_example1(Example1Config("E1", alpha, 0.5, n))
    fact = enumerate_factorized(sys, sys.variables(["w", "y"]))
    r_group = next(i for i, g in enumerate(sys.exogenous.groups) if g.signals == ("r",))
    q_group = 1 - r_group
    steps = list(range(1, n + 1))
    rows = []
    for beta in grid:
        table = fact.reweight({q_group: _bern(alpha), r_group: _bern(beta)})
        rows.append(
            SweepRow(
                beta,
                entropy(table, [("w", t) for t in steps]) / n,
                itl_rate(table).value_bits,
                directed_information(table, "w", "y", 0, steps=steps).value_bits / n,
                directed_information(table, "y", "w", 1, steps=steps).value_bits / n,
            )
        )
    return rows


def beta_sweep(alpha: float, n: int, grid: Sequence[float], engine: str = "tree") -> SweepResult:
    """Exact E1 quantities at each ``beta`` in ``grid`` (sorted ascending).

    ``enumerate`` simulates once and re-weights the pushforward per point;
    ``tree`` compiles the belief-tree model per point, which scales to n in
    the twenties.
    """
    if engine not in ENGINES:
        raise ModelError(f"engine must be one of {ENGINES}")
    grid = sorted(float(b) for b in grid)
    if not grid:
        raise ModelError("empty beta grid")
    for b in grid:
        Example1Config("E1", alpha, b, n, engine)  # validates ranges
    if engine == "enumerate":
        rows = _rows_factorized(alpha, n, grid)
    else:
        rows = [
            _row_from_system(build_example1(Example1Config("E1", alpha, b, n, engine)), b, n, engine)
            for b in grid
        ]
    return SweepResult(alpha, n, engine, rows)


def source_output_terms(cfg: Example1Config) -> list[float]:
    """Summands of I(q_0^n; y_0^n) split along the source: for k = 0..n,
    H(q(k) | q^{k-1}) - H(q(k) | q^{k-1}, y_0^n)."""
    from .joint import enumerate_joint
    from .measures import cond_entropy

    sys = build_example1(cfg)
    table = enumerate_joint(sys, sys.variables(["q", "y"]))
    Y = [("y", t) for t in sys.times("y")]
    terms = []
    for k in sys.times("q"):
        past = [("q", t) for t in range(sys.start("q"), k)]
        terms.append(cond_entropy(table, [("q", k)], past) - cond_entropy(table, [("q", k)], past + Y))
    return terms
