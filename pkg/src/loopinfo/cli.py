"""``loopinfo`` command line.

Exit codes: 0 success, 1 a theorem check was violated, 2 parse error,
3 budget exceeded, 4 semantic error (bad model, parameters or request).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from .errors import BudgetExceeded, LoopInfoError, ModelError, ParseError
from .example1 import Example1Config, beta_sweep, build_example1, parse_grid
from .joint import Budget
from .measures import directed_information, fano_decomposition, itl_rate
from .specfile import dump_spec, evaluate_measure, load_spec
from .theorems import FAMILIES, THEOREM_IDS, VIOLATED, check, default_params, family_for, sweep

EXIT_OK, EXIT_VIOLATION, EXIT_PARSE, EXIT_BUDGET, EXIT_SEMANTIC = 0, 1, 2, 3, 4
DIGITS = 12


def _num(v):
    """Round floats to 12 significant digits, recursively."""
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return float(f"{v:.{DIGITS}g}")
    if isinstance(v, dict):
        return {k: _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    return v


def _fmt(v) -> str:
    return f"{v:.{DIGITS}g}" if isinstance(v, float) else str(v)


def _json(obj) -> str:
    return json.dumps(_num(obj), indent=1, ensure_ascii=False) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _budget(args) -> Budget:
    b = Budget()
    return Budget(
        atoms=args.budget_atoms if args.budget_atoms is not None else b.atoms,
        leaves=args.budget_leaves if args.budget_leaves is not None else b.leaves,
    )


def _emit(args, text: str) -> None:
    if getattr(args, "output", None):
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---- commands ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    spec = load_spec(args.spec)
    if args.dump_spec:
        _emit(args, dump_spec(spec.system, spec.measures, spec.checks))
        return EXIT_OK
    budget = _budget(args)
    results = []
    for ms in spec.measures:
        r = evaluate_measure(spec.system, ms, budget)
        count = len(r.steps)
        results.append(
            {
                "measure": ms.to_text(),
                "value_bits": r.value_bits,
                "per_sample_bits": r.value_bits / count if count else None,
                "steps": list(r.steps),
                "per_step_bits": list(r.per_step_terms),
            }
        )
    if args.format == "csv":
        rows = [
            (r["measure"], r["value_bits"], r["per_sample_bits"] if r["per_sample_bits"] is not None else "")
            for r in results
        ]
        _emit(args, _csv(["measure", "value_bits", "per_sample_bits"], rows))
    else:
        _emit(args, _json({"horizon": spec.system.horizon, "results": results}))
    return EXIT_OK


def _theorem_list(text: str | None, default) -> list[str]:
    if not text:
        return list(default)
    ids = [t.strip().lower().removeprefix("thm") for t in text.split(",") if t.strip()]
    bad = [t for t in ids if t not in THEOREM_IDS]
    if bad:
        raise ModelError(f"unknown theorem ids {bad}; choose from {', '.join(THEOREM_IDS)}")
    return ids


def cmd_verify(args) -> int:
    budget = _budget(args)
    if args.random is not None:
        seed, count = args.random
        ids = _theorem_list(args.theorems, ("1", "2", "3", "4", "5", "6"))
        fams = sorted({family_for(t) for t in ids if t not in ("massey", "chain")}) or list(FAMILIES)
        horizons = tuple(int(h) for h in args.horizons.split(","))
        params = default_params(seed, count, horizons, alphabet=args.alphabet, families=fams)
        rep = sweep(ids, params, budget, keep_reports=args.format == "json", workers=args.threads)
        if args.format == "csv":
            rows = [
                (s.theorem, s.runs, s.violations, s.unmet, s.equality, s.strict,
                 s.min_gap if s.min_gap != math.inf else "", s.max_identity_error)
                for s in rep.summaries.values()
            ]
            _emit(args, _csv(["theorem", "runs", "violations", "unmet", "equality", "strict",
                              "min_gap_bits", "max_identity_error_bits"], rows))
        else:
            _emit(args, _json(rep.to_dict()))
        if not args.quiet:
            print(rep.table(), file=sys.stderr)
            for s in rep.summaries.values():
                for f in s.failures:
                    print(f"violation thm {s.theorem} {f}", file=sys.stderr)
        return EXIT_OK if rep.ok else EXIT_VIOLATION

    if not args.spec:
        raise ModelError("verify needs a spec file or --random SEED COUNT")
    spec = load_spec(args.spec)
    ids = _theorem_list(args.theorems, spec.checks or ("massey",))
    reports = [check(t, spec.system, budget, seed=args.seed) for t in ids]
    for r in reports:
        r.tolerance = args.tolerance
    if args.format == "csv":
        rows = [(r.theorem, r.verdict, r.lhs, r.rhs, r.gap) for r in reports]
        _emit(args, _csv(["theorem", "verdict", "lhs_bits", "rhs_bits", "gap_bits"], rows))
    else:
        _emit(args, _json({"reports": [r.to_dict() for r in reports]}))
    return EXIT_VIOLATION if any(r.verdict == VIOLATED for r in reports) else EXIT_OK


def cmd_example1(args) -> int:
    if args.sweep:
        grid = parse_grid(args.sweep)
        Example1Config(args.encoder, args.alpha, grid[0], args.n, args.engine)
        if args.encoder != "E1":
            raise ModelError("the beta sweep applies to encoder E1")
        res = beta_sweep(args.alpha, args.n, grid, args.engine)
        if args.format == "json":
            _emit(args, _json(res.to_dict()))
        else:
            _emit(args, res.to_csv())
            b = res.best
            print(f"argmax beta = {_fmt(b.beta)}, max H_w_rate = {_fmt(b.h_w_rate)} bits", file=sys.stderr)
        return EXIT_OK

    cfg = Example1Config(args.encoder, args.alpha, args.beta, args.n, args.engine, args.flip)
    system = build_example1(cfg)
    if args.dump_spec:
        _emit(args, dump_spec(system))
        return EXIT_OK
    budget = _budget(args)
    r = itl_rate(system, engine=args.engine, budget=budget)
    di = directed_information(system, "w", "y", 0, steps=range(1, cfg.n + 1), engine=args.engine, budget=budget)
    out = {
        "encoder": cfg.encoder,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "n": cfg.n,
        "flip": cfg.flip,
        "R_ITL_bits": r.value_bits,
        "DI_forward_rate_bits": di.value_bits / cfg.n,
        "R_ITL_per_step_bits": list(r.per_step_terms),
    }
    if args.engine == "enumerate":
        f = fano_decomposition(system, "w", "y", None, "e_n", budget)
        out.update(pr_error=f.pr_err, H_w_given_y_bits=f.h_w_given_yp, fano_bound_rhs=f.bound_rhs)
    if args.format == "csv":
        keys = [k for k, v in out.items() if not isinstance(v, list)]
        _emit(args, _csv(keys, [[out[k] for k in keys]]))
    else:
        _emit(args, _json(out))
    return EXIT_OK


# ---- parser --------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--budget-atoms", type=int, default=None, help="max exogenous atoms to enumerate")
    common.add_argument("--budget-leaves", type=int, default=None, help="max belief-tree frontier size")
    common.add_argument("--threads", type=int, default=1, help="worker processes for random sweeps")
    common.add_argument("--seed", type=int, default=0, help="seed for the random variable splits of the chain check")
    common.add_argument("--tolerance", type=float, default=1e-9)
    common.add_argument("--output", "-o", default=None, help="write results here instead of stdout")

    p = argparse.ArgumentParser(prog="loopinfo", description="Exact information flow in discrete feedback loops.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eval", parents=[common], help="evaluate the [measure] requests of a spec file")
    e.add_argument("spec")
    e.add_argument("--dump-spec", action="store_true", help="print the normalised spec and exit")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", parents=[common], help="run theorem checks")
    v.add_argument("spec", nargs="?")
    v.add_argument("--random", nargs=2, type=int, metavar=("SEED", "COUNT"))
    v.add_argument("--theorems", default=None, help="comma list, e.g. 1,2,3 or 7,conservation,lemma2")
    v.add_argument("--horizons", default="2,3,4")
    v.add_argument("--alphabet", type=int, default=2)
    v.add_argument("--quiet", action="store_true")
    v.set_defaults(func=cmd_verify)

    x = sub.add_parser("example1", parents=[common], help="binary message over the quaternary feedback channel")
    x.add_argument("--encoder", choices=("E1", "E2"), default="E1")
    x.add_argument("--alpha", type=float, default=0.9)
    x.add_argument("--beta", type=float, default=0.5)
    x.add_argument("--n", type=int, default=6)
    x.add_argument("--flip", type=float, default=0.0)
    x.add_argument("--engine", choices=("enumerate", "tree"), default=None)
    x.add_argument("--sweep", default=None, help="beta grid lo:hi:step or comma list")
    x.add_argument("--dump-spec", action="store_true")
    x.set_defaults(func=cmd_example1)
    return p


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "example1" and args.engine is None:
        args.engine = "tree" if args.sweep or args.n > 12 else "enumerate"
    try:
        return args.func(args)
    except ParseError as exc:
        where = f"{args.spec}:" if getattr(args, "spec", None) else ""
        print(f"parse error: {where}{exc.line}:{exc.column}: {exc.message}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (LoopInfoError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC


if __name__ == "__main__":
    sys.exit(main())
