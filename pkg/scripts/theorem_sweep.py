"""Check theorems on seeded random loops and print a per-theorem summary.

    python scripts/theorem_sweep.py --seed 42 --count 200 --theorems 1,2,3,4,5,6
"""

import argparse
import sys

from loopinfo.theorems import FAMILIES, default_params, family_for, sweep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--theorems", default="1,2,3,4,5,6")
    ap.add_argument("--horizons", default="2,3,4")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--show-failures", type=int, default=5, help="failures listed per theorem")
    args = ap.parse_args(argv)

    ids = [t.strip() for t in args.theorems.split(",") if t.strip()]
    fams = sorted({family_for(t) for t in ids if t not in ("massey", "chain")}) or list(FAMILIES)
    horizons = tuple(int(h) for h in args.horizons.split(","))
    params = default_params(args.seed, args.count, horizons, families=fams)
    rep = sweep(ids, params, workers=args.workers)
    print(rep.table())
    for s in rep.summaries.values():
        for f in s.failures[: args.show_failures]:
            print(f"  {s.theorem}: {f}")
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())
