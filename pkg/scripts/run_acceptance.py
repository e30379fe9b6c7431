"""Run acceptance criteria and write a JSON summary.

    python scripts/run_acceptance.py                 # all criteria
    python scripts/run_acceptance.py 1 2 7 --out acceptance.json
"""

import argparse
import sys

from expnls import io
from expnls.acceptance import CRITERIA, run_all


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("criteria", nargs="*", type=int, help="subset of 1-10")
    ap.add_argument("--out", default="acceptance.json")
    args = ap.parse_args(argv)
    which = args.criteria or sorted(CRITERIA)
    results = run_all(which=which)
    io.write_json(args.out, {"criteria": [
        {"number": r.number, "name": r.name, "passed": r.passed,
         "detail": r.detail, "seconds": r.seconds} for r in results]})
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} passed; summary in {args.out}")
    return 0 if n_pass == len(results) else 2


if __name__ == "__main__":
    sys.exit(main())
