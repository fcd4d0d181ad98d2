"""Run every acceptance criterion and print one PASS/FAIL line each.

    python scripts/run_acceptance.py            # all criteria
    python scripts/run_acceptance.py 3 4 6      # a subset
"""
import argparse
import sys

from holdersgd.acceptance import CRITERIA


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("numbers", nargs="*", type=int, help="criterion numbers (default: all)")
    args = p.parse_args(argv)
    chosen = args.numbers or list(range(1, len(CRITERIA) + 1))
    failed = 0
    for k in chosen:
        r = CRITERIA[k - 1]()
        print(r.line(), flush=True)
        failed += not r.passed
    print(f"{len(chosen) - failed}/{len(chosen)} criteria passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
