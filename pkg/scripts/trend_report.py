#!/usr/bin/env python3
"""Run every verification suite and write one machine-readable report.

    python scripts/trend_report.py --out out/report.json
"""

import argparse
import json
from pathlib import Path

from sgdlab.verify import SUITES


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="out/report.json")
    parser.add_argument("--suites", nargs="+", default=sorted(SUITES), choices=sorted(SUITES))
    args = parser.parse_args()

    report = {}
    for name in args.suites:
        result = SUITES[name]()
        report[name] = result
        status = "pass" if result["passed"] else "FAIL"
        print(f"[{status}] {name}")
        for check in result["checks"]:
            mark = " ok " if check["passed"] else " BAD"
            print(f"   {mark} {check['name']}: {check['detail']}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")
    return 0 if all(r["passed"] for r in report.values()) else 1


if __name__ == "__main__":
    raise SystemExit(main())
