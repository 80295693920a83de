#!/usr/bin/env python3
"""Closed-form vs simulated communication costs for every collective.

Sweeps worker counts and vector sizes, checks the two cost routes agree
exactly in rational arithmetic, and writes the table as JSON/CSV.

    python scripts/cost_table.py --lat 1.5 --tr 0.2 --out out/costs
"""

import argparse
import csv
import json
from pathlib import Path

from sgdlab import collectives
from sgdlab.netsim import NetworkParams, as_fraction, makespan


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--lat", default="1.5", help="per-message latency")
    parser.add_argument("--tr", default="0.2", help="transfer time per unit")
    parser.add_argument("--workers", type=int, nargs="+", default=[2, 4, 8, 16])
    parser.add_argument("--sizes", nargs="+", default=["1", "4", "64"])
    parser.add_argument("--out", default="out/costs", help="output directory")
    args = parser.parse_args()

    params = NetworkParams(as_fraction(args.lat), as_fraction(args.tr), 2)
    rows = []
    for w in args.workers:
        for size_text in args.sizes:
            size = as_fraction(size_text)
            for kind in collectives.KINDS:
                if kind == collectives.DECENTRALIZED_RING and w < 3:
                    continue
                formula = collectives.closed_form_cost(kind, w, size, params)
                simulated = makespan(
                    collectives.simulate_round(
                        kind, w, params, part_sizes=[size / w] * w, vector_size=size
                    )
                )
                rows.append(
                    {
                        "collective": kind,
                        "workers": w,
                        "size": str(size),
                        "closed_form": str(formula),
                        "simulated": str(simulated),
                        "exact_match": formula == simulated,
                    }
                )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "cost_table.json").write_text(json.dumps(rows, indent=2) + "\n")
    with open(out_dir / "cost_table.csv", "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    mismatches = [r for r in rows if not r["exact_match"]]
    print(f"{len(rows)} cases, {len(mismatches)} mismatches -> {out_dir}/cost_table.csv")
    for row in mismatches:
        print("  MISMATCH:", row)
    return 1 if mismatches else 0


if __name__ == "__main__":
    raise SystemExit(main())
