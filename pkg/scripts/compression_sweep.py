#!/usr/bin/env python3
"""Compression-ratio sweep for compressed distributed SGD.

Runs the ring form at several keep probabilities and reports how the
per-iteration communication time falls with the ratio while the latency
term keeps a floor under it, alongside the optimization criterion.

    python scripts/compression_sweep.py --T 400 --workers 8
"""

import argparse
import json
from fractions import Fraction
from pathlib import Path

from sgdlab import make_objective
from sgdlab.compression import identity, sparsifier
from sgdlab.harness import SummaryTable
from sgdlab.netsim import NetworkParams, as_fraction
from sgdlab.trainers import TrainerConfig, run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--T", type=int, default=400)
    parser.add_argument("--workers", type=int, default=8)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lat", default="0.5")
    parser.add_argument("--tr", default="0.01")
    parser.add_argument("--ratios", nargs="+", type=float, default=[1.0, 0.5, 0.25, 0.125])
    parser.add_argument("--out", default="out/compression")
    args = parser.parse_args()

    obj = make_objective(n_samples=64, dim=args.dim, seed=1234, noise_scale=0.4)
    net = NetworkParams(as_fraction(args.lat), as_fraction(args.tr), args.workers)
    table = SummaryTable()
    latency_floor = 2 * (args.workers - 1) * net.t_latency
    for ratio in args.ratios:
        comp = identity() if ratio == 1.0 else sparsifier(ratio)
        # theorem step size: the measured compression variance enters the
        # rate, so aggressive sparsification slows the schedule down
        # instead of diverging
        metrics = run(
            TrainerConfig(
                algorithm="csgd",
                implementation="ps",
                iterations=args.T,
                n_workers=args.workers,
                batch_size=1,
                gamma="auto",
                seed=args.seed,
                compressor=comp,
                network=net,
            ),
            obj,
        )
        per_iter = metrics.total_sim_time / args.T
        table.add(
            {"eta": ratio, "per_iter_time": str(per_iter), "above_latency_floor": per_iter > latency_floor},
            metrics,
        )

    print(table.render())
    print(f"latency floor per iteration: {latency_floor}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "compression_sweep.json").write_text(table.to_json() + "\n")
    print(f"wrote {out_dir}/compression_sweep.json")


if __name__ == "__main__":
    main()
