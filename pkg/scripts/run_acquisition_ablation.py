#!/usr/bin/env python3
"""Run the acquisition comparison grid on the synthetic pool.

Defaults reproduce the headline setting: 2000 candidates, batches of 100
over 20 iterations, 256 posterior draws, 5 matched seeds per acquisition.
"""
import argparse
import os
import time

from poolbo.bench import BenchSpec, make_ablation_pool, run_bench


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pool", default="ablation_pool.csv",
                        help="pool CSV; built here if missing")
    parser.add_argument("--out", default="ablation_results")
    parser.add_argument("--iterations", type=int, default=20)
    parser.add_argument("--batch-size", type=int, default=100)
    parser.add_argument("--init-size", type=int, default=100)
    parser.add_argument("--mc-samples", type=int, default=256)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--acquisitions", nargs="+",
                        default=["qpmhi", "qehvi_mc", "thompson", "random"])
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    if not os.path.exists(args.pool):
        meta = make_ablation_pool(args.pool)
        print(f"built pool: front size {meta['front_size']} at mixing {meta['alpha']:.2f}")

    spec = BenchSpec(
        pool_path=args.pool,
        output_dir=args.out,
        batch_size=args.batch_size,
        init_size=args.init_size,
        acquisitions=tuple(args.acquisitions),
        seeds=tuple(args.seeds),
        iterations=args.iterations,
        mc_samples=args.mc_samples,
    )
    start = time.time()
    result = run_bench(spec, workers=args.workers)
    elapsed = time.time() - start

    final = {}
    for row in result["summary"]:
        if row["iteration"] == spec.iterations:
            final[row["acquisition"]] = row
    print(f"\nfinal iteration ({spec.iterations}) across {len(spec.seeds)} seeds:")
    for acq in spec.acquisitions:
        row = final[acq]
        print(
            f"  {acq:<10} hv {row['mean_hv']:.6f} +- {row['ci95_hv']:.6f}   "
            f"front recovered {row['mean_fraction']:.3f} +- {row['ci95_fraction']:.3f}"
        )
    print(f"\nsummary: {result['summary_path']}")
    print(f"total runtime: {elapsed / 60.0:.1f} min")


if __name__ == "__main__":
    main()
