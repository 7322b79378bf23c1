#!/usr/bin/env python3
"""Build the synthetic labeled pool used by the acquisition ablation."""
import argparse

from poolbo.bench import make_ablation_pool


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="destination CSV path")
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--bits", type=int, default=24)
    parser.add_argument("--seed", type=int, default=20240301)
    parser.add_argument("--front-min", type=int, default=20)
    parser.add_argument("--front-max", type=int, default=60)
    args = parser.parse_args()
    meta = make_ablation_pool(
        args.out, n=args.n, bits=args.bits, seed=args.seed,
        front_range=(args.front_min, args.front_max),
    )
    print(
        f"wrote {meta['path']}: {meta['n']} candidates, {meta['bits']} bits, "
        f"mixing={meta['alpha']:.2f}, true front size {meta['front_size']}"
    )


if __name__ == "__main__":
    main()
