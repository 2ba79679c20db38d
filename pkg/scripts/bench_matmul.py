"""Matmul timing for emulated half versus host single/double."""
import argparse
import sys

from mixprec import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="30,60,100,150,200,300,400")
    ap.add_argument("--repetitions", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = bench.BenchConfig(sizes=[int(s) for s in args.sizes.split(",")], repetitions=args.repetitions,
                            seed=args.seed)
    recs = bench.run_bench(cfg)
    text = bench.records_csv(recs)
    if args.out:
        open(args.out, "w").write(text)
    else:
        sys.stdout.write(text)
    med = {(r.format, r.N): r.median_s for r in recs}
    for n in cfg.sizes:
        print(f"N={n:4d}  half/single = {med['half', n] / med['single', n]:6.1f}x", file=sys.stderr)


if __name__ == "__main__":
    main()
