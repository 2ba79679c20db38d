"""Scalar multiplication error on simulated PCM for a sweep of replica counts.

Writes per-trial errors and a summary; prints the std ratios against K=1.
"""
import argparse
from pathlib import Path

from mixprec import pcm
from mixprec.fixed import make_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", default="1,2,4,8,16,32")
    ap.add_argument("--trials", type=int, default=1024)
    ap.add_argument("--write-sigma", type=float, default=0.02)
    ap.add_argument("--read-sigma", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    model = pcm.PcmDeviceModel(args.write_sigma, args.read_sigma)
    rng = make_rng(args.seed)
    results = [pcm.scalar_experiment(int(k), model, rng, args.trials) for k in args.K.split(",")]
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pcm_scalar_trials.csv").write_text(pcm.scalar_csv(results))
    (out / "pcm_scalar_summary.csv").write_text(pcm.scalar_summary_csv(results))
    s1 = results[0].std
    for r in results:
        print(f"K={r.K:3d}  mean={r.mean:+.2e}  std={r.std:.3e}  std(K1)/std={s1 / r.std:5.2f}"
              f"  sqrt(K/K1)={(r.K / results[0].K) ** 0.5:5.2f}")


if __name__ == "__main__":
    main()
