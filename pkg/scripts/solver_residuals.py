"""Residual history of the hybrid solver for several replica counts and noise levels."""
import argparse

import numpy as np

from mixprec import linalg, pcm
from mixprec.fixed import make_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--K", default="1,4,16")
    ap.add_argument("--sigmas", default="0,0.01,0.02,0.05", help="write noise; read noise is half of it")
    ap.add_argument("--matrix", help="optional matrix CSV (double) to use instead of a random SPD matrix")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = make_rng(args.seed)
    A = linalg.read_matrix(args.matrix).values if args.matrix else pcm.random_spd(args.n, rng)
    b = A @ rng.standard_normal(A.shape[0])
    print("K,write_sigma,iteration,relative_residual")
    for K in (int(k) for k in args.K.split(",")):
        for s in (float(v) for v in args.sigmas.split(",")):
            model = pcm.PcmDeviceModel(s, s / 2)
            res = pcm.mixed_precision_solve(A, b, K, model, make_rng([args.seed, K]))
            for i, r in enumerate(res.residual_history):
                print(f"{K},{s},{i},{r:.17g}")
            coarse = pcm.analog_only_solve(A, b, K, model, make_rng([args.seed, K]))
            err = np.linalg.norm(coarse - np.linalg.solve(A, b)) / np.linalg.norm(np.linalg.solve(A, b))
            print(f"# K={K} sigma={s}: {res.iterations} outer, analog-only error {err:.3g}",
                  flush=True)


if __name__ == "__main__":
    main()
