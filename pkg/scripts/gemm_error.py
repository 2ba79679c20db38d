"""Error of all-half versus float32-accumulate GEMM against the exact product.

Either generates random half matrices or reads two matrix CSV files
(``# format=half rows=m cols=p`` header, comma-separated values).
"""
import argparse

from mixprec import linalg
from mixprec.codec import HALF, SINGLE
from mixprec.fixed import make_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--a")
    ap.add_argument("--b")
    ap.add_argument("--sizes", default="8,16,32,64,128")
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--save-product", help="write the mixed-precision product of --a/--b here")
    args = ap.parse_args()
    policy = linalg.AccumulationPolicy(HALF, SINGLE, SINGLE)

    if args.a and args.b:
        A, B = linalg.read_matrix(args.a), linalg.read_matrix(args.b)
        ref = linalg.gemm_oracle(A, B)
        C = linalg.gemm_mixed(A, B, policy)
        print("mixed  ", linalg.error_norms(C, ref))
        print("uniform", linalg.error_norms(linalg.gemm_uniform(A, B, HALF), ref))
        if args.save_product:
            linalg.write_matrix(C, args.save_product)
        return

    print("N,trial,mixed_frobenius_rel,uniform_frobenius_rel")
    for n in (int(s) for s in args.sizes.split(",")):
        for t in range(args.trials):
            rng = make_rng([n, t])
            A = linalg.Matrix.from_values(rng.random((n, n)), HALF)
            B = linalg.Matrix.from_values(rng.random((n, n)), HALF)
            ref = linalg.gemm_oracle(A, B)
            em = linalg.error_norms(linalg.gemm_mixed(A, B, policy), ref).frobenius_rel
            eu = linalg.error_norms(linalg.gemm_uniform(A, B, HALF), ref).frobenius_rel
            print(f"{n},{t},{em:.17g},{eu:.17g}")


if __name__ == "__main__":
    main()
