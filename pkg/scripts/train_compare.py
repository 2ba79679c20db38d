"""Train the same network under several precision policies with paired seeds."""
import argparse
from pathlib import Path

from mixprec import training as T

POLICIES = {
    "float32": T.PrecisionPolicy.float32(),
    "float16_mixed": T.PrecisionPolicy.float16_mixed(4),
    "float16_plain": T.PrecisionPolicy(T.parse_storage("float16"), accumulate_widened=False),
    "fixed_stochastic": T.PrecisionPolicy.fixed(3, 12, "stochastic"),
    "fixed_nearest": T.PrecisionPolicy.fixed(3, 12, "nearest"),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--policies", default=",".join(POLICIES))
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--learning-rate", type=float, default=0.1)
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    data = T.make_separable(1000, 2, seed=1)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in (int(s) for s in args.seeds.split(",")):
        for name in args.policies.split(","):
            pol = POLICIES[name]
            rep = T.train(T.init_model([2, 16, 2], pol, seed=seed), data, pol, args.epochs, seed=seed,
                          learning_rate=args.learning_rate)
            (out / f"train_{name}_seed{seed}.csv").write_text(rep.to_csv())
            flag = " (diverged)" if rep.diverged else ""
            print(f"seed {seed}  {name:17s} acc={rep.final_accuracy:.3f}  loss={rep.loss[-1]:.4f}"
                  f"  flushed={sum(rep.zero_flushed)}{flag}")


if __name__ == "__main__":
    main()
