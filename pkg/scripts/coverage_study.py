"""Interval coverage of the sampler on networks simulated from the prior.

    python3 scripts/coverage_study.py --n 30 --reps 10
"""
import argparse
import json

import numpy as np

from influnet.mcmc import SamplerConfig
from influnet.model import Hyperparams
from influnet.ppc import coverage_experiment, sample_prior_state


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--draws", type=int, default=1000)
    ap.add_argument("--warmup", type=int, default=1000)
    ap.add_argument("--level", type=float, default=0.95)
    ap.add_argument("--hyper", type=float, nargs=4, default=[3.0, 2.0, 3.0, 2.0],
                    metavar=("A_OMEGA", "B_OMEGA", "A_SIGMA", "B_SIGMA"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    hyper = Hyperparams(*args.hyper)
    rows = []
    for r in range(args.reps):
        rng = np.random.default_rng([args.seed, r])
        truth = sample_prior_state(args.n, args.p, hyper, rng)
        cfg = SamplerConfig(n_samples=args.draws, warmup=args.warmup, p=args.p,
                            seed=int(rng.integers(2 ** 63)))
        res = coverage_experiment(truth, hyper, cfg, args.level, rng)
        rows.append(res)
        print(f"rep {r}: edges={res['n_edges']} O={res['coverage_O']:.3f} u={res['coverage_u']:.3f}")
    summary = {k: float(np.mean([x[k] for x in rows])) for k in ("coverage_O", "coverage_u")}
    print(f"mean coverage: O={summary['coverage_O']:.3f} u={summary['coverage_u']:.3f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"summary": summary, "replicates": rows}, fh, indent=2, default=float)


if __name__ == "__main__":
    main()
