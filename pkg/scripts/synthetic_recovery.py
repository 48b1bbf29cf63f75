"""Monte Carlo coverage of fitted OLS confidence intervals on synthetic data."""

import argparse

import numpy as np

from pipecond.mlr import fit_ols
from pipecond.numeric import derive_seed
from pipecond.preprocess import assemble_design
from pipecond.synth import FEATURE_ORDER, PUBLISHED_COEFFICIENTS, GeneratorConfig, generate


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--replications", type=int, default=200)
    p.add_argument("--n", type=int, default=612)
    p.add_argument("--confidence", type=float, default=0.99)
    p.add_argument("--seed", type=int, default=42)
    args = p.parse_args()

    beta = np.asarray(PUBLISHED_COEFFICIENTS)
    hits = np.zeros(len(beta), dtype=int)
    for i in range(args.replications):
        t = generate(GeneratorConfig(n=args.n, seed=derive_seed(args.seed, i)))
        fit = fit_ols(assemble_design(t).X, t.numeric("PACPRATING"), args.confidence)
        hits += (fit.ci_low <= beta) & (beta <= fit.ci_high)
    for name, h in zip(("Intercept",) + FEATURE_ORDER, hits):
        print(f"{name:10s} {h:4d}/{args.replications}  ({100 * h / args.replications:.1f}%)")


if __name__ == "__main__":
    main()
