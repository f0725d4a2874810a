"""Share of pseudo-group placebo runs whose 95% CI contains zero under a null DGP.

Usage: python3 scripts/placebo_coverage.py [--seeds 200] [--ratio 0.5]
"""

import argparse
import json
import sys

import numpy as np

from fundingiv.robustness import placebo_run
from fundingiv.specification import ModelSpec
from fundingiv.synthgen import DgpConfig, generate


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--ratio", type=float, default=0.5)
    ap.add_argument("--n-scholars", type=int, default=200)
    ap.add_argument("--n-years", type=int, default=10)
    ap.add_argument("--true-effect", type=float, default=0.0)
    args = ap.parse_args(argv)

    spec = ModelSpec(outcomes=("y",), treatment="d", instruments=("z1", "z2", "z3"),
                     controls=("x1", "x2", "x3"), initial_performance=False)
    contains = {"treated": [], "control": []}
    pvalues = {"treated": [], "control": []}
    errors = 0
    for seed in range(args.seeds):
        cfg = DgpConfig(n_scholars=args.n_scholars, n_years=args.n_years, true_beta1=args.true_effect,
                        treatment_kind="binary_threshold", treatment_threshold=1.0, scholar_effect_sd=1.0,
                        control_count=3, seed=seed)
        run = placebo_run(generate(cfg).frame, spec, seed, args.ratio, with_diagnostics=False)
        errors += len(run.errors)
        for sub, res in run.results.items():
            if "y" in res:
                lo, hi = res["y"].conf_int("d")
                contains[sub].append(lo <= 0.0 <= hi)
                pvalues[sub].append(res["y"].pvalue("d"))
    out = {
        "seeds": args.seeds,
        "errors": errors,
        "ci_contains_zero": {k: float(np.mean(v)) for k, v in contains.items()},
        "median_p": {k: float(np.median(v)) for k, v in pvalues.items()},
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
