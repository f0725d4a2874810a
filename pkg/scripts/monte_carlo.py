"""Monte Carlo study of the 2SLS estimator and the IV diagnostics.

Usage: python3 scripts/monte_carlo.py [--reps 200] [--n-scholars 500] [--out results.json]
"""

import argparse
import json
import sys
import time

from fundingiv.synthgen import DgpConfig, gamma_for_first_stage_f, monte_carlo

SCENARIOS = {
    "estimator": (dict(rho=0.5), ("ols", "tsls"), ()),
    "dwh_null": (dict(rho=0.0), (), ("dwh",)),
    "dwh_alt": (dict(rho=0.5), (), ("dwh",)),
    "hansen_valid": (dict(), (), ("hansen_j",)),
    "hansen_one_invalid": (dict(instrument_validity=(False, True, True)), (), ("hansen_j",)),
    "kp_pure_noise": (dict(gamma=(0.0, 0.0, 0.0)), (), ("kp_rk_lm",)),
    "strong": (dict(), (), ("cragg_donald", "first_stage_f")),
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--n-scholars", type=int, default=250)
    ap.add_argument("--n-years", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--weak-f", type=float, default=5.0, help="target population first-stage F of the weak scenario")
    ap.add_argument("--only", nargs="*", help="subset of scenarios")
    ap.add_argument("--out", help="write JSON here instead of stdout")
    args = ap.parse_args(argv)

    n = args.n_scholars * args.n_years
    scenarios = dict(SCENARIOS)
    scenarios["weak"] = (dict(gamma=gamma_for_first_stage_f(args.weak_f, n)), (), ("cragg_donald", "first_stage_f"))
    names = args.only or list(scenarios)
    results = {}
    for i, name in enumerate(names):
        overrides, estimators, diagnostics = scenarios[name]
        cfg = DgpConfig(n_scholars=args.n_scholars, n_years=args.n_years, seed=args.seed + i, **overrides)
        t0 = time.perf_counter()
        summary = monte_carlo(cfg, args.reps, estimators=estimators, diagnostics=diagnostics)
        results[name] = {**summary.to_dict(), "seconds": round(time.perf_counter() - t0, 2), "n": n}
        print(f"{name}: done in {results[name]['seconds']}s", file=sys.stderr)
    text = json.dumps(results, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
