"""Run every seeded experiment at desk scale and write CSV tables plus a JSON summary.

Usage: python3 scripts/run_all_experiments.py [--out results] [--trials 50] [--seed 0] [--workers 1]
"""

import argparse
import dataclasses
import json
import time
from pathlib import Path

from segre import experiments as ex
from segre.normed_space import SpaceSpec
from segre.serialize import atomic_write, dumps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    l2, l1, linf = SpaceSpec.lp(2), SpaceSpec.lp(2, 1.0), SpaceSpec.lp(2, float("inf"))

    def config(spaces, name, **kw):
        return ex.ExperimentConfig(tuple(spaces), experiment=name, seed=args.seed, workers=args.workers,
                                   **{"trials": args.trials, **kw})

    summary = {}
    runs = {
        "equivalence_l2_r1": (ex.run_equivalence_trial, config([l2] * 3, "equivalence", r=1), "ratio_upper"),
        "equivalence_l2_r2": (ex.run_equivalence_trial, config([l2] * 3, "equivalence", r=2), "ratio_upper"),
        "equivalence_mixed_r1": (ex.run_equivalence_trial, config([l1, l2, linf], "equivalence", r=1),
                                 "ratio_upper"),
        "subspace_l2": (ex.subspace_bound_trial, config([l2] * 3, "subspace"), "ratio_lower"),
        "subspace_l1_linf": (ex.subspace_bound_trial, config([l1, linf, SpaceSpec.lp(3, 1.0)], "subspace"),
                             "ratio_lower"),
        "closedness_4x4_r2": (ex.matrix_closedness_demo, config([SpaceSpec.lp(4)] * 2, "closedness", r=2), None),
    }
    for name, (fn, cfg, key) in runs.items():
        start = time.perf_counter()
        trials = fn(cfg)
        atomic_write(out / f"{name}.csv", ex.to_csv(ex.trial_rows(trials)))
        summary[name] = {**ex.summary(trials, key), "seconds": round(time.perf_counter() - start, 2)}
        extra = f" max {key}={summary[name]['max_ratio']}" if key else ""
        print(f"{name}: {summary[name]['verdict_counts']}{extra}")

    sig = ex.estimate_sigma_r(config([l2] * 3, "sigma-r", r_max=3, trials=max(1, args.trials // 5)))
    atomic_write(out / "sigma_r_l2.csv", ex.to_csv([dataclasses.asdict(r) for r in sig.table]))
    summary["sigma_r_l2"] = {"table": [dataclasses.asdict(r) for r in sig.table]}
    print("sigma-r:", [(r.r, round(r.lower, 6), r.source) for r in sig.table])

    border = ex.border_rank_experiment(config([l2] * 3, "border", trials=1))
    atomic_write(out / "border_w.csv", ex.to_csv([dataclasses.asdict(r) for r in border.rows]))
    summary["border_w"] = {"halving_ratios": list(border.halving_ratios),
                           "limit_rank": [border.limit_lower, border.limit_upper],
                           "border_suspected": list(border.border_suspected)}
    print("border: last halving ratio", border.halving_ratios[-1], "limit rank",
          (border.limit_lower, border.limit_upper))

    atomic_write(out / "summary.json", dumps(json.loads(json.dumps(summary))))
    print(f"wrote {out}/")


if __name__ == "__main__":
    main()
