"""Repeat the benchmark experiment over several seeds and tabulate test scores.

    python scripts/seed_sweep.py scripts/experiment.toml --seeds 20 --out runs/sweep.csv
"""

import argparse
import dataclasses
import time

from pvhybrid import pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--no-cv", action="store_true", help="skip cross-validation for speed")
    ap.add_argument("--out", help="CSV of per-seed scores")
    args = ap.parse_args()

    rows = ["seed,sr_rmse,mlp_rmse,hybrid_rmse,sr_mae,mlp_mae,hybrid_mae,hybrid_r2,convex"]
    t0 = time.perf_counter()
    for seed in range(args.seeds):
        cfg = pipeline.load_config(args.config)
        cfg.data = dataclasses.replace(cfg.data, synthetic_seed=seed)
        cfg.gp = {**cfg.gp, "seed": seed}
        cfg.mlp = dataclasses.replace(cfg.mlp, seed=seed)
        if args.no_cv:
            cfg.eval = dataclasses.replace(cfg.eval, cv_folds=0)
        t = pipeline.run_experiment(cfg).table
        rows.append(
            f"{seed},{t.sr.rmse:.6f},{t.mlp.rmse:.6f},{t.hybrid.rmse:.6f},"
            f"{t.sr.mae:.6f},{t.mlp.mae:.6f},{t.hybrid.mae:.6f},{t.hybrid.r2:.6f},{t.convexity_holds()}"
        )
        print(rows[-1], flush=True)
    print(f"{args.seeds} seeds in {time.perf_counter() - t0:.0f}s")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
