"""Run one experiment from a TOML config and write its artifacts.

    python scripts/run_experiment.py scripts/experiment.toml --out runs/seed0
"""

import argparse
import time

from pvhybrid import pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", default="runs/latest")
    args = ap.parse_args()
    t0 = time.perf_counter()
    result = pipeline.run_experiment(pipeline.load_config(args.config), args.out)
    print(result.table.to_text())
    print(result.summary())
    print(f"wrote {args.out} in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
