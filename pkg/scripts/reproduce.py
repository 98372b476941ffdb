"""Run every config in scripts/configs and write the outputs under one directory.

    python scripts/reproduce.py --out results --workers 4
    python scripts/reproduce.py --only figure1_density figure2_rate_curves
"""

import argparse
import json
import time
from pathlib import Path

from pgrad.experiments import load_config, run_experiment
from pgrad.io import _jsonable

CONFIG_DIR = Path(__file__).resolve().parent / "configs"


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default="results")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--only", nargs="*", help="config names without the .toml suffix")
    args = parser.parse_args()

    configs = sorted(CONFIG_DIR.glob("*.toml"))
    if args.only:
        configs = [c for c in configs if c.stem in set(args.only)]
    for path in configs:
        out = Path(args.out) / path.stem
        config = load_config(path, out=str(out), workers=args.workers, seed=args.seed)
        t0 = time.perf_counter()
        summary = run_experiment(config)
        print(f"{path.stem}: {time.perf_counter() - t0:.1f}s -> {out}")
        print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
