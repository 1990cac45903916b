"""Mining and aggregation ablation on crowded noisy scenes; prints a CSV table.

    python scripts/ablation_table.py --scenes 30 --jobs 8
"""

import argparse
import os
import sys

from kernelseg.pipeline import ablation_csv, run_ablation
from kernelseg.regimes import CROWDED_PIPELINE, CROWDED_SCENE, calibration_scenes, mining_ablation
from kernelseg.scene import generate_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", help="also write the CSV here")
    args = ap.parse_args()

    variants = mining_ablation(CROWDED_PIPELINE, calibration_scenes())
    for name, cfg in variants.items():
        print(f"# {name}: beta0={cfg.beta0} beta1={cfg.beta1}", file=sys.stderr)
    scenes = [generate_scene(CROWDED_SCENE, args.seed + i) for i in range(args.scenes)]
    text = ablation_csv(run_ablation(variants, scenes, jobs=args.jobs))
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)


if __name__ == "__main__":
    main()
