"""AP@50 as one noise source is swept while the others stay at the crowded-regime values.

    python scripts/noise_sweep.py --param sigma_offset --values 0 0.05 0.15 0.3
"""

import argparse
import dataclasses
import os

from kernelseg.pipeline import run_scenes
from kernelseg.regimes import CROWDED_NOISE, CROWDED_PIPELINE, CROWDED_SCENE, calibrated, calibration_scenes
from kernelseg.scene import generate_scene

PARAMS = ("sigma_offset", "sigma_heatmap", "semantic_flip_prob", "sigma_feature")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--param", choices=PARAMS, default="sigma_offset")
    ap.add_argument("--values", type=float, nargs="+", default=[0.0, 0.05, 0.15, 0.30])
    ap.add_argument("--scenes", type=int, default=20)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    base = calibrated(CROWDED_PIPELINE, calibration_scenes())
    scenes = [generate_scene(CROWDED_SCENE, s) for s in range(args.scenes)]
    print(f"{args.param:>18} {'AP50':>8} {'mAP':>8} {'mean_inst':>10}")
    for v in args.values:
        cfg = base.replace(noise=dataclasses.replace(CROWDED_NOISE, **{args.param: v}))
        run = run_scenes(scenes, cfg, jobs=args.jobs)
        n_inst = sum(len(r.instances()) for r in run.results) / len(scenes)
        print(f"{v:>18.3f} {run.report.AP50:>8.4f} {run.report.mAP:>8.4f} {n_inst:>10.2f}")


if __name__ == "__main__":
    main()
