"""Kernel lengths and noiseless mAP for the decoder shapes of the kernel-size study.

    python scripts/kernel_shapes.py
"""

import argparse
import os

from kernelseg.kernels import DecoderShape, kernel_length
from kernelseg.pipeline import PipelineConfig, run_scenes
from kernelseg.scene import SceneConfig, generate_scene

SHAPES = ((8, 1), (16, 1), (16, 8, 1), (16, 16, 1))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", type=int, default=20)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    scenes = [generate_scene(SceneConfig(n_instances=(5, 15)), s) for s in range(args.scenes)]
    print(f"{'channels':>12} {'L (D=16)':>9} {'L (D=32)':>9} {'mAP':>7}")
    for ch in SHAPES:
        l16 = kernel_length(DecoderShape.for_features(16, ch))
        l32 = kernel_length(DecoderShape.for_features(32, ch))
        run = run_scenes(scenes, PipelineConfig(aggregation="oracle", channels=ch), jobs=args.jobs)
        print(f"{str(list(ch)):>12} {l16:>9} {l32:>9} {run.report.mAP:>7.4f}")


if __name__ == "__main__":
    main()
