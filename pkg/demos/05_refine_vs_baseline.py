"""The headline comparison: confidence-voted refinement vs the smallest-box
baseline under growing annotation noise.

The baseline hands every candidate point to the smallest covering box, so
background geometry inside enlarged boxes gets mislabeled.  Refinement
projects candidates into selected views, asks the (here: deliberately
corrupted) oracle segmenter with complementary prompts, and votes at the
superpoint level, which filters those leaks out.

Run:  python demos/05_refine_vs_baseline.py
"""

import tempfile
from pathlib import Path

from boxlift import (NoiseConfig, OracleNoise, PipelineConfig, SegmenterConfig,
                     SynthConfig, generate_scene, run_baseline, run_refinement,
                     save_scene_bundle)

scene = generate_scene(SynthConfig(seed=23))
oracle_noise = OracleNoise(morph=1, jitter=0.1, mislabel=0.05, seed=3)

with tempfile.TemporaryDirectory() as tmp:
    bundle = Path(tmp) / "scene"
    save_scene_bundle(scene, bundle)

    header = f"{'lambda':>8} {'refined':>10} {'baseline':>10} {'ap50 r/b':>14}"
    print(header + "\n" + "-" * len(header))
    for lam in (0.0, 0.1, 0.2, 0.3):
        cfg = PipelineConfig(bundle=bundle,
                             noise=NoiseConfig(lam=lam, seed=1),
                             segmenter=SegmenterConfig(oracle_noise=oracle_noise))
        refined = run_refinement(cfg)
        baseline = run_baseline(cfg)
        print(f"{lam:>8.1f} {refined.report.wrong_points:>10d} "
              f"{baseline.report.wrong_points:>10d} "
              f"{refined.report.ap50:>6.3f}/{baseline.report.ap50:.3f}")

    print("\n(wrong points; lower is better. The baseline degrades as boxes "
          "grow, refinement holds.)")
