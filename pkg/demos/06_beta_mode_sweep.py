"""Hyperparameter harness: merge weight beta and prompt strategy.

Merged mode queries the segmenter once per prompt and combines masks as
fg - beta * max(bg); single-combined mode sends all prompts in one call
(oracle only; the wire protocol is one prompt per request).

Run:  python demos/06_beta_mode_sweep.py
"""

import tempfile
from pathlib import Path

from boxlift import (OracleNoise, PipelineConfig, PromptMode, SegmenterConfig,
                     SynthConfig, generate_scene, run_sweep, save_scene_bundle)
from boxlift.pipeline import sweep_to_csv

scene = generate_scene(SynthConfig(seed=31))

with tempfile.TemporaryDirectory() as tmp:
    bundle = Path(tmp) / "scene"
    save_scene_bundle(scene, bundle)
    cfg = PipelineConfig(bundle=bundle,
                         segmenter=SegmenterConfig(
                             oracle_noise=OracleNoise(morph=1, jitter=0.1,
                                                      mislabel=0.05, seed=3)))
    rows = run_sweep(cfg, lambdas=[0.1], betas=[0.2, 0.5, 0.8], seeds=[1],
                     modes=[PromptMode.MERGED, PromptMode.SINGLE_COMBINED])

    print(f"{'beta':>6} {'mode':>16} {'wrong':>7} {'ap50':>7} {'ap25':>7}")
    for row in rows:
        print(f"{row['beta']:>6.1f} {row['mode']:>16} "
              f"{row['refined_wrong_points']:>7d} "
              f"{row['refined_ap50']:>7.3f} {row['refined_ap25']:>7.3f}")

    print("\nfull table as CSV:\n")
    print(sweep_to_csv(rows))
