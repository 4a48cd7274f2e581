"""Render label images: ground truth vs smallest-box baseline vs refinement.

Writes three PNG panels per selected view into demo_out/, making the leaked
background panels of the baseline directly visible.

Run:  python demos/07_visualize_labels.py
"""

import tempfile
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from boxlift import (BACKGROUND, NoiseConfig, OracleNoise, PipelineConfig,
                     Scene, SegmenterConfig, SynthConfig, generate_scene,
                     render_gt, run_baseline, run_refinement, save_scene_bundle)

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

scene = generate_scene(SynthConfig(seed=33))
oracle_noise = OracleNoise(morph=1, jitter=0.1, mislabel=0.05, seed=3)

with tempfile.TemporaryDirectory() as tmp:
    bundle = Path(tmp) / "scene"
    save_scene_bundle(scene, bundle)
    cfg = PipelineConfig(bundle=bundle, noise=NoiseConfig(lam=0.3, seed=1),
                         segmenter=SegmenterConfig(oracle_noise=oracle_noise))
    refined = run_refinement(cfg)
    baseline = run_baseline(cfg)

print(f"wrong points: baseline {baseline.report.wrong_points}, "
      f"refined {refined.report.wrong_points}")


def label_image(labels: np.ndarray, view) -> np.ndarray:
    """Render arbitrary per-point labels through the gt splatter."""
    shadow = Scene(points=scene.points, gt_labels=labels.astype(np.int32))
    img, _ = render_gt(shadow, view)
    return img


view = scene.views[2]
panels = [
    ("ground truth", scene.gt_labels),
    ("smallest-box baseline", baseline.labels),
    ("refined", refined.labels),
]

fig, axes = plt.subplots(1, 3, figsize=(13, 4))
max_label = int(scene.gt_labels.max())
for ax, (title, labels) in zip(axes, panels):
    img = label_image(labels, view)
    shown = np.ma.masked_equal(img, BACKGROUND)
    ax.imshow(np.zeros_like(img), cmap="gray", vmin=0, vmax=1)
    ax.imshow(shown, cmap="tab10", vmin=0, vmax=max(max_label, 9),
              interpolation="nearest")
    wrong = (labels != scene.gt_labels).sum()
    ax.set_title(f"{title}\n({wrong} wrong points)")
    ax.axis("off")
fig.tight_layout()
target = out_dir / "labels_comparison.png"
fig.savefig(target, dpi=110)
print(f"wrote {target}")
