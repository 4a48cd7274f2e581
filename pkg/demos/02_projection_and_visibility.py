"""Pinhole projection and depth-tested visibility.

Every view carries a depth map rendered from the points themselves, so a
point is visible exactly when nothing nearer occupies its pixel.

Run:  python demos/02_projection_and_visibility.py
"""

import numpy as np

from boxlift import (SynthConfig, generate_scene, project_point, render_gt,
                     visible_mask)

scene = generate_scene(SynthConfig(seed=7, object_count=3, view_count=8))
view = scene.views[0]

# single-point projection: [u, v, z] = K P [X; 1], pixel = (u/z, v/z)
sample = scene.points[scene.gt_labels == 1][0]
proj = project_point(sample, view)
print(f"point {np.round(sample, 2).tolist()} -> pixel "
      f"({proj.pixel_x:.1f}, {proj.pixel_y:.1f}), depth {proj.cam_depth:.2f} m, "
      f"in frame: {proj.in_frame}")

# visibility statistics per view: occlusion and the camera frustum both bite
print("\nvisible fraction per view (instance 1):")
pts = scene.points[scene.gt_labels == 1]
for v in scene.views:
    vis = visible_mask(pts, v)
    print(f"  view {v.id:2d}: {vis.mean():6.1%}")

# the ground-truth renderer splats points with a z-buffer; its label image
# is what the oracle segmenter answers prompts from
labels_img, depth_img = render_gt(scene, view)
hit = labels_img >= 0
print(f"\nrendered view {view.id}: {hit.sum()} instance pixels, "
      f"depth range [{depth_img[depth_img > 0].min():.2f}, {depth_img.max():.2f}] m")
