import math

import numpy as np
import pytest

from boxlift.camera import render_gt
from boxlift.scene import BACKGROUND, CameraView, InstanceBox, Scene
from boxlift.superpoints import SegParams, compute_superpoints
from boxlift.synth import SynthConfig, generate_suite


def simple_view(view_id=0, width=128, height=96, focal=100.0,
                eye=(0.0, 0.0, 0.0), look=(0.0, 0.0, 1.0)) -> CameraView:
    """Camera at `eye` looking along `look` (world up = +z unless parallel)."""
    z = np.asarray(look, dtype=np.float64)
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    if abs(z @ up) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    t = -R @ np.asarray(eye, dtype=np.float64)
    K = np.array([[focal, 0, width / 2], [0, focal, height / 2], [0, 0, 1]],
                 dtype=np.float32)
    return CameraView(id=view_id, width=width, height=height, K=K,
                      P=np.concatenate([R, t[:, None]], axis=1).astype(np.float32))


def tiny_scene() -> Scene:
    """Three labeled points, one view with rendered depth, one box."""
    points = np.array([[0.0, 0.0, 2.0], [0.1, 0.0, 2.0], [0.0, 0.1, 2.0]],
                      dtype=np.float32)
    normals = np.tile(np.array([0, 0, 1], dtype=np.float32), (3, 1))
    scene = Scene(points=points, normals=normals,
                  colors=np.full((3, 3), 0.5, dtype=np.float32),
                  gt_labels=np.array([1, 1, BACKGROUND], dtype=np.int32))
    view = simple_view()
    _, depth = render_gt(scene, view, footprint=3)
    view.depth = depth
    scene.views = [view]
    scene.boxes = [InstanceBox(instance_id=1, semantic_class=7,
                               c_min=np.array([0, 0, 2], dtype=np.float32),
                               c_max=np.array([0.1, 0, 2], dtype=np.float32))]
    return scene


def box_around(lo, hi, instance_id=1, semantic=1) -> InstanceBox:
    return InstanceBox(instance_id=instance_id, semantic_class=semantic,
                       c_min=np.asarray(lo, dtype=np.float32),
                       c_max=np.asarray(hi, dtype=np.float32))


def _rect_points(origin, u_vec, v_vec, normal, nu, nv):
    """Deterministic grid sampling of a rectangle."""
    origin = np.asarray(origin, dtype=np.float64)
    u_vec = np.asarray(u_vec, dtype=np.float64)
    v_vec = np.asarray(v_vec, dtype=np.float64)
    uu, vv = np.meshgrid((np.arange(nu) + 0.5) / nu, (np.arange(nv) + 0.5) / nv)
    pts = origin + uu.reshape(-1, 1) * u_vec + vv.reshape(-1, 1) * v_vec
    nrm = np.tile(np.asarray(normal, dtype=np.float64), (pts.shape[0], 1))
    return pts, nrm


def leakage_scene():
    """Hand-built fixture: one cuboid instance, one diagonal background panel
    right beside it, and a box enlarged far enough to swallow the panel.

    Returns (scene, enlarged_box).  The panel sits 2.5 cm off the +x face so
    a few-pixel mask dilation bleeds onto its nearest pixels.
    """
    parts = []
    # floor 3 x 3
    parts.append(_rect_points([0, 0, 0], [3, 0, 0], [0, 3, 0], [0, 0, 1], 45, 45))
    labels = [np.full(parts[0][0].shape[0], BACKGROUND, dtype=np.int32)]

    lo, hi = np.array([1.2, 1.3, 0.0]), np.array([1.6, 1.7, 0.45])
    faces = [
        ([lo[0], lo[1], 0], [hi[0] - lo[0], 0, 0], [0, 0, hi[2]], [0, -1, 0]),
        ([lo[0], hi[1], 0], [hi[0] - lo[0], 0, 0], [0, 0, hi[2]], [0, 1, 0]),
        ([lo[0], lo[1], 0], [0, hi[1] - lo[1], 0], [0, 0, hi[2]], [-1, 0, 0]),
        ([hi[0], lo[1], 0], [0, hi[1] - lo[1], 0], [0, 0, hi[2]], [1, 0, 0]),
        ([lo[0], lo[1], hi[2]], [hi[0] - lo[0], 0, 0], [0, hi[1] - lo[1], 0], [0, 0, 1]),
    ]
    for origin, u, v, n in faces:
        pts, nrm = _rect_points(origin, u, v, n, 14, 14)
        parts.append((pts, nrm))
        labels.append(np.full(pts.shape[0], 1, dtype=np.int32))

    # diagonal background panel 2.5 cm off the +x face
    gap = 0.025
    n = np.array([math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0])
    u = np.array([-n[1], n[0], 0.0]) * 0.30
    center = np.array([hi[0] + gap, (lo[1] + hi[1]) / 2, 0.0])
    pts, nrm = _rect_points(center - u / 2, u, [0, 0, 0.40], n, 12, 14)
    parts.append((pts, nrm))
    labels.append(np.full(pts.shape[0], BACKGROUND, dtype=np.int32))

    points = np.concatenate([p for p, _ in parts]).astype(np.float32)
    normals = np.concatenate([m for _, m in parts]).astype(np.float32)
    scene = Scene(points=points, normals=normals,
                  gt_labels=np.concatenate(labels))

    views = []
    target = (lo + hi) / 2
    for vid in range(4):
        az = 2 * math.pi * vid / 4 + math.pi / 8
        eye = target + [1.8 * math.cos(az), 1.8 * math.sin(az), 1.2]
        view = simple_view(view_id=vid, width=256, height=192, focal=200.0,
                           eye=eye, look=target - eye)
        _, depth = render_gt(scene, view, footprint=3)
        view.depth = depth
        views.append(view)
    scene.views = views
    scene.superpoints = compute_superpoints(scene.points, SegParams(),
                                            normals=scene.normals)
    scene.boxes = [box_around(lo, hi)]
    enlarged = box_around(lo - 0.05, hi + [0.35, 0.05, 0.05])
    return scene, enlarged


SUITE_SEED = 100
SUITE_SIZE = 20


@pytest.fixture(scope="session")
def scene_suite(tmp_path_factory):
    """The 20-scene acceptance suite (>= 2000 points, >= 3 objects, 12 views)."""
    root = tmp_path_factory.mktemp("suite")
    cfg = SynthConfig(seed=SUITE_SEED)
    return generate_suite(SUITE_SIZE, cfg, SUITE_SEED, root)


@pytest.fixture(scope="session")
def small_bundle(tmp_path_factory):
    """One small synthetic bundle for fast pipeline-level tests."""
    root = tmp_path_factory.mktemp("small")
    cfg = SynthConfig(seed=7, object_count=3, view_count=8)
    return generate_suite(1, cfg, 7, root)[0]
