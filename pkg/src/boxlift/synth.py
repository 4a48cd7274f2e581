"""Procedural desk-scale indoor scenes with full ground truth.

A scene is a rectangular room shell (floor, ceiling, walls, all background)
with cuboid, cylinder and L-shaped objects placed in a central zone, sampled
on their surfaces with analytic normals.  L-shaped objects carry thin
diagonal background panels inside their axis-aligned pocket: background
geometry that lies fully inside an instance's tight box, the failure mode
box-driven labeling has to correct.  Cameras orbit the room center; depth
maps are rendered from the points themselves so the scene is
self-consistent, and superpoints are attached after verifying they are
single-instance and observable.

All randomness flows from one counter-based stream per seed, so scenes are
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxnoise import tight_box
from .camera import render_gt, visible_mask, VisibilityTolerance
from .scene import BACKGROUND, CameraView, Scene, save_scene_bundle
from .superpoints import SegParams, compute_superpoints


class GenerationError(RuntimeError):
    """Object placement or scene verification failed after bounded retries."""


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    room: tuple[float, float, float] = (5.0, 5.0, 2.2)
    object_count: int = 4
    points_per_m2: float = 50.0
    view_count: int = 12
    occlusion: bool = False
    image_width: int = 256
    image_height: int = 192
    focal: float = 200.0

    def __post_init__(self):
        if min(self.room) <= 0 or self.object_count < 1 or self.view_count < 1:
            raise ValueError("invalid synthesis configuration")


# Geometry margins, tied to the default superpoint parameters: object gaps
# stay above the kNN reach of dense surfaces so normal-parallel faces of
# different instances never share graph edges.
_MIN_GAP = 0.22
_ZONE_FRAC = 0.40
_MIN_FACE_POINTS = 45
_OBJECT_DENSITY = 250.0  # per m^2 floor on object/panel surfaces
_FOOT_MARGIN = 0.12      # scan shadow: no floor points this close to objects
_MAX_ATTEMPTS = 10
_CAM_HEIGHT = 1.5
_LOOKAT_HEIGHT = 0.45


@dataclass
class _Patch:
    """One planar or curved surface patch to sample."""

    area: float
    sampler: object  # rng, count -> (points (n,3), normals (n,3))
    label: int       # instance id or BACKGROUND
    semantic: int
    min_density: float = 0.0  # floor for points/m^2 on this patch


def _rect_patch(origin, u_vec, v_vec, normal, label, semantic,
                min_density=_OBJECT_DENSITY) -> _Patch:
    origin = np.asarray(origin, dtype=np.float64)
    u_vec = np.asarray(u_vec, dtype=np.float64)
    v_vec = np.asarray(v_vec, dtype=np.float64)
    area = float(np.linalg.norm(u_vec) * np.linalg.norm(v_vec))
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)

    def sample(rng, count):
        u = rng.random(count)[:, None]
        v = rng.random(count)[:, None]
        pts = origin + u * u_vec + v * v_vec
        return pts, np.tile(n, (count, 1))

    return _Patch(area=area, sampler=sample, label=label, semantic=semantic,
                  min_density=min_density)


def _disc_patch(center, radius, normal, label, semantic) -> _Patch:
    center = np.asarray(center, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)

    def sample(rng, count):
        r = radius * np.sqrt(rng.random(count))
        theta = rng.random(count) * 2 * math.pi
        pts = center + np.stack([r * np.cos(theta), r * np.sin(theta),
                                 np.zeros(count)], axis=1)
        return pts, np.tile(n, (count, 1))

    return _Patch(area=math.pi * radius ** 2, sampler=sample, label=label,
                  semantic=semantic, min_density=_OBJECT_DENSITY)


def _cylinder_side_patch(center, radius, height, label, semantic) -> _Patch:
    center = np.asarray(center, dtype=np.float64)

    def sample(rng, count):
        theta = rng.random(count) * 2 * math.pi
        z = rng.random(count) * height
        normals = np.stack([np.cos(theta), np.sin(theta), np.zeros(count)], axis=1)
        pts = center + radius * normals + np.stack(
            [np.zeros(count), np.zeros(count), z], axis=1)
        return pts, normals

    return _Patch(area=2 * math.pi * radius * height, sampler=sample,
                  label=label, semantic=semantic, min_density=_OBJECT_DENSITY)


def _cuboid_patches(lo, hi, label, semantic, top=True) -> list[_Patch]:
    """Vertical faces plus the top; the bottom face sits on the floor and is
    never observable."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    dx, dy, dz = hi - lo
    patches = [
        _rect_patch([lo[0], lo[1], lo[2]], [dx, 0, 0], [0, 0, dz], [0, -1, 0], label, semantic),
        _rect_patch([lo[0], hi[1], lo[2]], [dx, 0, 0], [0, 0, dz], [0, 1, 0], label, semantic),
        _rect_patch([lo[0], lo[1], lo[2]], [0, dy, 0], [0, 0, dz], [-1, 0, 0], label, semantic),
        _rect_patch([hi[0], lo[1], lo[2]], [0, dy, 0], [0, 0, dz], [1, 0, 0], label, semantic),
    ]
    if top:
        patches.append(_rect_patch([lo[0], lo[1], hi[2]], [dx, 0, 0], [0, dy, 0],
                                   [0, 0, 1], label, semantic))
    return patches


@dataclass
class _PlacedObject:
    label: int
    semantic: int
    aabb_lo: np.ndarray
    aabb_hi: np.ndarray
    patches: list[_Patch]
    panel_patches: list[_Patch]


def _make_cuboid(rng, label, center_xy) -> _PlacedObject:
    w = rng.uniform(0.35, 0.55)
    d = rng.uniform(0.35, 0.55)
    h = rng.uniform(0.38, 0.68)
    lo = np.array([center_xy[0] - w / 2, center_xy[1] - d / 2, 0.0])
    hi = np.array([center_xy[0] + w / 2, center_xy[1] + d / 2, h])
    return _PlacedObject(label=label, semantic=1, aabb_lo=lo, aabb_hi=hi,
                         patches=_cuboid_patches(lo, hi, label, 1),
                         panel_patches=[])


def _make_cylinder(rng, label, center_xy) -> _PlacedObject:
    r = rng.uniform(0.18, 0.28)
    h = rng.uniform(0.38, 0.62)
    center = np.array([center_xy[0], center_xy[1], 0.0])
    lo = center - [r, r, 0.0]
    hi = center + [r, r, h]
    patches = [
        _cylinder_side_patch(center, r, h, label, 2),
        _disc_patch(center + [0, 0, h], r, [0, 0, 1], label, 2),
    ]
    return _PlacedObject(label=label, semantic=2, aabb_lo=lo, aabb_hi=hi,
                         patches=patches, panel_patches=[])


def _panel_patch(center, azimuth, width, height, label=BACKGROUND) -> _Patch:
    """Thin vertical panel rotated 45 degrees off the axes, standing on the
    floor; diagonal normals keep it from fusing with any axis-aligned face."""
    n = np.array([math.cos(azimuth), math.sin(azimuth), 0.0])
    u = np.array([-n[1], n[0], 0.0]) * width
    v = np.array([0.0, 0.0, height])
    origin = np.asarray(center, dtype=np.float64) - u / 2
    return _rect_patch(origin, u, v, n, label, 0)


def _make_lshape(rng, label, center_xy) -> _PlacedObject:
    """Two arms along +x and +y sharing a corner; the empty pocket quadrant
    holds diagonal background panels.

    Panel tops are tiered: the first stays inside the tight box, the others
    overshoot its height so they only fall inside noise-enlarged boxes once
    the noise rate crosses their tier.  That gives box-driven labeling a
    leakage budget that grows with annotation noise.
    """
    size = rng.uniform(0.52, 0.65)
    arm = size * rng.uniform(0.36, 0.42)
    h = rng.uniform(0.40, 0.65)
    lo = np.array([center_xy[0] - size / 2, center_xy[1] - size / 2, 0.0])
    x0, y0 = lo[0], lo[1]
    L = size

    patches = [
        # outer walls
        _rect_patch([x0, y0, 0], [L, 0, 0], [0, 0, h], [0, -1, 0], label, 3),
        _rect_patch([x0, y0, 0], [0, L, 0], [0, 0, h], [-1, 0, 0], label, 3),
        _rect_patch([x0 + L, y0, 0], [0, arm, 0], [0, 0, h], [1, 0, 0], label, 3),
        _rect_patch([x0, y0 + L, 0], [arm, 0, 0], [0, 0, h], [0, 1, 0], label, 3),
        # pocket-facing walls
        _rect_patch([x0 + arm, y0 + arm, 0], [L - arm, 0, 0], [0, 0, h], [0, 1, 0], label, 3),
        _rect_patch([x0 + arm, y0 + arm, 0], [0, L - arm, 0], [0, 0, h], [1, 0, 0], label, 3),
        # top surfaces of both arms
        _rect_patch([x0, y0, h], [L, 0, 0], [0, arm, 0], [0, 0, 1], label, 3),
        _rect_patch([x0, y0 + arm, h], [arm, 0, 0], [0, L - arm, 0], [0, 0, 1], label, 3),
    ]

    pocket_lo = np.array([x0 + arm, y0 + arm])
    pocket_hi = np.array([x0 + L, y0 + L])
    pocket_mid = (pocket_lo + pocket_hi) / 2
    span = float(pocket_hi[0] - pocket_lo[0])
    panel_w = 0.24 * span
    # Noise-rate tiers: panel top = h * (1 + 0.5 * tier), matching the box
    # enlargement formula, so tier t leaks into boxes once lambda >= t.
    tiers = (0.0, 0.08, 0.18, 0.28)
    offsets = (-0.20, -0.0667, 0.0667, 0.20)
    panels = []
    for i, (tier, frac) in enumerate(zip(tiers, offsets)):
        az = math.pi / 4 + (math.pi / 2 if i % 2 else 0)  # alternate orientations
        d = frac * span  # displacement along the pocket diagonal
        center = [pocket_mid[0] + d, pocket_mid[1] + d, 0.02]
        top = 0.8 * h if tier == 0.0 else h * (1 + 0.5 * tier)
        panels.append(_panel_patch(center, az, panel_w, top - 0.02))

    hi = np.array([x0 + L, y0 + L, h])
    return _PlacedObject(label=label, semantic=3, aabb_lo=lo, aabb_hi=hi,
                         patches=patches, panel_patches=panels)


_BUILDERS = [_make_lshape, _make_cuboid, _make_cylinder]


def _gap_ok(obj: _PlacedObject, placed: list[_PlacedObject]) -> bool:
    for other in placed:
        sep = np.maximum(obj.aabb_lo[:2] - other.aabb_hi[:2],
                         other.aabb_lo[:2] - obj.aabb_hi[:2])
        if sep.max() < _MIN_GAP:
            return False
    return True


def _place_objects(cfg: SynthConfig, rng: np.random.Generator) -> list[_PlacedObject]:
    room_w, room_d, _ = cfg.room
    cx, cy = room_w / 2, room_d / 2
    # Object centers stay in a central disc well inside the camera orbit
    # (radius 0.37 * min dimension), so every face looks toward some view.
    zone_r = _ZONE_FRAC * 0.5 * min(room_w, room_d)
    placed: list[_PlacedObject] = []
    for i in range(cfg.object_count):
        builder = _BUILDERS[i % len(_BUILDERS)]
        label = i + 1
        ok = False
        for attempt in range(240):
            if cfg.occlusion and i == 1 and placed and attempt < 160:
                # Put the second object on the first one's axis through the
                # room center so some orbit view sees one behind the other.
                first = (placed[0].aabb_lo[:2] + placed[0].aabb_hi[:2]) / 2
                az = math.atan2(first[1] - cy, first[0] - cx)
                radius = rng.uniform(-1.0, 1.0) * zone_r
                center = (cx + radius * math.cos(az), cy + radius * math.sin(az))
            else:
                radius = rng.uniform(0.0, 1.0) ** 0.5 * zone_r
                az = rng.uniform(0.0, 2 * math.pi)
                center = (cx + radius * math.cos(az), cy + radius * math.sin(az))
            obj = builder(rng, label, center)
            if _gap_ok(obj, placed):
                placed.append(obj)
                ok = True
                break
        if not ok:
            raise GenerationError(f"could not place object {i} "
                                  f"(zone radius {zone_r:.2f})")
    return placed


def _floor_patch(cfg: SynthConfig, exclusions: list[tuple]) -> _Patch:
    """Floor minus a scan-shadow margin around each object footprint."""
    w, d, _ = cfg.room
    rects = [(lo[0] - _FOOT_MARGIN, lo[1] - _FOOT_MARGIN,
              hi[0] + _FOOT_MARGIN, hi[1] + _FOOT_MARGIN)
             for lo, hi in exclusions]
    kept = w * d - sum((x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in rects)

    def sample(rng, count):
        out = []
        got = 0
        while got < count:
            xy = rng.random((count, 2)) * (w, d)
            ok = np.ones(count, dtype=bool)
            for x0, y0, x1, y1 in rects:
                ok &= ~((xy[:, 0] >= x0) & (xy[:, 0] <= x1)
                        & (xy[:, 1] >= y0) & (xy[:, 1] <= y1))
            out.append(xy[ok])
            got += int(ok.sum())
        xy = np.concatenate(out)[:count]
        pts = np.concatenate([xy, np.zeros((count, 1))], axis=1)
        return pts, np.tile([0.0, 0.0, 1.0], (count, 1))

    return _Patch(area=max(kept, 1.0), sampler=sample, label=BACKGROUND, semantic=0)


def _room_patches(cfg: SynthConfig, exclusions: list[tuple]) -> list[_Patch]:
    w, d, h = cfg.room
    return [
        _floor_patch(cfg, exclusions),
        _rect_patch([0, 0, h], [w, 0, 0], [0, d, 0], [0, 0, -1], BACKGROUND, 0, 0.0),
        _rect_patch([0, 0, 0], [w, 0, 0], [0, 0, h], [0, 1, 0], BACKGROUND, 0, 0.0),
        _rect_patch([0, d, 0], [w, 0, 0], [0, 0, h], [0, -1, 0], BACKGROUND, 0, 0.0),
        _rect_patch([0, 0, 0], [0, d, 0], [0, 0, h], [1, 0, 0], BACKGROUND, 0, 0.0),
        _rect_patch([w, 0, 0], [0, d, 0], [0, 0, h], [-1, 0, 0], BACKGROUND, 0, 0.0),
    ]


_PALETTE = np.array([
    [0.85, 0.30, 0.25], [0.25, 0.55, 0.85], [0.30, 0.75, 0.35],
    [0.85, 0.65, 0.20], [0.60, 0.35, 0.75], [0.20, 0.70, 0.70],
    [0.80, 0.45, 0.60], [0.55, 0.60, 0.25],
])


def _patch_count(patch: _Patch, density: float, min_points: int) -> int:
    return max(int(math.ceil(patch.area * max(density, patch.min_density))),
               min_points)


def _sample_patches(patches: list[_Patch], density: float, min_points: int,
                    rng: np.random.Generator):
    pts, nrm, lab = [], [], []
    for patch in patches:
        count = _patch_count(patch, density, min_points)
        p, n = patch.sampler(rng, count)
        pts.append(p)
        nrm.append(n)
        lab.append(np.full(count, patch.label, dtype=np.int32))
    return np.concatenate(pts), np.concatenate(nrm), np.concatenate(lab)


def _orbit_views(cfg: SynthConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """(eye, target) per view around the room center."""
    w, d, h = cfg.room
    cx, cy = w / 2, d / 2
    radius = 0.37 * min(w, d)
    height = min(_CAM_HEIGHT, h - 0.2)
    out = []
    for i in range(cfg.view_count):
        az = 2 * math.pi * i / cfg.view_count
        eye = np.array([cx + radius * math.cos(az), cy + radius * math.sin(az), height])
        target = np.array([cx, cy, _LOOKAT_HEIGHT])
        out.append((eye, target))
    return out


def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera 3x4: camera z looks at the target, x is right."""
    up = np.array([0.0, 0.0, 1.0])
    z = target - eye
    z = z / np.linalg.norm(z)
    x = np.cross(z, up)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    t = -R @ eye
    return np.concatenate([R, t[:, None]], axis=1)


def _render_views(cfg: SynthConfig, scene: Scene) -> list[CameraView]:
    K = np.array([[cfg.focal, 0, cfg.image_width / 2],
                  [0, cfg.focal, cfg.image_height / 2],
                  [0, 0, 1]], dtype=np.float32)
    index_scene = Scene(points=scene.points,
                        gt_labels=np.arange(scene.point_count, dtype=np.int32))
    views = []
    for vid, (eye, target) in enumerate(_orbit_views(cfg)):
        view = CameraView(id=vid, width=cfg.image_width, height=cfg.image_height,
                          K=K, P=_look_at(eye, target).astype(np.float32))
        _, depth = render_gt(scene, view, footprint=3)
        # Quantize to the storage unit so bundles round-trip exactly.
        view.depth = (np.rint(depth * 1000.0) / 1000.0).astype(np.float32)
        idx_img, _ = render_gt(index_scene, view, footprint=3)
        rgb = np.zeros((cfg.image_height, cfg.image_width, 3), dtype=np.uint8)
        hit = idx_img >= 0
        rgb[hit] = (scene.colors[idx_img[hit]] * 255).astype(np.uint8)
        view.rgb = rgb
        views.append(view)
    return views


def _verify(scene: Scene, content_mask: np.ndarray) -> bool:
    """Superpoints must be single-instance, and every superpoint touching
    object or panel geometry must be visible in at least one view."""
    sp = scene.superpoints
    for member in sp.members():
        labels = np.unique(scene.gt_labels[member])
        if labels.size > 1:
            return False
        if not content_mask[member].any():
            continue
        seen = False
        for view in scene.views:
            if visible_mask(scene.points[member], view, VisibilityTolerance()).any():
                seen = True
                break
        if not seen:
            return False
    return True


def generate_scene(cfg: SynthConfig) -> Scene:
    """Deterministic scene for the seed; raises GenerationError when object
    placement or verification fails after bounded retries."""
    rng = np.random.Generator(np.random.Philox(key=cfg.seed & (2**64 - 1)))
    last_error = None
    for _ in range(_MAX_ATTEMPTS):
        try:
            scene = _generate_once(cfg, rng)
        except GenerationError as exc:
            last_error = exc
            continue
        if scene is not None:
            return scene
        last_error = GenerationError("scene verification failed")
    raise GenerationError(f"giving up after {_MAX_ATTEMPTS} attempts: {last_error}")


def _generate_once(cfg: SynthConfig, rng: np.random.Generator) -> Scene | None:
    objects = _place_objects(cfg, rng)
    exclusions = [(obj.aabb_lo[:2], obj.aabb_hi[:2]) for obj in objects]
    patches = _room_patches(cfg, exclusions)
    shell_patch_count = len(patches)
    for obj in objects:
        patches.extend(obj.patches)
        patches.extend(obj.panel_patches)

    points, normals, labels = _sample_patches(patches, cfg.points_per_m2,
                                              _MIN_FACE_POINTS, rng)
    shell_count = sum(_patch_count(p, cfg.points_per_m2, _MIN_FACE_POINTS)
                      for p in patches[:shell_patch_count])
    content_mask = np.zeros(points.shape[0], dtype=bool)
    content_mask[shell_count:] = True

    colors = np.full((points.shape[0], 3), 0.7, dtype=np.float32)
    for obj in objects:
        colors[labels == obj.label] = _PALETTE[(obj.label - 1) % len(_PALETTE)]
    panel_mask = content_mask & (labels == BACKGROUND)
    colors[panel_mask] = (0.35, 0.30, 0.28)

    scene = Scene(points=points.astype(np.float32),
                  normals=normals.astype(np.float32),
                  colors=colors,
                  gt_labels=labels)
    scene.views = _render_views(cfg, scene)
    scene.superpoints = compute_superpoints(scene.points, SegParams(),
                                            normals=scene.normals)
    scene.boxes = [tight_box(scene, obj.label) for obj in objects]
    for box, obj in zip(scene.boxes, objects):
        box.semantic_class = obj.semantic

    if not _verify(scene, content_mask):
        return None
    return scene


def generate_suite(count: int, cfg: SynthConfig, base_seed: int,
                   out_dir: str | Path) -> list[Path]:
    """Write `count` bundles seeded base_seed + i under out_dir."""
    if count < 1:
        raise ValueError("count must be >= 1")
    out_dir = Path(out_dir)
    paths = []
    for i in range(count):
        scene_cfg = SynthConfig(seed=base_seed + i, room=cfg.room,
                                object_count=cfg.object_count,
                                points_per_m2=cfg.points_per_m2,
                                view_count=cfg.view_count,
                                occlusion=cfg.occlusion,
                                image_width=cfg.image_width,
                                image_height=cfg.image_height,
                                focal=cfg.focal)
        scene = generate_scene(scene_cfg)
        path = out_dir / f"scene_{scene_cfg.seed:05d}"
        save_scene_bundle(scene, path)
        paths.append(path)
    return paths
