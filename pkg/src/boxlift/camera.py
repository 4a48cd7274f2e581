"""Pinhole projection, depth-based visibility, and ground-truth rendering.

Projection follows [u, v, z]^T = K @ P @ [X; 1]; the pixel is (u/z, v/z)
and z is the camera-frame depth.  A point is visible in a view when it lands
in frame and the view's depth map agrees with z at the rounded pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import BACKGROUND, CameraView, Scene


@dataclass(frozen=True)
class VisibilityTolerance:
    """Depth agreement band: max(abs_m, rel * depth) meters.

    Defaults cover typical RGB-D noise (2 cm or 1% of depth, whichever is
    larger).
    """

    abs_m: float = 0.02
    rel: float = 0.01


@dataclass(frozen=True)
class Projection:
    pixel_x: float
    pixel_y: float
    cam_depth: float
    in_frame: bool


def project_points(points: np.ndarray, view: CameraView):
    """Vectorized pinhole projection.

    Returns (pixel_x, pixel_y, cam_depth, in_frame) arrays.  Pixel values are
    meaningless where in_frame is false (set to 0 for points at or behind the
    camera plane).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    P = np.asarray(view.P, dtype=np.float64)
    K = np.asarray(view.K, dtype=np.float64)
    cam = pts @ P[:, :3].T + P[:, 3]
    uvz = cam @ K.T
    z = uvz[:, 2]
    safe = z > 0
    px = np.zeros_like(z)
    py = np.zeros_like(z)
    with np.errstate(over="ignore", invalid="ignore"):
        np.divide(uvz[:, 0], z, out=px, where=safe)
        np.divide(uvz[:, 1], z, out=py, where=safe)
    in_frame = safe & (px >= 0) & (px < view.width) & (py >= 0) & (py < view.height)
    return px, py, z, in_frame


def project_point(point, view: CameraView) -> Projection:
    """Project a single world point; in_frame is false behind the camera or
    outside the image rectangle."""
    px, py, z, in_frame = project_points(np.asarray(point, dtype=np.float64), view)
    return Projection(pixel_x=float(px[0]), pixel_y=float(py[0]),
                      cam_depth=float(z[0]), in_frame=bool(in_frame[0]))


def round_pixels(px: np.ndarray, py: np.ndarray):
    """Round to nearest with ties toward even, as integer indices.

    Extreme or non-finite inputs (projections near the camera plane) clamp to
    a sentinel range no image lookup treats as in-bounds.
    """
    bound = 2.0 ** 31
    px = np.clip(np.nan_to_num(px, nan=-bound), -bound, bound)
    py = np.clip(np.nan_to_num(py, nan=-bound), -bound, bound)
    return (np.rint(px).astype(np.int64), np.rint(py).astype(np.int64))


def visible_mask(points: np.ndarray, view: CameraView,
                 tol: VisibilityTolerance = VisibilityTolerance()) -> np.ndarray:
    """Boolean visibility per point under the view's depth map.

    Invalid depth (0) and rounded pixels falling off the image count as
    invisible.
    """
    if view.depth is None:
        raise ValueError(f"view {view.id} has no depth map")
    px, py, z, in_frame = project_points(points, view)
    ix, iy = round_pixels(px, py)
    ok = in_frame & (ix >= 0) & (ix < view.width) & (iy >= 0) & (iy < view.height)
    vis = np.zeros(px.shape[0], dtype=bool)
    if not ok.any():
        return vis
    d = view.depth[iy[ok], ix[ok]].astype(np.float64)
    band = np.maximum(tol.abs_m, tol.rel * z[ok])
    vis[ok] = (d > 0) & (np.abs(d - z[ok]) <= band)
    return vis


def visible(point, view: CameraView,
            tol: VisibilityTolerance = VisibilityTolerance()) -> bool:
    return bool(visible_mask(np.atleast_2d(np.asarray(point, dtype=np.float64)),
                             view, tol)[0])


def render_gt(scene: Scene, view: CameraView, footprint: int = 3):
    """Render per-pixel instance ids and depth from the labeled point cloud.

    Each in-frame point is splatted over a footprint x footprint pixel square
    around its rounded pixel; the nearest depth wins per pixel (equal depths:
    the higher point index wins).  Unhit pixels carry BACKGROUND and depth 0.
    """
    if scene.gt_labels is None:
        raise ValueError("render_gt requires gt_labels")
    if footprint < 1:
        raise ValueError("footprint must be >= 1")

    label_img = np.full((view.height, view.width), BACKGROUND, dtype=np.int32)
    depth_img = np.zeros((view.height, view.width), dtype=np.float32)

    px, py, z, in_frame = project_points(scene.points, view)
    keep = np.flatnonzero(in_frame)
    if keep.size == 0:
        return label_img, depth_img
    ix, iy = round_pixels(px[keep], py[keep])
    zk = z[keep]
    labels = scene.gt_labels[keep]

    lo = -(footprint // 2)
    offsets = [(dy, dx) for dy in range(lo, lo + footprint)
               for dx in range(lo, lo + footprint)]
    xs = np.concatenate([ix + dx for _, dx in offsets])
    ys = np.concatenate([iy + dy for dy, _ in offsets])
    zs = np.tile(zk, len(offsets))
    ls = np.tile(labels, len(offsets))
    ok = (xs >= 0) & (xs < view.width) & (ys >= 0) & (ys < view.height)
    xs, ys, zs, ls = xs[ok], ys[ok], zs[ok], ls[ok]

    # Painter's order: far to near, so the nearest splat is written last
    # (duplicate pixel indices keep the last value in fancy assignment).
    order = np.lexsort((np.arange(xs.size), -zs))
    label_img[ys[order], xs[order]] = ls[order]
    depth_img[ys[order], xs[order]] = zs[order]
    return label_img, depth_img
