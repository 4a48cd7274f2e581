"""Greedy selection of covering camera views per instance.

Each round picks the view adding the most not-yet-observed candidate points
(ties broken by lowest view id) and marks those points observed; selection
stops when no remaining view adds coverage.  Points visible in no view stay
uncovered and are reported rather than treated as fatal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import VisibilityTolerance, project_points, round_pixels, visible_mask
from .candidates import CandidateMap
from .scene import CameraView, Scene


@dataclass
class ViewCover:
    """Selected view ids plus cached per-(instance, view) visibility."""

    selected: dict[int, list[int]] = field(default_factory=dict)
    visible: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    pixels: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    uncovered: dict[int, np.ndarray] = field(default_factory=dict)


def visible_candidates(candidates: np.ndarray, view: CameraView, points: np.ndarray,
                       tol: VisibilityTolerance = VisibilityTolerance()) -> np.ndarray:
    """Subset of candidate point indices visible in the view."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        return candidates
    mask = visible_mask(points[candidates], view, tol)
    return candidates[mask]


def greedy_cover(vis: np.ndarray, view_ids: np.ndarray):
    """Greedy set cover on a (views x points) boolean visibility matrix.

    Returns (selected view ids in pick order, uncovered point column mask).
    Ties in marginal gain go to the lowest view id.
    """
    vis = np.asarray(vis, dtype=bool)
    view_ids = np.asarray(view_ids, dtype=np.int64)
    uncovered = np.ones(vis.shape[1], dtype=bool)
    selected: list[int] = []
    while uncovered.any():
        gains = (vis & uncovered).sum(axis=1)
        best = np.lexsort((view_ids, -gains))[0]
        if gains[best] == 0:
            break
        selected.append(int(view_ids[best]))
        uncovered &= ~vis[best]
    return selected, uncovered


def greedy_select_views(candidates: np.ndarray, views: list[CameraView],
                        points: np.ndarray,
                        tol: VisibilityTolerance = VisibilityTolerance(),
                        max_views: int | None = None):
    """Greedy view selection for one candidate set.

    Returns (ordered view ids, uncovered candidate point indices).
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0 or not views:
        return [], candidates
    vis = np.stack([visible_mask(points[candidates], v, tol) for v in views])
    view_ids = np.array([v.id for v in views], dtype=np.int64)
    selected, uncovered = greedy_cover(vis, view_ids)
    if max_views is not None:
        selected = selected[:max_views]
    return selected, candidates[uncovered]


def build_view_cover(cmap: CandidateMap, scene: Scene,
                     tol: VisibilityTolerance = VisibilityTolerance(),
                     max_views: int | None = None) -> ViewCover:
    """Per-instance greedy selections with cached visible sets and pixels."""
    cover = ViewCover()
    views_by_id = {v.id: v for v in scene.views}
    for instance_id, candidates in cmap.points.items():
        selected, uncovered = greedy_select_views(
            candidates, scene.views, points=scene.points, tol=tol, max_views=max_views)
        cover.selected[instance_id] = selected
        cover.uncovered[instance_id] = uncovered
        for vid in selected:
            view = views_by_id[vid]
            vis_idx = visible_candidates(candidates, view, scene.points, tol)
            px, py, _, _ = project_points(scene.points[vis_idx], view)
            ix, iy = round_pixels(px, py)
            cover.visible[(instance_id, vid)] = vis_idx
            cover.pixels[(instance_id, vid)] = (ix, iy)
    return cover
