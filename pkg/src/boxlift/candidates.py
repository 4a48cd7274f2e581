"""Candidate point initialization by whole-superpoint box containment.

A superpoint is a candidate of an instance only when every one of its points
lies inside the instance's (closed) box; a single outside point excludes the
entire superpoint.  Candidate sets are therefore unions of whole superpoints,
and one point may be a candidate of several overlapping boxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import InstanceBox, Scene


@dataclass
class CandidateMap:
    """Per-instance candidate point indices and the superpoints behind them."""

    points: dict[int, np.ndarray] = field(default_factory=dict)
    superpoint_ids: dict[int, np.ndarray] = field(default_factory=dict)
    boxes: list[InstanceBox] = field(default_factory=list)

    def box_for(self, instance_id: int) -> InstanceBox:
        for box in self.boxes:
            if box.instance_id == instance_id:
                return box
        raise KeyError(instance_id)


def superpoint_aabbs(scene: Scene):
    """(min, max) corners per superpoint, each (S, 3).

    Containment of a whole superpoint in a closed box is equivalent to
    containment of its AABB, which makes the per-box test O(S) instead of
    O(N).
    """
    if scene.superpoints is None:
        raise ValueError("scene has no superpoints")
    sp = scene.superpoints
    s = sp.superpoint_count
    mins = np.full((s, 3), np.inf)
    maxs = np.full((s, 3), -np.inf)
    np.minimum.at(mins, sp.assignment, scene.points)
    np.maximum.at(maxs, sp.assignment, scene.points)
    return mins, maxs


def superpoints_in_box(box: InstanceBox, scene: Scene,
                       aabbs=None) -> np.ndarray:
    """Ids of superpoints entirely inside the closed box."""
    mins, maxs = superpoint_aabbs(scene) if aabbs is None else aabbs
    c_min = np.asarray(box.c_min, dtype=np.float64)
    c_max = np.asarray(box.c_max, dtype=np.float64)
    inside = np.all(mins >= c_min, axis=1) & np.all(maxs <= c_max, axis=1)
    return np.flatnonzero(inside)


def build_candidate_map(scene: Scene, boxes: list[InstanceBox]) -> CandidateMap:
    """Candidate points per instance: the union of fully contained superpoints."""
    if scene.superpoints is None:
        raise ValueError("scene has no superpoints")
    seen = set()
    for box in boxes:
        if box.instance_id in seen:
            raise ValueError(f"duplicate box for instance {box.instance_id}")
        seen.add(box.instance_id)

    aabbs = superpoint_aabbs(scene)
    members = scene.superpoints.members()
    cmap = CandidateMap(boxes=list(boxes))
    for box in boxes:
        sp_ids = superpoints_in_box(box, scene, aabbs)
        if sp_ids.size:
            pts = np.sort(np.concatenate([members[s] for s in sp_ids]))
        else:
            pts = np.empty(0, dtype=np.int64)
        cmap.superpoint_ids[box.instance_id] = sp_ids
        cmap.points[box.instance_id] = pts
    return cmap
