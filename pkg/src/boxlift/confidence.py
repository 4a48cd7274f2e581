"""Per-point confidence ensembling and superpoint-level label voting.

A candidate point's confidence for an instance is the average of the merged
mask scores at its projected pixel over the selected views where it is
visible; points visible in none of them are UNOBSERVED (NaN).  Superpoints
take the mean over their observed members, instances with confidence <= 0
are filtered out, and each superpoint goes to the argmax-confidence survivor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .candidates import CandidateMap
from .scene import BACKGROUND, InstanceBox, Scene
from .viewselect import ViewCover

UNOBSERVED = float("nan")


def is_unobserved(value: float) -> bool:
    return isinstance(value, float) and math.isnan(value)


@dataclass
class ConfidenceTable:
    """Confidences aligned with the candidate map.

    point_conf[k] parallels cmap.points[k]; sp_conf[k] maps superpoint id to
    its mean confidence.  NaN marks UNOBSERVED entries.
    """

    point_conf: dict[int, np.ndarray] = field(default_factory=dict)
    sp_conf: dict[int, dict[int, float]] = field(default_factory=dict)


def point_confidence(point: int, instance_id: int, cover: ViewCover,
                     masks: dict[tuple[int, int], np.ndarray]) -> float:
    """Visibility-weighted mean of mask scores at the point's pixels.

    Returns UNOBSERVED (NaN) when the point is visible in none of the
    instance's selected views.
    """
    total = 0.0
    count = 0
    for vid in cover.selected.get(instance_id, []):
        vis = cover.visible[(instance_id, vid)]
        pos = np.flatnonzero(vis == point)
        if pos.size == 0:
            continue
        ix, iy = cover.pixels[(instance_id, vid)]
        mask = masks[(instance_id, vid)]
        total += float(mask[iy[pos[0]], ix[pos[0]]])
        count += 1
    return total / count if count else UNOBSERVED


def compute_point_confidences(cmap: CandidateMap, cover: ViewCover,
                              masks: dict[tuple[int, int], np.ndarray]
                              ) -> ConfidenceTable:
    """Vectorized confidence table over every (candidate point, instance) pair."""
    table = ConfidenceTable()
    for instance_id, candidates in cmap.points.items():
        totals = np.zeros(candidates.size, dtype=np.float64)
        counts = np.zeros(candidates.size, dtype=np.int64)
        for vid in cover.selected.get(instance_id, []):
            vis = cover.visible[(instance_id, vid)]
            ix, iy = cover.pixels[(instance_id, vid)]
            mask = masks[(instance_id, vid)]
            pos = np.searchsorted(candidates, vis)
            totals[pos] += mask[iy, ix].astype(np.float64)
            counts[pos] += 1
        conf = np.full(candidates.size, UNOBSERVED, dtype=np.float64)
        seen = counts > 0
        conf[seen] = totals[seen] / counts[seen]
        table.point_conf[instance_id] = conf
    return table


def superpoint_confidence(sp_id: int, instance_id: int, scene: Scene,
                          cmap: CandidateMap, table: ConfidenceTable) -> float:
    """Mean confidence over the superpoint's observed member points."""
    candidates = cmap.points[instance_id]
    conf = table.point_conf[instance_id]
    member = scene.superpoints.assignment[candidates] == sp_id
    values = conf[member]
    values = values[~np.isnan(values)]
    return float(values.mean()) if values.size else UNOBSERVED


def compute_superpoint_confidences(scene: Scene, cmap: CandidateMap,
                                   table: ConfidenceTable) -> ConfidenceTable:
    """Fill table.sp_conf from table.point_conf by superpoint-mean pooling."""
    assignment = scene.superpoints.assignment
    count = scene.superpoints.superpoint_count
    for instance_id, candidates in cmap.points.items():
        conf = table.point_conf[instance_id]
        sp_of = assignment[candidates]
        seen = ~np.isnan(conf)
        sums = np.bincount(sp_of[seen], weights=conf[seen], minlength=count)
        nums = np.bincount(sp_of[seen], minlength=count)
        entry: dict[int, float] = {}
        for sp_id in np.asarray(cmap.superpoint_ids[instance_id]):
            sp_id = int(sp_id)
            entry[sp_id] = sums[sp_id] / nums[sp_id] if nums[sp_id] else UNOBSERVED
        table.sp_conf[instance_id] = entry
    return table


def assign_labels(scene: Scene, cmap: CandidateMap,
                  sp_conf: dict[int, dict[int, float]]) -> np.ndarray:
    """Vote a final label per superpoint.

    Candidates with confidence <= 0 or UNOBSERVED are dropped; survivors go
    to the argmax (ties: lowest instance id).  Superpoints whose every
    candidate is UNOBSERVED fall back to the smallest-box heuristic; anything
    else becomes BACKGROUND.
    """
    labels = np.full(scene.point_count, BACKGROUND, dtype=np.int32)
    volumes = {b.instance_id: b.volume() for b in cmap.boxes}

    per_sp: dict[int, list[tuple[int, float]]] = {}
    for instance_id, entry in sp_conf.items():
        for sp_id, conf in entry.items():
            per_sp.setdefault(sp_id, []).append((instance_id, conf))

    members = scene.superpoints.members()
    for sp_id, entries in per_sp.items():
        survivors = [(k, c) for k, c in entries if not math.isnan(c) and c > 0]
        if survivors:
            winner = min(survivors, key=lambda kc: (-kc[1], kc[0]))[0]
        elif all(math.isnan(c) for _, c in entries):
            winner = min((k for k, _ in entries), key=lambda k: (volumes[k], k))
        else:
            continue
        labels[members[sp_id]] = winner
    return labels


def baseline_assign(cmap: CandidateMap, boxes: list[InstanceBox],
                    point_count: int) -> np.ndarray:
    """Smallest-box baseline: every candidate point goes to the candidate
    instance with the smallest box volume (ties: lowest instance id)."""
    labels = np.full(point_count, BACKGROUND, dtype=np.int32)
    order = sorted(boxes, key=lambda b: (b.volume(), b.instance_id), reverse=True)
    for box in order:
        labels[cmap.points[box.instance_id]] = box.instance_id
    return labels


def instance_scores(labels: np.ndarray, scene: Scene,
                    sp_conf: dict[int, dict[int, float]]) -> dict[int, float]:
    """Ranking score per predicted instance: mean confidence of the
    superpoints it won (used to order predictions for AP)."""
    assignment = scene.superpoints.assignment
    scores: dict[int, float] = {}
    for instance_id in np.unique(labels):
        instance_id = int(instance_id)
        if instance_id == BACKGROUND:
            continue
        sp_ids = np.unique(assignment[labels == instance_id])
        values = [sp_conf.get(instance_id, {}).get(int(s), UNOBSERVED) for s in sp_ids]
        values = [v for v in values if not math.isnan(v)]
        scores[instance_id] = float(np.mean(values)) if values else 0.0
    return scores
