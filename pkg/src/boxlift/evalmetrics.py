"""Label-quality metrics: wrong point/superpoint counts, IoU, and AP.

AP uses greedy matching in confidence rank order at a fixed IoU threshold
and all-point interpolation of the precision-recall curve.  Semantic classes
collapse to instance matching; scenes at this scale have too few instances
per class for per-class averaging to mean anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import BACKGROUND, Scene, SuperpointPartition

AP_LADDER = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))  # 0.5 .. 0.95


@dataclass
class EvalReport:
    wrong_points: int
    wrong_superpoints: int
    per_instance_iou: dict[int, float] = field(default_factory=dict)
    mean_iou: float = 0.0
    ap50: float = 0.0
    ap25: float = 0.0
    map_ladder: float = 0.0

    def to_dict(self) -> dict:
        return {
            "wrong_points": self.wrong_points,
            "wrong_superpoints": self.wrong_superpoints,
            "per_instance_iou": {str(k): v for k, v in sorted(self.per_instance_iou.items())},
            "mean_iou": self.mean_iou,
            "ap50": self.ap50,
            "ap25": self.ap25,
            "map_ladder": self.map_ladder,
        }


def wrong_points(pred: np.ndarray, gt: np.ndarray) -> int:
    """Count of points whose predicted label differs from ground truth
    (BACKGROUND counts as a label)."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"label length {pred.shape} != {gt.shape}")
    return int(np.count_nonzero(pred != gt))


def _majority_label(values: np.ndarray) -> int:
    ids, counts = np.unique(values, return_counts=True)
    return int(ids[np.lexsort((ids, -counts))[0]])  # ties: lowest label


def wrong_superpoints(pred: np.ndarray, gt: np.ndarray,
                      superpoints: SuperpointPartition) -> int:
    """Count of superpoints whose majority predicted label differs from the
    majority ground-truth label (majority ties: lowest label)."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape or pred.shape != superpoints.assignment.shape:
        raise ValueError("label/superpoint length mismatch")
    wrong = 0
    for member in superpoints.members():
        if _majority_label(pred[member]) != _majority_label(gt[member]):
            wrong += 1
    return wrong


def instance_iou(pred: np.ndarray, gt: np.ndarray, instance_id: int) -> float:
    """|pred_k intersect gt_k| / |pred_k union gt_k|."""
    gt_mask = np.asarray(gt) == instance_id
    if not gt_mask.any():
        raise ValueError(f"instance {instance_id} not present in gt")
    pred_mask = np.asarray(pred) == instance_id
    union = np.count_nonzero(pred_mask | gt_mask)
    return float(np.count_nonzero(pred_mask & gt_mask) / union)


def ap_at(predictions: list[tuple[np.ndarray, float]], gt: np.ndarray,
          threshold: float) -> float:
    """Average precision at one IoU threshold.

    predictions: (point-mask, score) pairs; matching is greedy in descending
    score order against unmatched gt instances, and the PR curve is
    integrated with all-point interpolation.
    """
    gt = np.asarray(gt)
    gt_ids = [int(k) for k in np.unique(gt) if k != BACKGROUND]
    if not gt_ids:
        return 0.0 if predictions else 1.0
    gt_masks = {k: gt == k for k in gt_ids}

    ranked = sorted(range(len(predictions)),
                    key=lambda i: (-predictions[i][1], i))
    matched: set[int] = set()
    tps = np.zeros(len(ranked))
    for rank, i in enumerate(ranked):
        mask = np.asarray(predictions[i][0], dtype=bool)
        best_iou, best_k = 0.0, None
        for k in gt_ids:
            if k in matched:
                continue
            union = np.count_nonzero(mask | gt_masks[k])
            iou = np.count_nonzero(mask & gt_masks[k]) / union if union else 0.0
            if iou > best_iou:
                best_iou, best_k = iou, k
        if best_k is not None and best_iou >= threshold:
            matched.add(best_k)
            tps[rank] = 1.0

    if not len(ranked):
        return 0.0
    tp = np.cumsum(tps)
    fp = np.cumsum(1.0 - tps)
    recall = tp / len(gt_ids)
    precision = tp / (tp + fp)
    # All-point interpolation: sum recall steps times best precision to the right.
    ap = 0.0
    prev_r = 0.0
    for i in range(len(recall)):
        if recall[i] > prev_r:
            ap += (recall[i] - prev_r) * precision[i:].max()
            prev_r = recall[i]
    return float(ap)


def prediction_list(pred: np.ndarray, scores: dict[int, float]
                    ) -> list[tuple[np.ndarray, float]]:
    """(mask, score) pairs for every predicted instance, id order."""
    pred = np.asarray(pred)
    out = []
    for k in np.unique(pred):
        k = int(k)
        if k == BACKGROUND:
            continue
        out.append((pred == k, float(scores.get(k, 0.0))))
    return out


def evaluate_labels(pred: np.ndarray, scene: Scene,
                    scores: dict[int, float] | None = None) -> EvalReport:
    """Full report against the scene's ground truth.

    scores rank predictions for AP; without them instances fall back to
    predicted point count (deterministic but uninformed).
    """
    if scene.gt_labels is None:
        raise ValueError("evaluation requires gt_labels")
    gt = scene.gt_labels
    pred = np.asarray(pred)
    if scores is None:
        scores = {int(k): float(np.count_nonzero(pred == k))
                  for k in np.unique(pred) if k != BACKGROUND}

    ious = {int(k): instance_iou(pred, gt, int(k)) for k in scene.instance_ids()}
    preds = prediction_list(pred, scores)
    report = EvalReport(
        wrong_points=wrong_points(pred, gt),
        wrong_superpoints=(wrong_superpoints(pred, gt, scene.superpoints)
                           if scene.superpoints is not None else 0),
        per_instance_iou=ious,
        mean_iou=float(np.mean(list(ious.values()))) if ious else 0.0,
        ap50=ap_at(preds, gt, 0.5),
        ap25=ap_at(preds, gt, 0.25),
        map_ladder=float(np.mean([ap_at(preds, gt, t) for t in AP_LADDER])),
    )
    return report
