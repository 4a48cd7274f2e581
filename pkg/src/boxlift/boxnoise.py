"""Simulate noisy bounding-box annotations from tight ground-truth boxes.

Per axis the extent noise is X = lam * (c_max - c_min): the box is enlarged
to [c_min - 0.5X, c_max + 0.5X] and every corner coordinate then receives
independent Gaussian jitter with per-axis standard deviation 0.5 * lam * X.
With clamp_to_cover the result is expanded back to contain the input box, so
annotations always cover the instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import InstanceBox, Scene


@dataclass(frozen=True)
class NoiseConfig:
    lam: float
    seed: int
    clamp_to_cover: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("noise rate must be >= 0")


def _substream(seed: int, instance_id: int) -> np.random.Generator:
    # Philox is counter-based and stable across platforms; substreams are
    # derived as seed XOR instance id.
    return np.random.Generator(np.random.Philox(key=(seed ^ instance_id) & (2**64 - 1)))


def tight_box(scene: Scene, instance_id: int) -> InstanceBox:
    """Component-wise min/max over the instance's points."""
    if scene.gt_labels is None:
        raise ValueError("tight_box requires gt_labels")
    mask = scene.gt_labels == instance_id
    if not mask.any():
        raise ValueError(f"instance {instance_id} has no points")
    pts = scene.points[mask]
    semantic = next((b.semantic_class for b in scene.boxes
                     if b.instance_id == instance_id), 0)
    return InstanceBox(instance_id=int(instance_id), semantic_class=semantic,
                       c_min=pts.min(axis=0), c_max=pts.max(axis=0))


def perturb_box(box: InstanceBox, cfg: NoiseConfig,
                rng: np.random.Generator) -> InstanceBox:
    """Enlarge by 0.5X per side plus Gaussian corner jitter (sigma = 0.5*lam*X).

    Draw order is fixed: three c_min coordinates then three c_max coordinates.
    """
    c_min = np.asarray(box.c_min, dtype=np.float64)
    c_max = np.asarray(box.c_max, dtype=np.float64)
    extent_noise = cfg.lam * (c_max - c_min)
    lo = c_min - 0.5 * extent_noise
    hi = c_max + 0.5 * extent_noise
    sigma = 0.5 * cfg.lam * extent_noise
    draws = rng.standard_normal(6)
    lo = lo + draws[:3] * sigma
    hi = hi + draws[3:] * sigma
    new_min = np.minimum(lo, hi)
    new_max = np.maximum(lo, hi)
    if cfg.clamp_to_cover:
        new_min = np.minimum(new_min, c_min)
        new_max = np.maximum(new_max, c_max)
    return InstanceBox(instance_id=box.instance_id, semantic_class=box.semantic_class,
                       c_min=new_min.astype(np.float32),
                       c_max=new_max.astype(np.float32))


def perturb_scene_boxes(scene: Scene, cfg: NoiseConfig) -> list[InstanceBox]:
    """One perturbed box per ground-truth instance, in instance-id order.

    Each instance draws from its own deterministic substream, so results are
    reproducible and independent of instance count or ordering.
    """
    boxes = []
    for instance_id in scene.instance_ids():
        base = tight_box(scene, int(instance_id))
        rng = _substream(cfg.seed, int(instance_id))
        boxes.append(perturb_box(base, cfg, rng))
    return boxes
