"""End-to-end refinement pipeline and experiment sweeps.

run_refinement executes superpoints (when the bundle ships none), box
perturbation (when configured), candidate initialization, greedy view
selection, prompting, confidence ensembling and voting, then evaluation when
ground truth is present.  Every run is deterministic for a given config;
reports carry fixed float formatting so reruns are byte-identical, while
wall-clock timings live in a separate diagnostics object.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxnoise import NoiseConfig, perturb_scene_boxes
from .camera import VisibilityTolerance
from .candidates import build_candidate_map
from .confidence import (assign_labels, baseline_assign,
                         compute_point_confidences,
                         compute_superpoint_confidences, instance_scores)
from .evalmetrics import EvalReport, evaluate_labels
from .prompting import PromptMode, SegmenterConfig, instance_view_mask, make_segmenter
from .scene import Scene, load_scene_bundle
from .superpoints import SegParams, compute_superpoints
from .viewselect import build_view_cover


class ConfigError(ValueError):
    """The pipeline configuration is unusable."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for attribution."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    bundle: str | Path
    noise: NoiseConfig | None = None  # None: use the manifest's boxes
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    seg_params: SegParams = field(default_factory=SegParams)
    tol: VisibilityTolerance = field(default_factory=VisibilityTolerance)
    out_dir: str | Path | None = None
    parallelism: int = 1  # reserved; stages are vectorized, not threaded
    max_views: int | None = None


@dataclass
class RefinementResult:
    labels: np.ndarray
    report: EvalReport | None
    scores: dict[int, float]
    diagnostics: dict
    label_report: dict = field(default_factory=dict)


def _checked(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(stage, exc) from exc


def _ensure_superpoints(scene: Scene, params: SegParams) -> Scene:
    if scene.superpoints is not None:
        return scene
    sp = compute_superpoints(scene.points, params, normals=scene.normals)
    return dataclasses.replace(scene, superpoints=sp)


def run_refinement(cfg: PipelineConfig) -> RefinementResult:
    """Full pipeline over one bundle; deterministic for a given config."""
    timings: dict[str, float] = {}

    def timed(stage, fn, *args, **kwargs):
        start = time.perf_counter()
        out = _checked(stage, fn, *args, **kwargs)
        timings[stage] = time.perf_counter() - start
        return out

    scene = timed("load", load_scene_bundle, cfg.bundle)
    scene = timed("superpoints", _ensure_superpoints, scene, cfg.seg_params)
    if cfg.noise is not None:
        boxes = timed("box-noise", perturb_scene_boxes, scene, cfg.noise)
    else:
        boxes = scene.boxes
        if not boxes:
            raise ConfigError("bundle has no boxes and no noise config given")
    cmap = timed("candidate-init", build_candidate_map, scene, boxes)
    cover = timed("view-select", build_view_cover, cmap, scene, cfg.tol,
                  cfg.max_views)

    def prompt_stage():
        segmenter = make_segmenter(cfg.segmenter, scene)
        views_by_id = {v.id: v for v in scene.views}
        masks = {}
        for instance_id, vids in cover.selected.items():
            for vid in vids:
                ix, iy = cover.pixels[(instance_id, vid)]
                masks[(instance_id, vid)] = instance_view_mask(
                    segmenter, views_by_id[vid], ix, iy, cfg.segmenter)
        return masks

    masks = timed("prompting", prompt_stage)

    def vote_stage():
        table = compute_point_confidences(cmap, cover, masks)
        compute_superpoint_confidences(scene, cmap, table)
        labels = assign_labels(scene, cmap, table.sp_conf)
        scores = instance_scores(labels, scene, table.sp_conf)
        return labels, scores, table.sp_conf

    labels, scores, sp_conf = timed("confidence-vote", vote_stage)

    report = None
    if scene.gt_labels is not None:
        report = timed("eval", evaluate_labels, labels, scene, scores)

    diagnostics = {
        "stage_seconds": timings,
        "uncovered_points": {int(k): int(v.size) for k, v in cover.uncovered.items()},
        "candidate_counts": {int(k): int(v.size) for k, v in cmap.points.items()},
        "selected_views": {int(k): list(map(int, v)) for k, v in cover.selected.items()},
    }
    return RefinementResult(labels=labels, report=report, scores=scores,
                            diagnostics=diagnostics,
                            label_report=_label_report(labels, cover, sp_conf))


def run_baseline(cfg: PipelineConfig) -> RefinementResult:
    """Candidate init plus the smallest-box heuristic, evaluated like refine."""
    scene = _checked("load", load_scene_bundle, cfg.bundle)
    scene = _checked("superpoints", _ensure_superpoints, scene, cfg.seg_params)
    if cfg.noise is not None:
        boxes = _checked("box-noise", perturb_scene_boxes, scene, cfg.noise)
    else:
        boxes = scene.boxes
    cmap = _checked("candidate-init", build_candidate_map, scene, boxes)
    labels = _checked("confidence-vote", baseline_assign, cmap, boxes,
                      scene.point_count)
    # Rank by ascending box volume: smaller boxes are more trusted.
    scores = {b.instance_id: 1.0 / (1.0 + b.volume()) for b in boxes}
    report = None
    if scene.gt_labels is not None:
        report = _checked("eval", evaluate_labels, labels, scene, scores)
    return RefinementResult(labels=labels, report=report, scores=scores,
                            diagnostics={})


_HIST_EDGES = [round(-1.0 + 0.2 * i, 1) for i in range(11)]


def _label_report(labels: np.ndarray, cover, sp_conf: dict) -> dict:
    """Per-instance point counts, uncovered counts, and histograms of the
    observed superpoint confidences."""
    counts = {}
    for k in np.unique(labels):
        if int(k) >= 0:
            counts[int(k)] = int(np.count_nonzero(labels == k))
    histograms = {}
    for k, entry in sp_conf.items():
        values = np.array([c for c in entry.values() if not np.isnan(c)])
        hist, _ = np.histogram(np.clip(values, -1.0, 1.0), bins=_HIST_EDGES)
        histograms[int(k)] = hist.tolist()
    return {
        "per_instance_points": counts,
        "uncovered_points": {int(k): int(v.size) for k, v in cover.uncovered.items()},
        "confidence_histograms": {
            "bin_edges": _HIST_EDGES,
            "per_instance": histograms,
        },
    }


# -- Deterministic serialization ------------------------------------------------


def _fixed(obj):
    """Round floats to 6 significant digits recursively for byte-stable JSON."""
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: _fixed(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_fixed(v) for v in obj]
    return obj


def dump_report_json(report: EvalReport, extra: dict | None = None) -> str:
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    return json.dumps(_fixed(payload), indent=2, sort_keys=True) + "\n"


def write_labels(labels: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(np.asarray(labels, dtype="<i4").tobytes())


def read_labels(path: str | Path) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype="<i4").copy()


def write_outputs(result: RefinementResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_labels(result.labels, out / "labels.i32")
    scores = {str(k): v for k, v in sorted(result.scores.items())}
    (out / "scores.json").write_text(
        json.dumps(_fixed(scores), indent=2, sort_keys=True) + "\n")
    if result.report is not None:
        (out / "report.json").write_text(
            dump_report_json(result.report, extra=result.label_report))
    elif result.label_report:
        (out / "report.json").write_text(
            json.dumps(_fixed(result.label_report), indent=2, sort_keys=True) + "\n")
    if result.diagnostics:
        (out / "diagnostics.json").write_text(
            json.dumps(result.diagnostics, indent=2, sort_keys=True) + "\n")


# -- Sweeps ----------------------------------------------------------------------


_ROW_METRICS = ("wrong_points", "wrong_superpoints", "ap50", "ap25",
                "mean_iou", "map_ladder")


def run_sweep(cfg: PipelineConfig, lambdas: list[float], betas: list[float],
              seeds: list[int], modes: list[PromptMode] | None = None) -> list[dict]:
    """Cross-product experiment grid over one bundle.

    Emits one row per (lambda, beta, seed[, mode]) carrying refined and
    baseline metrics side by side; per-cell failures are recorded in the row
    and the sweep continues.
    """
    if not lambdas or not betas or not seeds:
        raise ConfigError("sweep grids must be non-empty")
    if modes is None:
        modes = [cfg.segmenter.mode]

    rows: list[dict] = []
    for lam in lambdas:
        for beta in betas:
            for seed in seeds:
                for mode in modes:
                    row = {"lambda": lam, "beta": beta, "seed": seed,
                           "mode": mode.value}
                    noise = NoiseConfig(lam=lam, seed=seed,
                                        clamp_to_cover=(cfg.noise.clamp_to_cover
                                                        if cfg.noise else True))
                    seg = dataclasses.replace(cfg.segmenter, beta=beta, mode=mode)
                    cell = dataclasses.replace(cfg, noise=noise, segmenter=seg)
                    try:
                        refined = run_refinement(cell)
                        base = run_baseline(cell)
                        if refined.report is not None:
                            for m in _ROW_METRICS:
                                row[f"refined_{m}"] = getattr(refined.report, m)
                                row[f"baseline_{m}"] = getattr(base.report, m)
                    except (StageError, ConfigError) as exc:
                        row["error"] = str(exc)
                    rows.append(row)
    return rows


def sweep_to_csv(rows: list[dict]) -> str:
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for key in columns:
            value = row.get(key, "")
            if isinstance(value, float):
                value = f"{value:.6g}"
            cells.append(str(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_sweep(rows: list[dict], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_to_csv(rows))
    (out / "sweep.json").write_text(
        json.dumps(_fixed(rows), indent=2, sort_keys=True) + "\n")
