"""boxlift: noisy 3D box annotations -> point-wise instance labels.

The pipeline projects candidate points into greedily selected camera views,
queries a promptable 2D segmenter with complementary foreground/background
prompts, ensembles the scores into per-point confidences, and votes at the
superpoint level.
"""

from .boxnoise import NoiseConfig, perturb_box, perturb_scene_boxes, tight_box
from .camera import (Projection, VisibilityTolerance, project_point,
                     project_points, render_gt, visible, visible_mask)
from .candidates import CandidateMap, build_candidate_map, superpoints_in_box
from .confidence import (UNOBSERVED, ConfidenceTable, assign_labels,
                         baseline_assign, compute_point_confidences,
                         compute_superpoint_confidences, point_confidence,
                         superpoint_confidence)
from .evalmetrics import (EvalReport, ap_at, evaluate_labels, instance_iou,
                          wrong_points, wrong_superpoints)
from .pipeline import (PipelineConfig, RefinementResult, run_baseline,
                       run_refinement, run_sweep)
from .prompting import (BoxPrompt, OracleNoise, OracleSegmenter, PointPrompt,
                        PromptMode, RemoteSegmenter, SegmenterConfig,
                        background_window_prompts, foreground_box_prompt,
                        instance_view_mask, merge_masks)
from .scene import (BACKGROUND, CameraView, InstanceBox, Scene,
                    SuperpointPartition, load_scene_bundle, save_scene_bundle,
                    validate_scene)
from .superpoints import (PointGraph, SegParams, build_normal_graph,
                          compute_superpoints, estimate_normals, fh_segment)
from .synth import SynthConfig, generate_scene, generate_suite
from .viewselect import (ViewCover, build_view_cover, greedy_cover,
                         greedy_select_views, visible_candidates)

__version__ = "0.1.0"
