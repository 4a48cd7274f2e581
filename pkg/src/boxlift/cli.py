"""Command-line front end.

Subcommands: synth, superpoints, perturb-boxes, refine, baseline, eval,
sweep.  Exit codes: 0 success, 2 configuration error, 3 stage failure.  The
SEGMENTER_ENDPOINT environment variable switches refinement to the remote
backend unless --backend says otherwise.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .boxnoise import NoiseConfig, perturb_scene_boxes
from .camera import VisibilityTolerance
from .evalmetrics import evaluate_labels
from .pipeline import (ConfigError, PipelineConfig, StageError, dump_report_json,
                       read_labels, run_baseline, run_refinement, run_sweep,
                       write_outputs, write_sweep)
from .prompting import OracleNoise, PromptMode, SegmenterConfig
from .scene import box_to_json, load_scene_bundle, save_scene_bundle
from .superpoints import SegParams, compute_superpoints
from .synth import SynthConfig, generate_scene, generate_suite


def _add_noise_args(p: argparse.ArgumentParser):
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="box noise rate; omit to use the bundle's boxes")
    p.add_argument("--seed", type=int, default=0, help="box noise seed")
    p.add_argument("--no-clamp", action="store_true",
                   help="do not force noisy boxes to keep covering the instance")


def _noise_from_args(args) -> NoiseConfig | None:
    if args.lam is None:
        return None
    return NoiseConfig(lam=args.lam, seed=args.seed,
                       clamp_to_cover=not args.no_clamp)


def _add_segmenter_args(p: argparse.ArgumentParser):
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--mode", choices=["merged", "single"], default="merged")
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--backend", choices=["oracle", "remote"], default=None)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--oracle-morph", type=int, default=0,
                   help="oracle mask erosion (>0) or dilation (<0) in pixels")
    p.add_argument("--oracle-jitter", type=float, default=0.0)
    p.add_argument("--oracle-mislabel", type=float, default=0.0)
    p.add_argument("--oracle-seed", type=int, default=0)


def _segmenter_from_args(args) -> SegmenterConfig:
    backend = args.backend
    if backend is None:
        backend = "remote" if os.environ.get("SEGMENTER_ENDPOINT") else "oracle"
    mode = PromptMode.MERGED if args.mode == "merged" else PromptMode.SINGLE_COMBINED
    return SegmenterConfig(
        mode=mode, beta=args.beta, window=args.window, backend=backend,
        endpoint=args.endpoint,
        oracle_noise=OracleNoise(morph=args.oracle_morph, jitter=args.oracle_jitter,
                                 mislabel=args.oracle_mislabel, seed=args.oracle_seed))


def _pipeline_config(args) -> PipelineConfig:
    if not (Path(args.bundle) / "manifest.json").is_file():
        raise ConfigError(f"bundle {args.bundle} has no manifest.json")
    cfg = {}
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
    seg_params = SegParams(**cfg.get("seg_params", {}))
    tol = VisibilityTolerance(**cfg.get("tol", {}))
    return PipelineConfig(
        bundle=args.bundle,
        noise=_noise_from_args(args),
        segmenter=_segmenter_from_args(args),
        seg_params=seg_params,
        tol=tol,
        out_dir=getattr(args, "out", None),
        parallelism=int(cfg.get("parallelism", 1)),
    )


def _cmd_synth(args) -> int:
    cfg = SynthConfig(seed=args.seed, room=tuple(args.room),
                      object_count=args.objects, points_per_m2=args.density,
                      view_count=args.views, occlusion=args.occlusion)
    out = Path(args.out)
    if args.count > 1:
        paths = generate_suite(args.count, cfg, args.seed, out)
        for p in paths:
            print(p)
    else:
        scene = generate_scene(cfg)
        save_scene_bundle(scene, out)
        print(f"{out}: {scene.point_count} points, "
              f"{len(scene.boxes)} instances, {len(scene.views)} views")
    return 0


def _cmd_superpoints(args) -> int:
    scene = load_scene_bundle(args.bundle)
    params = SegParams(knn=args.knn, threshold_k=args.k, min_size=args.min_size)
    sp = compute_superpoints(scene.points, params, normals=scene.normals)
    scene.superpoints = sp
    save_scene_bundle(scene, args.bundle)
    print(f"{args.bundle}: {sp.superpoint_count} superpoints")
    return 0


def _cmd_perturb_boxes(args) -> int:
    scene = load_scene_bundle(args.bundle)
    noise = NoiseConfig(lam=args.lam, seed=args.seed,
                        clamp_to_cover=not args.no_clamp)
    boxes = perturb_scene_boxes(scene, noise)
    payload = json.dumps([box_to_json(b) for b in boxes], indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload)
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_refine(args) -> int:
    cfg = _pipeline_config(args)
    result = run_refinement(cfg)
    out = Path(args.out)
    write_outputs(result, out)
    if result.report is not None:
        print(f"wrong_points={result.report.wrong_points} "
              f"ap50={result.report.ap50:.4f} mean_iou={result.report.mean_iou:.4f}")
    else:
        print(f"labels written to {out / 'labels.i32'}")
    return 0


def _cmd_baseline(args) -> int:
    cfg = _pipeline_config(args)
    result = run_baseline(cfg)
    write_outputs(result, Path(args.out))
    if result.report is not None:
        print(f"wrong_points={result.report.wrong_points} "
              f"ap50={result.report.ap50:.4f}")
    return 0


def _cmd_eval(args) -> int:
    scene = load_scene_bundle(args.bundle)
    pred = read_labels(args.pred)
    scores = None
    if args.scores:
        raw = json.loads(Path(args.scores).read_text())
        scores = {int(k): float(v) for k, v in raw.items()}
    report = evaluate_labels(pred, scene, scores)
    payload = dump_report_json(report)
    if args.json:
        Path(args.json).write_text(payload)
    sys.stdout.write(payload)
    return 0


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x != ""]


def _cmd_sweep(args) -> int:
    cfg = _pipeline_config(args)
    if cfg.noise is None and args.no_clamp:
        # lambdas come from the grid; carry the clamp choice through
        cfg.noise = NoiseConfig(lam=0.0, seed=args.seed, clamp_to_cover=False)
    modes = None
    if args.modes:
        lookup = {"merged": PromptMode.MERGED, "single": PromptMode.SINGLE_COMBINED}
        modes = [lookup[m] for m in args.modes.split(",")]
    rows = run_sweep(cfg, _parse_floats(args.lambdas), _parse_floats(args.betas),
                     [int(s) for s in args.seeds.split(",")], modes)
    write_sweep(rows, args.out)
    print(f"{len(rows)} rows -> {Path(args.out) / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxlift",
        description="Refine noisy 3D box annotations into point-wise instance labels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene bundle")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--objects", type=int, default=4)
    p.add_argument("--views", type=int, default=12)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1,
                   help="generate a suite of this many bundles under --out")
    p.add_argument("--room", type=float, nargs=3, default=[5.0, 5.0, 2.2])
    p.add_argument("--density", type=float, default=50.0)
    p.add_argument("--occlusion", action="store_true")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("superpoints", help="compute and store superpoints")
    p.add_argument("--bundle", required=True)
    p.add_argument("--knn", type=int, default=10)
    p.add_argument("--k", type=float, default=0.05)
    p.add_argument("--min-size", type=int, default=20)
    p.set_defaults(fn=_cmd_superpoints)

    p = sub.add_parser("perturb-boxes", help="write noisy boxes as JSON")
    p.add_argument("--bundle", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--no-clamp", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_perturb_boxes)

    for name, fn in (("refine", _cmd_refine), ("baseline", _cmd_baseline)):
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--bundle", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--config", default=None, help="JSON config file")
        _add_noise_args(p)
        _add_segmenter_args(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("eval", help="evaluate a label file against a bundle")
    p.add_argument("--pred", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--json", default=None)
    p.add_argument("--scores", default=None,
                   help="instance->score JSON for AP ranking")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("sweep", help="cross-product experiment grid")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--lambdas", required=True, help="comma-separated, e.g. 0,0.1,0.2")
    p.add_argument("--betas", default="0.5")
    p.add_argument("--seeds", default="0")
    p.add_argument("--modes", default=None, help="comma-separated: merged,single")
    _add_noise_args(p)
    _add_segmenter_args(p)
    p.set_defaults(fn=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"{exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
