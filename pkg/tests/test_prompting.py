import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxlift.prompting import (BoxPrompt, OracleNoise, OracleSegmenter,
                               PointPrompt, PromptMode, SegmenterConfig,
                               background_window_prompts, foreground_box_prompt,
                               instance_view_mask, merge_masks, occupancy_grid)
from boxlift.scene import BACKGROUND

from conftest import leakage_scene, tiny_scene


def test_foreground_box_from_pixels():
    box = foreground_box_prompt(np.array([10, 30]), np.array([20, 5]), 64, 48)
    assert (box.x0, box.y0, box.x1, box.y1) == (10, 5, 30, 20)


def test_foreground_box_degenerate_single_pixel():
    box = foreground_box_prompt(np.array([7]), np.array([7]), 64, 48)
    assert (box.x0, box.y0, box.x1, box.y1) == (7, 7, 7, 7)


def test_foreground_box_clipped_to_bounds():
    box = foreground_box_prompt(np.array([-2, 10]), np.array([10, 10]), 64, 48)
    assert box.x0 == 0


def test_foreground_box_requires_pixels():
    with pytest.raises(ValueError):
        foreground_box_prompt(np.array([]), np.array([]), 64, 48)


def test_background_prompts_ring_around_center_cell():
    # 96x96 image, window 32: 3x3 cells; projections confined to the center
    px = np.array([40, 50])
    py = np.array([40, 50])
    prompts = background_window_prompts(px, py, 96, 96, window=32)
    assert len(prompts) == 8
    centers = {(p.x, p.y) for p in prompts}
    assert (48, 48) not in centers  # occupied cell itself excluded
    assert all(p.label == 0 for p in prompts)


def test_background_prompts_row_major_order():
    prompts = background_window_prompts(np.array([40]), np.array([40]), 96, 96, 32)
    ordered = [(p.y, p.x) for p in prompts]
    assert ordered == sorted(ordered)


def test_background_prompts_full_frame_empty():
    xs, ys = np.meshgrid(np.arange(0, 96, 8), np.arange(0, 96, 8))
    prompts = background_window_prompts(xs.ravel(), ys.ravel(), 96, 96, 32)
    assert prompts == []


def test_background_prompts_no_projections_empty():
    assert background_window_prompts(np.array([]), np.array([]), 96, 96, 32) == []


def test_background_prompts_clipped_to_image():
    # occupied bottom-right corner cell of a non-multiple-of-window image
    prompts = background_window_prompts(np.array([99]), np.array([99]), 100, 100, 32)
    assert all(0 <= p.x < 100 and 0 <= p.y < 100 for p in prompts)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 95), st.integers(0, 95)), min_size=1,
                max_size=40))
def test_background_prompts_never_inside_occupied_cells(pixels):
    px = np.array([p[0] for p in pixels])
    py = np.array([p[1] for p in pixels])
    grid = occupancy_grid(px, py, 96, 96, 32)
    for p in background_window_prompts(px, py, 96, 96, 32):
        assert not grid[p.y // 32, p.x // 32]


def test_merge_reference_arithmetic():
    fg = np.full((2, 2), 0.9)
    bgs = [np.full((2, 2), 0.2), np.full((2, 2), 0.6)]
    merged = merge_masks(fg, bgs, beta=0.5)
    assert np.allclose(merged, 0.9 - 0.5 * 0.6)


def test_merge_beta_zero_identity():
    fg = np.random.default_rng(0).random((3, 4))
    merged = merge_masks(fg, [np.ones((3, 4))], beta=0.0)
    assert np.allclose(merged, fg)


def test_merge_no_backgrounds_identity():
    fg = np.random.default_rng(1).random((3, 4))
    assert np.allclose(merge_masks(fg, [], beta=0.5), fg)


def test_merge_negative_scores_allowed():
    merged = merge_masks(np.full((1, 1), 0.3), [np.full((1, 1), 1.0)], beta=0.5)
    assert merged[0, 0] == pytest.approx(-0.2)


def test_merge_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        merge_masks(np.zeros((2, 2)), [np.zeros((3, 3))], beta=0.5)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 1000), bump=st.floats(0.0, 0.5))
def test_merge_monotonicity(seed, bump):
    rng = np.random.default_rng(seed)
    fg = rng.random((4, 4))
    bgs = [rng.random((4, 4)) for _ in range(3)]
    base = merge_masks(fg, bgs, beta=0.5)
    higher_bg = merge_masks(fg, [np.clip(b + bump, 0, 1) for b in bgs], beta=0.5)
    assert (higher_bg <= base + 1e-12).all()
    higher_fg = merge_masks(np.clip(fg + bump, 0, 1), bgs, beta=0.5)
    assert (higher_fg >= base - 1e-12).all()


# -- oracle adapter -----------------------------------------------------------


def test_oracle_box_prompt_returns_instance_mask():
    scene = tiny_scene()
    view = scene.views[0]
    oracle = OracleSegmenter(scene)
    labels = oracle._labels(view)
    ys, xs = np.nonzero(labels == 1)
    mask = oracle.segment(view, BoxPrompt(xs.min(), ys.min(), xs.max(), ys.max()))
    assert mask.shape == (view.height, view.width)
    assert np.array_equal(mask == 1.0, labels == 1)


def test_oracle_majority_rule_with_ties_prefers_lowest_id():
    scene = tiny_scene()
    scene.gt_labels = np.array([2, 1, BACKGROUND], dtype=np.int32)
    view = scene.views[0]
    oracle = OracleSegmenter(scene)
    labels = oracle._labels(view)
    n1 = (labels == 1).sum()
    n2 = (labels == 2).sum()
    full = BoxPrompt(0, 0, view.width - 1, view.height - 1)
    target = 1 if n1 >= n2 else 2
    if n1 == n2:
        target = 1
    mask = oracle.segment(view, full)
    assert np.array_equal(mask == 1.0, labels == target)


def test_oracle_point_prompt_background_region():
    scene = tiny_scene()
    view = scene.views[0]
    oracle = OracleSegmenter(scene)
    labels = oracle._labels(view)
    ys, xs = np.nonzero(labels == BACKGROUND)
    mask = oracle.segment(view, PointPrompt(int(xs[0]), int(ys[0])))
    assert np.array_equal(mask == 1.0, labels == BACKGROUND)


def test_oracle_empty_box_zero_mask():
    scene = tiny_scene()
    view = scene.views[0]
    oracle = OracleSegmenter(scene)
    labels = oracle._labels(view)
    # find a corner window with no instance pixels
    assert (labels[:8, :8] == BACKGROUND).all()
    mask = oracle.segment(view, BoxPrompt(0, 0, 7, 7))
    assert (mask == 0).all()


def test_oracle_jitter_reproducible_and_clipped():
    scene = tiny_scene()
    view = scene.views[0]
    noise = OracleNoise(jitter=0.1, seed=5)
    a = OracleSegmenter(scene, noise).segment(view, BoxPrompt(0, 0, 127, 95))
    b = OracleSegmenter(scene, noise).segment(view, BoxPrompt(0, 0, 127, 95))
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert not np.array_equal(a, OracleSegmenter(scene).segment(
        view, BoxPrompt(0, 0, 127, 95)))


def test_oracle_erosion_shrinks_mask():
    scene, _ = leakage_scene()
    view = scene.views[0]
    plain = OracleSegmenter(scene)
    eroded = OracleSegmenter(scene, OracleNoise(morph=1))
    labels = plain._labels(view)
    ys, xs = np.nonzero(labels == 1)
    prompt = BoxPrompt(xs.min(), ys.min(), xs.max(), ys.max())
    assert eroded.segment(view, prompt).sum() < plain.segment(view, prompt).sum()


def test_oracle_dilation_grows_mask():
    scene, _ = leakage_scene()
    view = scene.views[0]
    plain = OracleSegmenter(scene)
    dilated = OracleSegmenter(scene, OracleNoise(morph=-2))
    labels = plain._labels(view)
    ys, xs = np.nonzero(labels == 1)
    prompt = BoxPrompt(xs.min(), ys.min(), xs.max(), ys.max())
    assert dilated.segment(view, prompt).sum() > plain.segment(view, prompt).sum()


def test_instance_view_mask_merged_equals_manual_composition():
    scene, _ = leakage_scene()
    view = scene.views[0]
    oracle = OracleSegmenter(scene)
    from boxlift.camera import project_points, round_pixels, visible_mask

    candidates = np.flatnonzero(scene.gt_labels == 1)
    vis = candidates[visible_mask(scene.points[candidates], view)]
    px, py, _, _ = project_points(scene.points[vis], view)
    ix, iy = round_pixels(px, py)

    cfg = SegmenterConfig(mode=PromptMode.MERGED, beta=0.5)
    auto = instance_view_mask(oracle, view, ix, iy, cfg)

    box = foreground_box_prompt(ix, iy, view.width, view.height)
    bg = background_window_prompts(ix, iy, view.width, view.height, cfg.window)
    manual = merge_masks(oracle.segment(view, box),
                         [oracle.segment(view, p) for p in bg], 0.5)
    assert np.allclose(auto, manual)


def test_instance_view_mask_merged_no_backgrounds_is_foreground():
    scene = tiny_scene()
    view = scene.views[0]
    oracle = OracleSegmenter(scene)
    # projections everywhere: occupy every cell so no background cell remains
    xs, ys = np.meshgrid(np.arange(0, view.width, 8), np.arange(0, view.height, 8))
    cfg = SegmenterConfig(mode=PromptMode.MERGED, beta=0.5)
    auto = instance_view_mask(oracle, view, xs.ravel(), ys.ravel(), cfg)
    box = foreground_box_prompt(xs.ravel(), ys.ravel(), view.width, view.height)
    assert np.allclose(auto, oracle.segment(view, box))


def test_single_combined_mode_uses_combined_oracle():
    scene, _ = leakage_scene()
    view = scene.views[0]
    oracle = OracleSegmenter(scene)
    from boxlift.camera import project_points, round_pixels, visible_mask

    candidates = np.flatnonzero(scene.gt_labels == 1)
    vis = candidates[visible_mask(scene.points[candidates], view)]
    px, py, _, _ = project_points(scene.points[vis], view)
    ix, iy = round_pixels(px, py)
    cfg = SegmenterConfig(mode=PromptMode.SINGLE_COMBINED, beta=0.5)
    mask = instance_view_mask(oracle, view, ix, iy, cfg)
    assert mask.min() >= 0.0 and mask.max() <= 1.0  # clipped by definition

    box = foreground_box_prompt(ix, iy, view.width, view.height)
    bg = background_window_prompts(ix, iy, view.width, view.height, cfg.window)
    manual = np.clip(
        oracle.segment(view, box).astype(np.float64)
        - np.maximum.reduce([oracle.segment(view, p).astype(np.float64) for p in bg]),
        0, 1)
    assert np.allclose(mask, manual)


def test_oracle_mask_dimensions_match_view():
    scene = tiny_scene()
    view = scene.views[0]
    mask = OracleSegmenter(scene).segment(view, BoxPrompt(0, 0, 10, 10))
    assert mask.shape == (view.height, view.width)
    assert mask.dtype == np.float32


def _touching_instances_scene():
    # two instances side by side whose rendered masks touch in the image
    from boxlift.camera import render_gt
    from boxlift.scene import Scene
    from conftest import simple_view

    xs = np.linspace(-0.2, 0.2, 21)
    points = np.stack([xs, np.zeros(21), np.full(21, 2.0)], axis=1).astype(np.float32)
    labels = np.where(xs < 0, 1, 2).astype(np.int32)
    scene = Scene(points=points, gt_labels=labels)
    view = simple_view()
    _, depth = render_gt(scene, view, footprint=3)
    view.depth = depth
    scene.views = [view]
    return scene


def test_oracle_mislabel_swaps_to_adjacent_instance():
    scene = _touching_instances_scene()
    view = scene.views[0]
    plain = OracleSegmenter(scene)
    labels = plain._labels(view)
    ys, xs = np.nonzero(labels == 1)
    prompt = BoxPrompt(xs.min(), ys.min(), xs.max(), ys.max())
    assert np.array_equal(plain.segment(view, prompt) == 1.0, labels == 1)

    always_wrong = OracleSegmenter(scene, OracleNoise(mislabel=1.0, seed=3))
    mask = always_wrong.segment(view, prompt)
    assert np.array_equal(mask == 1.0, labels == 2)  # the adjacent instance

    # box prompts never mislabel toward the background region
    assert not np.array_equal(mask == 1.0, labels == -1)


def test_oracle_mislabel_deterministic_per_prompt():
    scene = _touching_instances_scene()
    view = scene.views[0]
    noise = OracleNoise(mislabel=0.5, seed=9)
    a = OracleSegmenter(scene, noise)
    b = OracleSegmenter(scene, noise)
    for x0 in range(0, 40, 7):
        prompt = BoxPrompt(x0, 40, x0 + 30, 60)
        assert np.array_equal(a.segment(view, prompt), b.segment(view, prompt))


def test_oracle_point_prompt_out_of_bounds_rejected():
    scene = tiny_scene()
    with pytest.raises(ValueError):
        OracleSegmenter(scene).segment(scene.views[0], PointPrompt(-5, 3))
