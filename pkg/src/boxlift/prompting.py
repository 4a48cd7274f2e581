"""Complementary prompt generation and promptable-segmenter adapters.

For each (instance, view) pair the foreground prompt is the 2D bounding box
of the projected candidate pixels and the background prompts are points in
empty occupancy-grid cells adjacent to occupied ones.  Adapters return
image-sized score masks in [0, 1]; masks are merged as

    merged = fg - beta * elementwise_max(bg_1, ..., bg_n)

so background evidence pushes scores negative.  Two adapters ship: a
ground-truth oracle (with optional seeded corruption) and a remote HTTP
client speaking the service wire protocol.
"""

from __future__ import annotations

import base64
import hashlib
import io
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .camera import render_gt
from .scene import BACKGROUND, CameraView, Scene


class TransportError(RuntimeError):
    """The segmentation backend is unreachable or failed to answer."""


class ProtocolError(RuntimeError):
    """The backend answered with a malformed or mismatched payload."""


@dataclass(frozen=True)
class BoxPrompt:
    """Foreground box prompt, inclusive pixel corners, x0 <= x1, y0 <= y1."""

    x0: int
    y0: int
    x1: int
    y1: int


@dataclass(frozen=True)
class PointPrompt:
    """Point prompt; label 0 marks background (negative) points."""

    x: int
    y: int
    label: int = 0


Prompt = BoxPrompt | PointPrompt


class PromptMode(Enum):
    MERGED = "merged"
    SINGLE_COMBINED = "single_combined"


@dataclass(frozen=True)
class OracleNoise:
    """Seeded corruption applied to oracle masks.

    morph > 0 erodes the mask by that many pixels, morph < 0 dilates;
    jitter adds per-pixel uniform noise in [-jitter, jitter] (clipped back to
    [0, 1]); mislabel answers with an image-adjacent instance with the given
    probability.  Noise is derived per (view, prompt), so identical queries
    always produce identical masks.
    """

    morph: int = 0
    jitter: float = 0.0
    mislabel: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class SegmenterConfig:
    mode: PromptMode = PromptMode.MERGED
    beta: float = 0.5
    window: int = 32
    backend: str = "oracle"  # "oracle" | "remote"
    endpoint: str | None = None
    oracle_noise: OracleNoise = field(default_factory=OracleNoise)

    def __post_init__(self):
        if self.beta < 0 or self.window < 1:
            raise ValueError("beta must be >= 0 and window >= 1")


# -- Prompt construction -------------------------------------------------------


def foreground_box_prompt(pixel_x: np.ndarray, pixel_y: np.ndarray,
                          width: int, height: int) -> BoxPrompt:
    """Bounding box of the projected pixels, clipped to image bounds."""
    pixel_x = np.asarray(pixel_x)
    pixel_y = np.asarray(pixel_y)
    if pixel_x.size == 0:
        raise ValueError("no projected pixels to prompt from")
    x0 = int(np.clip(pixel_x.min(), 0, width - 1))
    x1 = int(np.clip(pixel_x.max(), 0, width - 1))
    y0 = int(np.clip(pixel_y.min(), 0, height - 1))
    y1 = int(np.clip(pixel_y.max(), 0, height - 1))
    return BoxPrompt(x0=x0, y0=y0, x1=x1, y1=y1)


def occupancy_grid(pixel_x: np.ndarray, pixel_y: np.ndarray,
                   width: int, height: int, window: int) -> np.ndarray:
    rows = -(-height // window)
    cols = -(-width // window)
    grid = np.zeros((rows, cols), dtype=bool)
    pixel_x = np.asarray(pixel_x, dtype=np.int64)
    pixel_y = np.asarray(pixel_y, dtype=np.int64)
    ok = (pixel_x >= 0) & (pixel_x < width) & (pixel_y >= 0) & (pixel_y < height)
    grid[pixel_y[ok] // window, pixel_x[ok] // window] = True
    return grid


def background_window_prompts(pixel_x: np.ndarray, pixel_y: np.ndarray,
                              width: int, height: int,
                              window: int = 32) -> list[PointPrompt]:
    """Background points at centers of empty cells 8-adjacent to occupied ones.

    The image is tiled into window x window cells; a cell is occupied when it
    contains a projected pixel.  Prompts come out in row-major cell order,
    deduplicated, clipped to image bounds.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    grid = occupancy_grid(pixel_x, pixel_y, width, height, window)
    if not grid.any():
        return []
    near = ndimage.binary_dilation(grid, structure=np.ones((3, 3), dtype=bool))
    ring = near & ~grid

    prompts: list[PointPrompt] = []
    seen = set()
    for row, col in np.argwhere(ring):
        cx = min(int(col) * window + window // 2, width - 1)
        cy = min(int(row) * window + window // 2, height - 1)
        if (cx, cy) not in seen:
            seen.add((cx, cy))
            prompts.append(PointPrompt(x=cx, y=cy, label=0))
    return prompts


def merge_masks(fg: np.ndarray, bgs: list[np.ndarray], beta: float) -> np.ndarray:
    """merged = fg - beta * elementwise max of the background masks.

    With no background masks the foreground comes back unchanged.  Negative
    outputs are legal and meaningful downstream.
    """
    fg = np.asarray(fg, dtype=np.float64)
    merged = fg.copy()
    if bgs:
        stack = []
        for bg in bgs:
            bg = np.asarray(bg, dtype=np.float64)
            if bg.shape != fg.shape:
                raise ValueError(f"mask shape {bg.shape} != {fg.shape}")
            stack.append(bg)
        merged -= beta * np.maximum.reduce(stack)
    return merged


# -- Oracle adapter ------------------------------------------------------------


def _prompt_hash(view_id: int, prompt: Prompt, seed: int) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<qq", seed, view_id))
    if isinstance(prompt, BoxPrompt):
        h.update(struct.pack("<cqqqq", b"b", prompt.x0, prompt.y0, prompt.x1, prompt.y1))
    else:
        h.update(struct.pack("<cqqq", b"p", prompt.x, prompt.y, prompt.label))
    return int.from_bytes(h.digest(), "little")


class OracleSegmenter:
    """Ground-truth backed stand-in for a promptable 2D segmenter.

    Box prompts answer with the rendered mask of the instance owning the most
    non-background pixels inside the box (ties: lowest id); point prompts
    answer with the rendered region (instance or the whole background class)
    under the point.  Safe for concurrent use: renders are cached per view
    and noise is derived per query.
    """

    def __init__(self, scene: Scene, noise: OracleNoise = OracleNoise(),
                 footprint: int = 3):
        if scene.gt_labels is None:
            raise ValueError("oracle segmenter requires gt_labels")
        self.scene = scene
        self.noise = noise
        self.footprint = footprint
        self._renders: dict[int, np.ndarray] = {}

    def _labels(self, view: CameraView) -> np.ndarray:
        if view.id not in self._renders:
            labels, _ = render_gt(self.scene, view, footprint=self.footprint)
            self._renders[view.id] = labels
        return self._renders[view.id]

    def _resolve(self, view: CameraView, prompt: Prompt) -> int | None:
        """Label targeted by the prompt; None when a box holds no instance."""
        labels = self._labels(view)
        if isinstance(prompt, BoxPrompt):
            window = labels[prompt.y0:prompt.y1 + 1, prompt.x0:prompt.x1 + 1]
            ids, counts = np.unique(window[window != BACKGROUND], return_counts=True)
            if ids.size == 0:
                return None
            return int(ids[np.lexsort((ids, -counts))[0]])
        if not (0 <= prompt.x < view.width and 0 <= prompt.y < view.height):
            raise ValueError(f"point prompt {prompt} outside view {view.id}")
        return int(labels[prompt.y, prompt.x])

    def _adjacent_labels(self, labels: np.ndarray, target: int) -> np.ndarray:
        mask = labels == target
        halo = ndimage.binary_dilation(mask, structure=np.ones((3, 3), dtype=bool)) & ~mask
        return np.unique(labels[halo])

    def segment(self, view: CameraView, prompt: Prompt) -> np.ndarray:
        labels = self._labels(view)
        target = self._resolve(view, prompt)
        if target is None:
            return np.zeros((view.height, view.width), dtype=np.float32)

        rng = np.random.Generator(np.random.Philox(
            key=_prompt_hash(view.id, prompt, self.noise.seed)))

        if self.noise.mislabel > 0 and rng.random() < self.noise.mislabel:
            neighbors = self._adjacent_labels(labels, target)
            if isinstance(prompt, BoxPrompt):
                neighbors = neighbors[neighbors != BACKGROUND]
            neighbors = neighbors[neighbors != target]
            if neighbors.size:
                target = int(neighbors[rng.integers(neighbors.size)])

        mask = labels == target
        if self.noise.morph > 0:
            mask = ndimage.binary_erosion(mask, iterations=self.noise.morph)
        elif self.noise.morph < 0:
            mask = ndimage.binary_dilation(mask, iterations=-self.noise.morph)
        scores = mask.astype(np.float32)
        if self.noise.jitter > 0:
            scores = scores + rng.uniform(-self.noise.jitter, self.noise.jitter,
                                          size=scores.shape)
            scores = np.clip(scores, 0.0, 1.0).astype(np.float32)
        return scores

    def segment_combined(self, view: CameraView, box: BoxPrompt,
                         points: list[PointPrompt]) -> np.ndarray:
        """Single-call mode: box mask minus point-region masks, clipped to [0, 1]."""
        fg = self.segment(view, box).astype(np.float64)
        if points:
            bgs = [self.segment(view, p).astype(np.float64) for p in points]
            fg = fg - np.maximum.reduce(bgs)
        return np.clip(fg, 0.0, 1.0).astype(np.float32)


# -- Remote adapter ------------------------------------------------------------


def _prompt_to_json(prompt: Prompt) -> dict:
    if isinstance(prompt, BoxPrompt):
        return {"type": "box", "xyxy": [prompt.x0, prompt.y0, prompt.x1, prompt.y1]}
    return {"type": "point", "xy": [prompt.x, prompt.y], "label": prompt.label}


class RemoteSegmenter:
    """HTTP client for a promptable-segmentation service.

    POSTs /segment with a single prompt per request and decodes the base64
    float32 score payload.  Responses are cached per (image, prompt), so
    repeated prompts cost one round trip.
    """

    def __init__(self, endpoint: str, image_id_prefix: str = "scene",
                 timeout: float = 30.0, session=None):
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.image_id_prefix = image_id_prefix
        self.timeout = timeout
        self._session = session or requests.Session()
        self._cache: dict[tuple[str, int], np.ndarray] = {}
        self._uploaded: set[str] = set()

    def _image_id(self, view: CameraView) -> str:
        return f"{self.image_id_prefix}/view_{view.id:03d}"

    def _encode_rgb(self, view: CameraView) -> str | None:
        if view.rgb is None:
            return None
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(view.rgb, mode="RGB").save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")

    def segment(self, view: CameraView, prompt: Prompt) -> np.ndarray:
        import requests

        image_id = self._image_id(view)
        key = (image_id, _prompt_hash(view.id, prompt, 0))
        if key in self._cache:
            return self._cache[key]

        body = {
            "image_id": image_id,
            "width": view.width,
            "height": view.height,
            "prompt": _prompt_to_json(prompt),
        }
        if image_id not in self._uploaded:
            png = self._encode_rgb(view)
            if png is not None:
                body["image_png_b64"] = png
        try:
            resp = self._session.post(f"{self.endpoint}/segment", json=body,
                                      timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"segmenter at {self.endpoint} unreachable: {exc}") from exc
        if resp.status_code == 503:
            raise TransportError("segmenter model not loaded (503)")
        if resp.status_code != 200:
            raise ProtocolError(f"segmenter returned HTTP {resp.status_code}: "
                                f"{resp.text[:200]}")
        self._uploaded.add(image_id)

        payload = resp.json()
        if payload.get("width") != view.width or payload.get("height") != view.height:
            raise ProtocolError(
                f"mask dimensions {payload.get('width')}x{payload.get('height')} "
                f"!= view {view.width}x{view.height}")
        raw = base64.b64decode(payload["scores_f32_b64"])
        if len(raw) != view.width * view.height * 4:
            raise ProtocolError(f"score payload of {len(raw)} bytes, expected "
                                f"{view.width * view.height * 4}")
        scores = np.frombuffer(raw, dtype="<f4").reshape(view.height, view.width).copy()
        self._cache[key] = scores
        return scores

    def segment_combined(self, view: CameraView, box: BoxPrompt,
                         points: list[PointPrompt]) -> np.ndarray:
        raise ProtocolError(
            "the wire protocol carries one prompt per request; "
            "single-combined mode requires the oracle backend")


def make_segmenter(cfg: SegmenterConfig, scene: Scene | None = None):
    if cfg.backend == "oracle":
        if scene is None:
            raise ValueError("oracle backend requires a scene")
        return OracleSegmenter(scene, noise=cfg.oracle_noise)
    if cfg.backend == "remote":
        import os

        endpoint = cfg.endpoint or os.environ.get("SEGMENTER_ENDPOINT")
        if not endpoint:
            raise ValueError("remote backend requires an endpoint "
                             "(config or SEGMENTER_ENDPOINT)")
        return RemoteSegmenter(endpoint)
    raise ValueError(f"unknown segmenter backend {cfg.backend!r}")


def instance_view_mask(segmenter, view: CameraView, pixel_x: np.ndarray,
                       pixel_y: np.ndarray, cfg: SegmenterConfig) -> np.ndarray:
    """Score mask for one (instance, view) pair from its visible pixels."""
    if np.asarray(pixel_x).size == 0:
        raise ValueError("instance has no visible pixels in this view")
    box = foreground_box_prompt(pixel_x, pixel_y, view.width, view.height)
    bg_prompts = background_window_prompts(pixel_x, pixel_y, view.width,
                                           view.height, cfg.window)
    if cfg.mode is PromptMode.SINGLE_COMBINED:
        return segmenter.segment_combined(view, box, bg_prompts)
    fg = segmenter.segment(view, box)
    bgs = [segmenter.segment(view, p) for p in bg_prompts]
    return merge_masks(fg, bgs, cfg.beta)
