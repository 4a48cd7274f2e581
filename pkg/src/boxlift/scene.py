"""Scene container and the on-disk bundle format.

A scene bundle is a directory holding ``manifest.json`` next to raw
little-endian arrays (``*.f32`` / ``*.i32``), 16-bit PGM depth maps and
optional PPM color frames.  All per-point arrays share one canonical point
order and every other module references points by index into it.  Scenes are
treated as immutable after load, so they can be shared freely across
workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BACKGROUND = -1  # instance id of points that belong to no annotated instance


class SceneFormatError(ValueError):
    """The bundle directory is structurally unreadable."""


class SceneValidationError(ValueError):
    """Bundle contents violate a scene invariant."""


@dataclass
class CameraView:
    """One RGB-D frame: pinhole intrinsics, world-to-camera pose, depth.

    ``K`` is the 3x3 upper-triangular intrinsic matrix with K[2][2] == 1 and
    ``P`` the 3x4 world-to-camera extrinsic matrix.  ``depth`` is stored in
    meters with 0 marking invalid pixels (sensor holes).
    """

    id: int
    width: int
    height: int
    K: np.ndarray
    P: np.ndarray
    depth: np.ndarray | None = None
    depth_scale_mm: float = 1.0  # storage quantum: millimeters per stored unit
    rgb: np.ndarray | None = None  # (height, width, 3) uint8


@dataclass
class InstanceBox:
    """Axis-aligned instance annotation, c_min <= c_max component-wise."""

    instance_id: int
    semantic_class: int
    c_min: np.ndarray
    c_max: np.ndarray

    def volume(self) -> float:
        return float(np.prod(np.asarray(self.c_max, dtype=np.float64) - self.c_min))


@dataclass
class SuperpointPartition:
    """Per-point superpoint ids, dense in [0, superpoint_count)."""

    assignment: np.ndarray
    superpoint_count: int

    def members(self) -> list[np.ndarray]:
        """Point indices per superpoint id."""
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.searchsorted(self.assignment[order], np.arange(self.superpoint_count + 1))
        return [order[bounds[s]:bounds[s + 1]] for s in range(self.superpoint_count)]


@dataclass
class Scene:
    points: np.ndarray  # (N, 3) float32, world coordinates in meters
    normals: np.ndarray | None = None  # (N, 3) float32, unit length
    colors: np.ndarray | None = None  # (N, 3) float32 in [0, 1]
    gt_labels: np.ndarray | None = None  # (N,) int32, instance id or BACKGROUND
    views: list[CameraView] = field(default_factory=list)
    boxes: list[InstanceBox] = field(default_factory=list)
    superpoints: SuperpointPartition | None = None

    @property
    def point_count(self) -> int:
        return int(self.points.shape[0])

    def instance_ids(self) -> np.ndarray:
        """Sorted ids of annotated instances present in gt_labels."""
        if self.gt_labels is None:
            raise ValueError("scene has no gt_labels")
        ids = np.unique(self.gt_labels)
        return ids[ids != BACKGROUND]


# -- Netpbm helpers ----------------------------------------------------------
# 16-bit PGM stores the most significant byte first, per the Netpbm spec.


def _read_pnm_header(data: bytes, magic: bytes) -> tuple[list[int], int]:
    if not data.startswith(magic):
        raise SceneFormatError(f"expected {magic.decode()} file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    return fields, pos + 1  # single whitespace byte after maxval


def write_pgm16(path: Path, image: np.ndarray) -> None:
    h, w = image.shape
    header = f"P5\n{w} {h}\n65535\n".encode()
    path.write_bytes(header + image.astype(">u2").tobytes())


def read_pgm16(path: Path) -> np.ndarray:
    data = path.read_bytes()
    (w, h, maxval), offset = _read_pnm_header(data, b"P5")
    if maxval != 65535:
        raise SceneFormatError(f"{path.name}: expected 16-bit PGM, maxval {maxval}")
    pixels = np.frombuffer(data, dtype=">u2", count=w * h, offset=offset)
    return pixels.reshape(h, w).astype(np.uint16)


def write_ppm(path: Path, image: np.ndarray) -> None:
    h, w, _ = image.shape
    header = f"P6\n{w} {h}\n255\n".encode()
    path.write_bytes(header + image.astype(np.uint8).tobytes())


def read_ppm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    (w, h, maxval), offset = _read_pnm_header(data, b"P6")
    if maxval != 255:
        raise SceneFormatError(f"{path.name}: expected 8-bit PPM, maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=offset)
    return pixels.reshape(h, w, 3).copy()


# -- Bundle I/O ---------------------------------------------------------------


def _read_array(directory: Path, name: str, dtype: str, shape: tuple) -> np.ndarray:
    raw = (directory / name).read_bytes()  # unreadable blob: propagate OSError
    arr = np.frombuffer(raw, dtype=dtype)
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise SceneValidationError(
            f"{name}: expected {expected} values, found {arr.size}")
    return arr.reshape(shape).copy()


def load_scene_bundle(path: str | Path) -> Scene:
    """Load a bundle directory; arrays are parsed bit-exactly from raw storage."""
    directory = Path(path)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise SceneFormatError(f"no manifest.json under {directory}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"manifest.json is not valid JSON: {exc}") from exc

    n = int(manifest["point_count"])
    arrays = manifest.get("arrays", {})
    if "points" not in arrays:
        raise SceneFormatError("manifest lists no points array")
    points = _read_array(directory, arrays["points"], "<f4", (n, 3))
    normals = colors = gt = None
    if "normals" in arrays:
        normals = _read_array(directory, arrays["normals"], "<f4", (n, 3))
    if "colors" in arrays:
        colors = _read_array(directory, arrays["colors"], "<f4", (n, 3))
    if "gt_labels" in arrays:
        gt = _read_array(directory, arrays["gt_labels"], "<i4", (n,))
    superpoints = None
    if "superpoints" in arrays:
        assignment = _read_array(directory, arrays["superpoints"], "<i4", (n,))
        count = int(assignment.max()) + 1 if n else 0
        superpoints = SuperpointPartition(assignment=assignment, superpoint_count=count)

    boxes = [
        InstanceBox(
            instance_id=int(b["instance_id"]),
            semantic_class=int(b["semantic_class"]),
            c_min=np.asarray(b["c_min"], dtype=np.float32),
            c_max=np.asarray(b["c_max"], dtype=np.float32),
        )
        for b in manifest.get("boxes", [])
    ]

    views = []
    for v in manifest.get("views", []):
        scale = float(v.get("depth_scale_mm_per_unit", 1.0))
        depth = None
        if v.get("depth"):
            units = read_pgm16(directory / v["depth"])
            depth = units.astype(np.float32) * np.float32(scale / 1000.0)
        rgb = read_ppm(directory / v["rgb"]) if v.get("rgb") else None
        views.append(CameraView(
            id=int(v["id"]),
            width=int(v["width"]),
            height=int(v["height"]),
            K=np.asarray(v["K"], dtype=np.float32).reshape(3, 3),
            P=np.asarray(v["P"], dtype=np.float32).reshape(3, 4),
            depth=depth,
            depth_scale_mm=scale,
            rgb=rgb,
        ))

    scene = Scene(points=points, normals=normals, colors=colors, gt_labels=gt,
                  views=views, boxes=boxes, superpoints=superpoints)
    report = validate_scene(scene)
    if report:
        raise SceneValidationError("; ".join(report))
    return scene


def save_scene_bundle(scene: Scene, path: str | Path) -> None:
    """Write ``scene`` as a bundle; a later load returns an equal scene.

    Depth maps are quantized to ``depth_scale_mm`` millimeters, so depth
    round-trips exactly when values are already multiples of the quantum
    (synthetic scenes guarantee this).
    """
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)

    arrays: dict[str, str] = {"points": "points.f32"}
    (directory / "points.f32").write_bytes(scene.points.astype("<f4").tobytes())
    if scene.normals is not None:
        arrays["normals"] = "normals.f32"
        (directory / "normals.f32").write_bytes(scene.normals.astype("<f4").tobytes())
    if scene.colors is not None:
        arrays["colors"] = "colors.f32"
        (directory / "colors.f32").write_bytes(scene.colors.astype("<f4").tobytes())
    if scene.gt_labels is not None:
        arrays["gt_labels"] = "gt.i32"
        (directory / "gt.i32").write_bytes(scene.gt_labels.astype("<i4").tobytes())
    if scene.superpoints is not None:
        arrays["superpoints"] = "sp.i32"
        (directory / "sp.i32").write_bytes(
            scene.superpoints.assignment.astype("<i4").tobytes())

    view_entries = []
    for view in scene.views:
        entry = {
            "id": view.id,
            "width": view.width,
            "height": view.height,
            "K": [float(x) for x in np.asarray(view.K, dtype=np.float32).ravel()],
            "P": [float(x) for x in np.asarray(view.P, dtype=np.float32).ravel()],
            "depth_scale_mm_per_unit": float(view.depth_scale_mm),
        }
        if view.depth is not None:
            name = f"view_{view.id:03d}.pgm"
            units = np.clip(np.rint(view.depth * (1000.0 / view.depth_scale_mm)),
                            0, 65535).astype(np.uint16)
            write_pgm16(directory / name, units)
            entry["depth"] = name
        if view.rgb is not None:
            name = f"view_{view.id:03d}.ppm"
            write_ppm(directory / name, view.rgb)
            entry["rgb"] = name
        view_entries.append(entry)

    manifest = {
        "point_count": scene.point_count,
        "arrays": arrays,
        "boxes": [box_to_json(b) for b in scene.boxes],
        "views": view_entries,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def box_to_json(box: InstanceBox) -> dict:
    return {
        "instance_id": int(box.instance_id),
        "semantic_class": int(box.semantic_class),
        "c_min": [float(x) for x in box.c_min],
        "c_max": [float(x) for x in box.c_max],
    }


def boxes_from_json(entries: list[dict]) -> list[InstanceBox]:
    return [
        InstanceBox(
            instance_id=int(b["instance_id"]),
            semantic_class=int(b["semantic_class"]),
            c_min=np.asarray(b["c_min"], dtype=np.float32),
            c_max=np.asarray(b["c_max"], dtype=np.float32),
        )
        for b in entries
    ]


# -- Validation ---------------------------------------------------------------


def validate_scene(scene: Scene) -> list[str]:
    """Check every scene invariant; returns one entry per violation."""
    report: list[str] = []
    n = scene.point_count
    if not np.all(np.isfinite(scene.points)):
        bad = np.flatnonzero(~np.isfinite(scene.points).all(axis=1))
        report.append(f"points[{bad[0]}]: non-finite coordinate")

    for name, arr in (("normals", scene.normals), ("colors", scene.colors)):
        if arr is not None and arr.shape[0] != n:
            report.append(f"{name}: length {arr.shape[0]} != point count {n}")
    if scene.gt_labels is not None and scene.gt_labels.shape[0] != n:
        report.append(f"gt_labels: length {scene.gt_labels.shape[0]} != point count {n}")

    if scene.normals is not None and scene.normals.shape[0] == n and n:
        norms = np.linalg.norm(scene.normals.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-3)
        for i in bad[:8]:
            report.append(f"normals[{i}]: norm {norms[i]:.6g} != 1")
    if scene.colors is not None and scene.colors.size:
        if scene.colors.min() < 0 or scene.colors.max() > 1:
            report.append("colors: values outside [0, 1]")

    for b, box in enumerate(scene.boxes):
        if np.any(np.asarray(box.c_min) > np.asarray(box.c_max)):
            report.append(f"box {b} (instance {box.instance_id}): c_min > c_max")
    if scene.gt_labels is not None and scene.gt_labels.shape[0] == n:
        present = set(np.unique(scene.gt_labels).tolist())
        for box in scene.boxes:
            if box.instance_id not in present:
                report.append(
                    f"box instance {box.instance_id} missing from gt_labels")

    sp = scene.superpoints
    if sp is not None:
        if sp.assignment.shape[0] != n:
            report.append(f"superpoints: length {sp.assignment.shape[0]} != point count {n}")
        elif n:
            if sp.assignment.min() < 0 or sp.assignment.max() >= sp.superpoint_count:
                report.append("superpoints: id outside [0, superpoint_count)")
            else:
                counts = np.bincount(sp.assignment, minlength=sp.superpoint_count)
                empty = np.flatnonzero(counts == 0)
                if empty.size:
                    report.append(f"superpoints: id {empty[0]} has no members")

    for view in scene.views:
        K = np.asarray(view.K, dtype=np.float64)
        if abs(K[2, 2] - 1.0) > 1e-6:
            report.append(f"view {view.id}: K[2][2] != 1")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            report.append(f"view {view.id}: non-positive focal length")
        if np.any(np.abs(K[np.tril_indices(3, -1)]) > 1e-6):
            report.append(f"view {view.id}: K not upper-triangular")
        if view.depth is not None:
            if view.depth.shape != (view.height, view.width):
                report.append(f"view {view.id}: depth shape {view.depth.shape} "
                              f"!= ({view.height}, {view.width})")
            elif view.depth.size and view.depth.min() < 0:
                report.append(f"view {view.id}: negative depth")
    return report


def scenes_equal(a: Scene, b: Scene) -> bool:
    """Field-for-field equality (exact array comparison)."""
    def eq(x, y):
        if (x is None) != (y is None):
            return False
        return x is None or np.array_equal(x, y)

    if not (eq(a.points, b.points) and eq(a.normals, b.normals)
            and eq(a.colors, b.colors) and eq(a.gt_labels, b.gt_labels)):
        return False
    if (a.superpoints is None) != (b.superpoints is None):
        return False
    if a.superpoints is not None:
        if (a.superpoints.superpoint_count != b.superpoints.superpoint_count
                or not np.array_equal(a.superpoints.assignment, b.superpoints.assignment)):
            return False
    if len(a.boxes) != len(b.boxes) or len(a.views) != len(b.views):
        return False
    for x, y in zip(a.boxes, b.boxes):
        if (x.instance_id != y.instance_id or x.semantic_class != y.semantic_class
                or not np.array_equal(x.c_min, y.c_min)
                or not np.array_equal(x.c_max, y.c_max)):
            return False
    for u, v in zip(a.views, b.views):
        if (u.id, u.width, u.height) != (v.id, v.width, v.height):
            return False
        if not (np.array_equal(u.K, v.K) and np.array_equal(u.P, v.P)
                and eq(u.depth, v.depth) and eq(u.rgb, v.rgb)):
            return False
    return True
