"""Round-trip the remote segmenter adapter against the real service.

These tests need the sibling sam_service package built (`npm run build`);
they skip otherwise, and the rest of the suite runs fully on the oracle
backend alone.
"""

import shutil
import socket
import subprocess
import time
from pathlib import Path

import numpy as np
import pytest
import requests

from boxlift.boxnoise import NoiseConfig
from boxlift.pipeline import PipelineConfig, run_refinement
from boxlift.prompting import (BoxPrompt, PointPrompt, ProtocolError,
                               RemoteSegmenter, SegmenterConfig)
from boxlift.scene import load_scene_bundle

SERVICE_DIR = Path(__file__).resolve().parent.parent / "sam_service"
SERVICE_MAIN = SERVICE_DIR / "dist" / "index.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not SERVICE_MAIN.is_file(),
    reason="sam_service not built; primary suite runs on the oracle backend")


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def service_endpoint():
    port = _free_port()
    proc = subprocess.Popen(
        [shutil.which("node"), str(SERVICE_MAIN)],
        env={"SAM_SERVICE_PORT": str(port)},
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    endpoint = f"http://127.0.0.1:{port}"
    try:
        for _ in range(100):
            try:
                health = requests.get(f"{endpoint}/healthz", timeout=1).json()
                if health.get("ready"):
                    break
            except requests.RequestException:
                pass
            time.sleep(0.1)
        else:
            pytest.fail("service never became ready")
        yield endpoint
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_adapter_round_trip(service_endpoint, small_bundle):
    scene = load_scene_bundle(small_bundle)
    view = scene.views[0]
    adapter = RemoteSegmenter(service_endpoint)

    mask = adapter.segment(view, BoxPrompt(40, 30, 90, 70))
    assert mask.shape == (view.height, view.width)
    assert mask.dtype == np.float32
    assert 0.0 <= mask.min() and mask.max() <= 1.0
    assert mask[50, 65] > mask[0, 0]  # box interior scores above far corner

    point_mask = adapter.segment(view, PointPrompt(64, 48, label=0))
    assert point_mask.shape == (view.height, view.width)
    assert point_mask[48, 64] == point_mask.max()

    again = adapter.segment(view, BoxPrompt(40, 30, 90, 70))
    assert np.array_equal(mask, again)


def test_adapter_rejects_out_of_bounds_prompt(service_endpoint, small_bundle):
    scene = load_scene_bundle(small_bundle)
    adapter = RemoteSegmenter(service_endpoint)
    with pytest.raises(ProtocolError):
        adapter.segment(scene.views[0], PointPrompt(-5, 3))


def test_refinement_runs_on_remote_backend(service_endpoint, small_bundle):
    cfg = PipelineConfig(
        bundle=small_bundle, noise=NoiseConfig(lam=0.1, seed=1),
        segmenter=SegmenterConfig(backend="remote", endpoint=service_endpoint))
    result = run_refinement(cfg)
    scene = load_scene_bundle(small_bundle)
    assert result.labels.shape == (scene.point_count,)
    assert result.report is not None  # pipeline completed end to end
