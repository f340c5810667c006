import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]
CHECK = Path(__file__).with_name("gigapixel_check.py")


@pytest.mark.perf
def test_gigapixel_mask_within_time_and_memory():
    env = {**os.environ, "PYTHONPATH": str(ROOT), "GLEASON_ENGINE_TILE_ROWS": "1024"}
    env["GLEASON_ENGINE_THREADS"] = "1"

    # 100 tiles of 200 pixels: a 20,000 x 20,000 mask
    result = subprocess.run(
        [sys.executable, str(CHECK), "100", "10"],
        capture_output=True,
        text=True,
        env=env,
        cwd=ROOT,
        timeout=900,
        check=True,
    )
    report = json.loads(result.stdout.strip().splitlines()[-1])
    full, scaled = report["full"], report["scaled"]

    assert report["seconds"] <= 30
    assert report["peak_mb"] <= 256
    assert full["areas"] == {c: 100 * n for c, n in scaled["areas"].items()}
    # six components per tile: three round glands, a two-grade gland, a hard negative
    assert full["components"] == 100 * scaled["components"] == 6 * 100 * 100
    assert full["component_pixels"] == {
        c: 100 * n for c, n in scaled["component_pixels"].items()
    }
    assert full["diagnosis"] == scaled["diagnosis"]
