"""Shared fixtures plus a per-criterion summary for the acceptance module."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `import oracles`

_acceptance_results: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance_results):
        status = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"{name}: {status}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_block_map(size, blocks):
    """size x size map, zero except axis-aligned blocks.

    blocks: iterable of (x0, y0, x1, y1, value) with half-open extents.
    """
    grid = np.zeros((size, size), dtype=np.float64)
    for x0, y0, x1, y1, value in blocks:
        grid[y0:y1, x0:x1] = value
    return grid


def build_fixture_dataset(root: Path, n_images: int = 6, size: int = 100, seed: int = 7):
    """Synthetic dataset: SDPM maps with clean block regions (the ground
    truth), sub-threshold distractors, mask PNGs, a manifest, and a GT CSV.

    Blocks live in disjoint quadrants so the detector recovers exactly the
    ground-truth boxes.  Returns (manifest_path, gt_path).
    """
    from ulcerbench.io import (
        GroundTruthTable,
        ManifestRecord,
        write_ground_truth,
        write_manifest,
        write_mask,
        write_probmap,
    )
    from ulcerbench.types import BBox, BinaryMask, ProbMap

    gen = np.random.default_rng(seed)
    maps_dir = root / "maps"
    masks_dir = root / "masks"
    maps_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    half = size // 2
    quadrants = [(0, 0), (half, 0), (0, half), (half, half)]
    records = []
    gt_images = {}
    for i in range(n_images):
        image_id = f"img{i:03d}"
        grid = np.zeros((size, size), dtype=np.float64)
        boxes = []
        for qx, qy in quadrants:
            if gen.random() < 0.4:
                continue
            w = int(gen.integers(15, half - 10))
            h = int(gen.integers(15, half - 10))
            x0 = qx + int(gen.integers(2, half - w - 2))
            y0 = qy + int(gen.integers(2, half - h - 2))
            conf = np.float32(gen.uniform(0.65, 0.98))
            grid[y0 : y0 + h, x0 : x0 + w] = conf
            boxes.append(BBox(x0, y0, x0 + w, y0 + h))
        # sub-threshold distractors: tiny bright speck and a dim region
        sx, sy = int(gen.integers(0, size - 3)), int(gen.integers(0, size - 3))
        if not grid[sy : sy + 3, sx : sx + 3].any():
            grid[sy : sy + 3, sx : sx + 3] = np.float32(0.97)
        dx, dy = int(gen.integers(0, size - 20)), int(gen.integers(0, size - 20))
        region = grid[dy : dy + 20, dx : dx + 20]
        region[region == 0.0] = np.float32(0.31)
        write_probmap(ProbMap(grid), maps_dir / f"{image_id}.sdpm")
        write_mask(
            BinaryMask((grid >= 0.5).astype(np.uint8)), masks_dir / f"{image_id}.png"
        )
        records.append(
            ManifestRecord(
                image_id=image_id,
                map_path=f"maps/{image_id}.sdpm",
                mask_path=f"masks/{image_id}.png",
                height=size,
                width=size,
            )
        )
        gt_images[image_id] = tuple(sorted(boxes, key=BBox.sort_key))
    manifest_path = root / "manifest.csv"
    gt_path = root / "gt.csv"
    write_manifest(records, manifest_path)
    write_ground_truth(GroundTruthTable(images=gt_images), gt_path)
    return manifest_path, gt_path
