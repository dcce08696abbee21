#!/usr/bin/env python3
"""Produce the checked-in golden image for the insertion-render pipeline.

Run once after the shading/raster/composite oracles pass; the golden pins
byte-level determinism from then on.  Regenerating requires re-review.
"""

import sys
from pathlib import Path

import numpy as np
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mixsim.geometry import CameraModel, Pose2, Pose3, ego_camera_pose
from mixsim.render.composite import insert_render
from mixsim.render.mesh import AssetLibrary
from mixsim.render.shading import LightEnvironment
from mixsim.streams import SyntheticSource


def golden_inputs(asset_root):
    cam = CameraModel(fx=180.0, fy=180.0, cx=159.5, cy=99.5, width=320, height=200,
                      near=0.1, far=120.0)
    source = SyntheticSource(cam=cam)
    cam_pose = ego_camera_pose(Pose2(0.0, 0.0, 0.0), cam_height=1.5)
    frame = source.frame(0, 0.0, cam_pose)
    light = LightEnvironment([0.35, 0.25, 0.9], [2.6, 2.5, 2.3], [0.28, 0.30, 0.36])
    assets = AssetLibrary(asset_root)
    cube = assets.load("cube")[0]
    walker = assets.load("walker")[0]
    posed = [
        (cube, Pose3.from_pose2(Pose2(6.0, -0.8, 0.4))),
        (walker, Pose3.from_pose2(Pose2(8.0, 1.2, -1.9))),
    ]
    return frame, posed, light


def main():
    root = Path(__file__).resolve().parents[1]
    frame, posed, light = golden_inputs(root / "assets")
    out, timings = insert_render(frame, posed, light)
    dest = root / "tests" / "golden"
    dest.mkdir(parents=True, exist_ok=True)
    Image.fromarray(out.color).save(dest / "cube_insert.png")
    print({k: round(v, 2) for k, v in timings.items()})
    print(f"wrote {dest / 'cube_insert.png'}")


if __name__ == "__main__":
    main()
