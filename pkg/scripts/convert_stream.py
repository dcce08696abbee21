#!/usr/bin/env python3
"""Convert an external RGB-D recording into the native replay layout.

Expected input: a directory of color PNGs, matching 16-bit depth PNGs in
millimeters (0 = invalid), and a poses CSV (`t,x,y,z,qx,qy,qz,qw` per line,
camera-to-world).  Typical use for public driving datasets is to export
rectified camera frames plus depth maps into this shape, then:

    python3 scripts/convert_stream.py \
        --color 'in/color/*.png' --depth 'in/depth/*.png' --poses in/poses.csv \
        --fx 552.55 --fy 552.55 --cx 682.05 --cy 238.77 --out converted/

The output directory then loads through the normal replay ingestion.
"""

import argparse
import glob
import sys
from pathlib import Path

import numpy as np
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mixsim.frame import FrameRGBD
from mixsim.geometry import CameraModel, Pose3
from mixsim.streams import write_stream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--color", required=True, help="glob of color PNGs, sorted order")
    ap.add_argument("--depth", required=True, help="glob of 16-bit depth PNGs (millimeters)")
    ap.add_argument("--poses", required=True, help="CSV: t,x,y,z,qx,qy,qz,qw")
    ap.add_argument("--fx", type=float, required=True)
    ap.add_argument("--fy", type=float, required=True)
    ap.add_argument("--cx", type=float, required=True)
    ap.add_argument("--cy", type=float, required=True)
    ap.add_argument("--near", type=float, default=0.1)
    ap.add_argument("--far", type=float, default=120.0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    color_paths = sorted(glob.glob(args.color))
    depth_paths = sorted(glob.glob(args.depth))
    if len(color_paths) != len(depth_paths) or not color_paths:
        raise SystemExit(
            f"frame count mismatch: {len(color_paths)} color vs {len(depth_paths)} depth"
        )
    pose_rows = [
        [float(v) for v in line.split(",")]
        for line in Path(args.poses).read_text().splitlines()
        if line.strip() and not line.lstrip().startswith("t,")
    ]
    if len(pose_rows) != len(color_paths):
        raise SystemExit(f"{len(pose_rows)} poses for {len(color_paths)} frames")

    frames = []
    cam = None
    for cpath, dpath, row in zip(color_paths, depth_paths, pose_rows):
        color = np.asarray(Image.open(cpath).convert("RGB"), dtype=np.uint8)
        depth_mm = np.asarray(Image.open(dpath), dtype=np.uint16)
        depth = depth_mm.astype(np.float64) / 1000.0
        h, w = depth.shape
        if cam is None:
            cam = CameraModel(
                fx=args.fx, fy=args.fy, cx=args.cx, cy=args.cy,
                width=w, height=h, near=args.near, far=args.far,
            )
        t, x, y, z, qx, qy, qz, qw = row
        pose = Pose3.from_quaternion(qx, qy, qz, qw, translation=(x, y, z))
        frames.append(FrameRGBD(color, depth, pose, cam, t))

    write_stream(args.out, frames)
    print(f"converted {len(frames)} frames -> {args.out}")


if __name__ == "__main__":
    main()
