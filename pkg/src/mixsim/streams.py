"""Frame sources: recorded RGB-D streams replayed from disk, or a procedural
ground-plane scene rendered on demand from the live camera pose.

Replay layout (one directory per recording):

    manifest.json   {"width", "height", "fx", "fy", "cx", "cy", "near",
                     "far", "frame_count", "depth_format": "f32le"}
    color/%06d.png  8-bit sRGB
    depth/%06d.bin  row-major little-endian float32 meters, 0 = invalid
    poses.csv       index,t,x,y,z,qx,qy,qz,qw
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .frame import FrameRGBD
from .geometry import CameraModel, Pose3


class StreamError(Exception):
    pass


DEFAULT_CAM = CameraModel(
    fx=300.0, fy=300.0, cx=319.5, cy=179.5, width=640, height=360, near=0.1, far=120.0
)


@dataclass
class SyntheticScene:
    """Checkerboard ground plane under a graded sky; everything closed-form."""

    checker_size: float = 2.0
    ground_a: tuple = (105, 105, 100)   # sRGB bytes
    ground_b: tuple = (140, 140, 132)
    horizon_color: tuple = (196, 212, 228)
    zenith_color: tuple = (120, 158, 214)
    max_ground_range: float = 80.0


class SyntheticSource:
    """Renders the scene from whatever camera pose the loop supplies."""

    mode = "synthetic"

    def __init__(self, cam: CameraModel = DEFAULT_CAM, scene: SyntheticScene | None = None):
        self.cam = cam
        self.scene = scene or SyntheticScene()
        u = (np.arange(cam.width) + 0.5 - cam.cx) / cam.fx
        v = (np.arange(cam.height) + 0.5 - cam.cy) / cam.fy
        gu, gv = np.meshgrid(u, v)
        self._rays = np.stack([gu, gv, np.ones_like(gu)], axis=-1)

    def __len__(self):
        return 1 << 31  # endless

    def frame(self, index: int, t: float, cam_pose: Pose3) -> FrameRGBD:
        cam = self.cam
        sc = self.scene
        rays_w = self._rays @ cam_pose.rotation.T
        origin = cam_pose.translation
        dz = rays_w[..., 2]

        color = np.empty((cam.height, cam.width, 3), dtype=np.uint8)
        depth = np.zeros((cam.height, cam.width), dtype=np.float64)

        # sky: blend by how far above the horizon the ray points
        up = np.clip(dz / np.maximum(np.linalg.norm(rays_w, axis=-1), 1e-12), 0.0, 1.0)
        blend = np.sqrt(up)[..., None]
        sky = (1 - blend) * np.asarray(sc.horizon_color) + blend * np.asarray(sc.zenith_color)
        color[:] = np.rint(sky).astype(np.uint8)

        hit = dz < -1e-9
        t_hit = np.where(hit, -origin[2] / np.where(hit, dz, -1.0), np.inf)
        ground = hit & (t_hit > cam.near) & (t_hit <= sc.max_ground_range)
        gx = origin[0] + rays_w[..., 0][ground] * t_hit[ground]
        gy = origin[1] + rays_w[..., 1][ground] * t_hit[ground]
        checker = (
            np.floor(gx / sc.checker_size).astype(np.int64)
            + np.floor(gy / sc.checker_size).astype(np.int64)
        ) % 2
        tile = np.where(
            checker[:, None] == 0, np.asarray(sc.ground_a), np.asarray(sc.ground_b)
        )
        color[ground] = tile.astype(np.uint8)
        depth[ground] = t_hit[ground]
        depth[depth > cam.far] = 0.0
        return FrameRGBD(color, depth, cam_pose, cam, t)


class ReplaySource:
    """Validated, index-ordered reader over a recorded stream directory."""

    mode = "replay"

    def __init__(self, directory):
        self.root = Path(directory)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise StreamError(f"missing manifest: {manifest_path}")
        try:
            m = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise StreamError(f"malformed manifest {manifest_path}: {exc}") from exc
        for key in ("width", "height", "fx", "fy", "cx", "cy", "frame_count"):
            if key not in m:
                raise StreamError(f"manifest missing {key!r}")
        if m.get("depth_format", "f32le") != "f32le":
            raise StreamError(f"unsupported depth_format {m.get('depth_format')!r}")
        self.cam = CameraModel(
            fx=float(m["fx"]), fy=float(m["fy"]), cx=float(m["cx"]), cy=float(m["cy"]),
            width=int(m["width"]), height=int(m["height"]),
            near=float(m.get("near", 0.1)), far=float(m.get("far", 200.0)),
        )
        self.frame_count = int(m["frame_count"])

        poses_path = self.root / "poses.csv"
        if not poses_path.exists():
            raise StreamError(f"missing poses.csv in {self.root}")
        self._times: list[float] = []
        self._poses: list[Pose3] = []
        lines = [ln for ln in poses_path.read_text().splitlines() if ln.strip()]
        if lines and lines[0].lstrip().startswith("index"):
            lines = lines[1:]
        for ln in lines:
            parts = ln.split(",")
            if len(parts) != 9:
                raise StreamError(f"poses.csv: bad row {ln!r}")
            _, t, x, y, z, qx, qy, qz, qw = (float(p) for p in parts)
            self._times.append(t)
            self._poses.append(Pose3.from_quaternion(qx, qy, qz, qw, translation=(x, y, z)))
        if len(self._poses) != self.frame_count:
            raise StreamError(
                f"poses.csv has {len(self._poses)} rows, manifest says {self.frame_count}"
            )
        if any(b < a for a, b in zip(self._times, self._times[1:])):
            raise StreamError("poses.csv timestamps must be nondecreasing")

        # Validate file presence and sizes up front.
        expected_bytes = self.cam.width * self.cam.height * 4
        for k in range(self.frame_count):
            cpath = self.root / "color" / f"{k:06d}.png"
            dpath = self.root / "depth" / f"{k:06d}.bin"
            if not cpath.exists():
                raise StreamError(f"missing color frame {cpath}")
            if not dpath.exists():
                raise StreamError(f"missing depth frame {dpath}")
            size = dpath.stat().st_size
            if size != expected_bytes:
                raise StreamError(
                    f"depth file {dpath} has {size} bytes, expected {expected_bytes}"
                )

    def __len__(self):
        return self.frame_count

    def pose(self, index: int) -> Pose3:
        return self._poses[index]

    def recorded_time(self, index: int) -> float:
        return self._times[index]

    def frame(self, index: int, t: float, cam_pose: Pose3 | None = None) -> FrameRGBD:
        """Frame `index` with its timestamp re-based to simulation time t.

        The recorded camera pose is used unless an explicit pose is given.
        """
        if not 0 <= index < self.frame_count:
            raise StreamError(f"frame index {index} out of range 0..{self.frame_count - 1}")
        cpath = self.root / "color" / f"{index:06d}.png"
        color = np.asarray(Image.open(cpath).convert("RGB"), dtype=np.uint8)
        if color.shape != (self.cam.height, self.cam.width, 3):
            raise StreamError(
                f"color frame {cpath} is {color.shape}, camera says "
                f"{(self.cam.height, self.cam.width, 3)}"
            )
        raw = (self.root / "depth" / f"{index:06d}.bin").read_bytes()
        depth = np.frombuffer(raw, dtype="<f4").reshape(self.cam.height, self.cam.width)
        depth = depth.astype(np.float64)
        pose = cam_pose if cam_pose is not None else self._poses[index]
        return FrameRGBD(color, depth, pose, self.cam, t)


def ingest_stream(directory) -> ReplaySource:
    """Open and validate a recorded stream directory."""
    return ReplaySource(directory)


def write_stream(directory, frames: list[FrameRGBD]):
    """Write frames in the replay layout (fixture/conversion helper)."""
    root = Path(directory)
    (root / "color").mkdir(parents=True, exist_ok=True)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    if not frames:
        raise StreamError("cannot write an empty stream")
    cam = frames[0].cam
    manifest = {
        "width": cam.width, "height": cam.height,
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "near": cam.near, "far": cam.far,
        "frame_count": len(frames),
        "depth_format": "f32le",
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    rows = ["index,t,x,y,z,qx,qy,qz,qw"]
    for k, fr in enumerate(frames):
        Image.fromarray(fr.color).save(root / "color" / f"{k:06d}.png")
        (root / "depth" / f"{k:06d}.bin").write_bytes(
            fr.depth.astype("<f4").tobytes()
        )
        r = fr.cam_pose.rotation
        t = fr.cam_pose.translation
        qw = math.sqrt(max(0.0, 1.0 + r[0, 0] + r[1, 1] + r[2, 2])) / 2.0
        if qw > 1e-9:
            qx = (r[2, 1] - r[1, 2]) / (4 * qw)
            qy = (r[0, 2] - r[2, 0]) / (4 * qw)
            qz = (r[1, 0] - r[0, 1]) / (4 * qw)
        else:  # 180-degree rotations: fall back to the dominant diagonal
            qx = math.sqrt(max(0.0, 1.0 + r[0, 0] - r[1, 1] - r[2, 2])) / 2.0
            qy = (r[0, 1] + r[1, 0]) / (4 * qx) if qx > 1e-9 else 0.0
            qz = (r[0, 2] + r[2, 0]) / (4 * qx) if qx > 1e-9 else 0.0
        vals = [float(v) for v in (fr.timestamp, t[0], t[1], t[2], qx, qy, qz, qw)]
        rows.append(",".join([str(k)] + [repr(v) for v in vals]))
    (root / "poses.csv").write_text("\n".join(rows) + "\n")
