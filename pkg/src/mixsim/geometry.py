"""Poses, pinhole projection, oriented boxes, and polyline path math.

Conventions used throughout the package:

World frame (right-handed):  x east, y north, z up.  Headings are CCW
radians from +x, normalized to (-pi, pi].

Camera frame (right-handed): x right, y down, z forward along the optical
axis.  Image origin is the top-left corner, u right, v down, in pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Normalize an angle (scalar or array) to (-pi, pi]; in-range values
    pass through bit-exact."""
    if isinstance(a, np.ndarray):
        return np.where((a > np.pi) | (a <= -np.pi), np.pi - (np.pi - a) % TWO_PI, a)
    if -math.pi < a <= math.pi:
        return a
    return math.pi - (math.pi - a) % TWO_PI


@dataclass(frozen=True)
class Pose2:
    """Planar pose: position in meters, heading in (-pi, pi]."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_world(self, p_local: np.ndarray) -> np.ndarray:
        """Transform local (x forward, y left) points, shape (..., 2), to world."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        p = np.asarray(p_local, dtype=float)
        out = np.empty_like(p)
        out[..., 0] = self.x + c * p[..., 0] - s * p[..., 1]
        out[..., 1] = self.y + s * p[..., 0] + c * p[..., 1]
        return out

    def to_local(self, p_world: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        p = np.asarray(p_world, dtype=float)
        dx, dy = p[..., 0] - self.x, p[..., 1] - self.y
        out = np.empty_like(p)
        out[..., 0] = c * dx + s * dy
        out[..., 1] = -s * dx + c * dy
        return out


@dataclass(frozen=True)
class Pose3:
    """Rigid transform: x_world = rotation @ x_local + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"rotation not orthonormal (max deviation {err:.2e})")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation has negative determinant")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose3":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, qx, qy, qz, qw, translation=(0.0, 0.0, 0.0)) -> "Pose3":
        n = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
        qx, qy, qz, qw = qx / n, qy / n, qz / n, qw / n
        r = np.array([
            [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
            [2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)],
            [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)],
        ])
        # Re-orthonormalize so the strict Pose3 invariant holds for text-file quaternions.
        u, _, vt = np.linalg.svd(r)
        r = u @ vt
        return cls(r, np.asarray(translation, dtype=float))

    @classmethod
    def from_pose2(cls, pose: Pose2, z: float = 0.0) -> "Pose3":
        c, s = math.cos(pose.heading), math.sin(pose.heading)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(r, np.array([pose.x, pose.y, z]))

    def transform(self, p_local: np.ndarray) -> np.ndarray:
        """Local -> world for points of shape (..., 3)."""
        return np.asarray(p_local, dtype=float) @ self.rotation.T + self.translation

    def inverse_transform(self, p_world: np.ndarray) -> np.ndarray:
        return (np.asarray(p_world, dtype=float) - self.translation) @ self.rotation


def ego_camera_pose(ego: Pose2, cam_height: float = 1.5, forward_offset: float = 0.0) -> Pose3:
    """Pose of a forward-looking, level camera rigidly mounted on the ego.

    Camera +z points along the ego heading, +x to the right of travel,
    +y straight down.
    """
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    forward = np.array([c, s, 0.0])
    right = np.array([s, -c, 0.0])
    down = np.array([0.0, 0.0, -1.0])
    r = np.column_stack([right, down, forward])
    t = np.array([ego.x + forward_offset * c, ego.y + forward_offset * s, cam_height])
    return Pose3(r, t)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus the valid metric depth range."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.1
    far: float = 200.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")


def project_point(p_world, cam_pose: Pose3, cam: CameraModel):
    """Project a world point; None when outside (near, far] along the axis.

    Returns (u, v, depth) with depth the camera-frame z in meters.
    """
    pc = cam_pose.inverse_transform(np.asarray(p_world, dtype=float))
    z = float(pc[2])
    if z <= cam.near or z > cam.far:
        return None
    u = cam.fx * pc[0] / z + cam.cx
    v = cam.fy * pc[1] / z + cam.cy
    return float(u), float(v), z


def back_project(u, v, depth, cam: CameraModel) -> np.ndarray:
    """Pixel + depth -> camera-frame point.  Accepts arrays elementwise."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    z = np.asarray(depth, dtype=float)
    return np.stack([(u - cam.cx) / cam.fx * z, (v - cam.cy) / cam.fy * z, z], axis=-1)


@dataclass(frozen=True)
class Obb2:
    """Bird's-eye oriented rectangle: half_length along heading, half_width lateral."""

    center: Pose2
    half_length: float
    half_width: float

    def __post_init__(self):
        if self.half_length <= 0 or self.half_width <= 0:
            raise ValueError("box extents must be positive")

    def corners(self) -> np.ndarray:
        hl, hw = self.half_length, self.half_width
        local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
        return self.center.to_world(local)

    def axes(self) -> np.ndarray:
        c, s = math.cos(self.center.heading), math.sin(self.center.heading)
        return np.array([[c, s], [-s, c]])


def obb_overlap(a: Obb2, b: Obb2) -> bool:
    """Separating-axis rectangle intersection; touching edges count as overlap."""
    ca, cb = a.corners(), b.corners()
    for axis in np.vstack([a.axes(), b.axes()]):
        pa = ca @ axis
        pb = cb @ axis
        if pa.min() > pb.max() or pb.min() > pa.max():
            return False
    return True


class PlannedPath:
    """Polyline the ego is asked to follow, with cumulative arc length."""

    def __init__(self, waypoints):
        wp = np.asarray(waypoints, dtype=float).reshape(-1, 2)
        if wp.shape[0] < 2:
            raise ValueError("path needs at least 2 waypoints")
        seg = np.diff(wp, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len == 0.0):
            raise ValueError("consecutive waypoints must be distinct")
        self.waypoints = wp
        self.seg_dir = seg / seg_len[:, None]
        self.seg_len = seg_len
        self.arc_length = np.concatenate([[0.0], np.cumsum(seg_len)])

    @property
    def length(self) -> float:
        return float(self.arc_length[-1])

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    def point_at(self, s: float) -> np.ndarray:
        """Point at arc length s, clamped to the path ends."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.arc_length, s, side="right")) - 1
        i = min(i, len(self.seg_len) - 1)
        return self.waypoints[i] + self.seg_dir[i] * (s - self.arc_length[i])

    def heading_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.arc_length, s, side="right")) - 1
        i = min(max(i, 0), len(self.seg_len) - 1)
        return math.atan2(self.seg_dir[i, 1], self.seg_dir[i, 0])


def path_frame(path: PlannedPath, p) -> tuple[float, float, float]:
    """Arc length, signed cross-track, and reference heading of the closest point.

    The query is clamped to the terminal vertices beyond the path ends.  The
    cross-track error is the distance to the closest point, signed positive
    when p lies left of the local path direction (zero when exactly aligned
    with an extended endpoint).  Ties between segments resolve to smaller s.
    """
    p = np.asarray(p, dtype=float)
    a = path.waypoints[:-1]
    d = path.seg_dir
    t = np.einsum("ij,ij->i", p - a, d)
    t = np.clip(t, 0.0, path.seg_len)
    q = a + d * t[:, None]
    diff = p - q
    dist2 = np.einsum("ij,ij->i", diff, diff)
    s_cand = path.arc_length[:-1] + t
    best = dist2.min()
    mask = dist2 <= best
    idx_all = np.nonzero(mask)[0]
    i = idx_all[np.argmin(s_cand[idx_all])]
    cross = d[i, 0] * diff[i, 1] - d[i, 1] * diff[i, 0]
    e = math.copysign(math.sqrt(dist2[i]), cross) if cross != 0.0 else 0.0
    heading_ref = math.atan2(d[i, 1], d[i, 0])
    return float(s_cand[i]), e, heading_ref


def path_cross_track_batch(path: PlannedPath, pts: np.ndarray) -> np.ndarray:
    """Unsigned distance from each (N, 2) point to the polyline (vectorized)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    a = path.waypoints[:-1]                       # (S, 2)
    d = path.seg_dir                              # (S, 2)
    rel = pts[:, None, :] - a[None, :, :]         # (N, S, 2)
    t = np.einsum("nsj,sj->ns", rel, d)
    t = np.clip(t, 0.0, path.seg_len[None, :])
    q = a[None, :, :] + d[None, :, :] * t[..., None]
    diff = pts[:, None, :] - q
    dist2 = np.einsum("nsj,nsj->ns", diff, diff)
    return np.sqrt(dist2.min(axis=1))
