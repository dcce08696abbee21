"""The perceived sensor sample: color, metric depth, camera pose, timestamp."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, Pose3


@dataclass
class FrameRGBD:
    """One RGB-D sample.  Depth is metric with 0 marking invalid pixels."""

    color: np.ndarray   # (H, W, 3) uint8, sRGB
    depth: np.ndarray   # (H, W) float32/64 meters, 0 = no return
    cam_pose: Pose3
    cam: CameraModel
    timestamp: float

    def __post_init__(self):
        h, w = self.depth.shape
        if self.color.shape != (h, w, 3):
            raise ValueError(
                f"color {self.color.shape} and depth {self.depth.shape} dimensions disagree"
            )
        if (w, h) != (self.cam.width, self.cam.height):
            raise ValueError("frame dimensions do not match the camera model")
        if self.color.dtype != np.uint8:
            raise ValueError("color must be 8-bit")
        if (self.depth < 0).any():
            raise ValueError("depth values must be >= 0")

    def copy(self) -> "FrameRGBD":
        return FrameRGBD(
            self.color.copy(), self.depth.copy(), self.cam_pose, self.cam, self.timestamp
        )
