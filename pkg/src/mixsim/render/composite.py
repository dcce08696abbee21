"""Merging rendered virtual content into the perceived RGB-D frame.

Per pixel, in order:
  1. occlusion: a valid perceived depth closer than the rendered depth by
     more than `depth_margin` keeps the real pixel (virtual content hidden);
  2. alpha blend in linear RGB (frame sRGB-decoded first, re-encoded after);
  3. un-covered pixels flagged by the ground-shadow layer are darkened by
     the lit/unlit luminance ratio of the light environment.

Pixels untouched by all three rules keep their exact input bytes, so an
empty render pass is a byte-level no-op.
"""

from __future__ import annotations

import time

from dataclasses import dataclass

import numpy as np

from ..frame import FrameRGBD
from ..geometry import Pose3
from .color import decode_u8, encode_u8, luma601
from .mesh import Mesh
from .raster import RenderBuffers, RenderConfig, rasterize
from .shading import LightEnvironment
from .shadow import render_shadow_map


def composite(
    frame: FrameRGBD,
    buffers: RenderBuffers,
    light: LightEnvironment,
    config: RenderConfig | None = None,
) -> FrameRGBD:
    """Blend RenderBuffers over the frame; returns a new frame."""
    config = config or RenderConfig()
    h, w = frame.depth.shape
    if buffers.depth.shape != (h, w):
        raise ValueError(
            f"buffer dimensions {buffers.depth.shape} do not match frame {(h, w)}"
        )

    perceived = np.asarray(frame.depth, dtype=np.float64)
    rendered = buffers.depth
    valid = perceived > 0
    occluded = valid & (perceived < rendered - config.depth_margin)

    out_color = frame.color.copy()
    visible = (buffers.alpha > 0) & ~occluded
    if visible.any():
        real_lin = decode_u8(frame.color[visible])
        a = buffers.alpha[visible][:, None]
        blended = a * buffers.color[visible] + (1.0 - a) * real_lin
        out_color[visible] = encode_u8(blended)

    # Shadow darkening on real pixels: scale by (ambient + f*direct)/(ambient+direct).
    # Skipped where the perceived surface sits in front of the shadowed ground.
    shadowed = (buffers.shadow_factor < 1.0) & (buffers.alpha <= config.alpha_threshold)
    shadowed &= ~occluded
    if shadowed.any():
        amb = float(luma601(light.ambient_radiance))
        direct = float(luma601(light.sun_radiance))
        denom = max(amb + direct, 1e-12)
        scale = (amb + buffers.shadow_factor[shadowed] * direct) / denom
        real_lin = decode_u8(frame.color[shadowed])
        out_color[shadowed] = encode_u8(real_lin * scale[:, None])

    # Output depth: min(perceived, rendered) where covered; rendered fills
    # invalid (zero) perceived pixels under cover.
    out_depth = perceived.copy()
    covered = buffers.alpha > config.alpha_threshold
    both = covered & valid
    out_depth[both] = np.minimum(perceived[both], rendered[both])
    fill = covered & ~valid
    out_depth[fill] = rendered[fill]

    return FrameRGBD(out_color, out_depth, frame.cam_pose, frame.cam, frame.timestamp)


class InsertionRenderer:
    """End-to-end insertion pass with a shadow-map cache.

    The shadow map only depends on actor geometry and poses, so it is
    re-rendered only when those change between ticks.
    """

    def __init__(self, light: LightEnvironment, config: RenderConfig | None = None):
        self.light = light
        self.config = config or RenderConfig()
        self._shadow_key = None
        self._shadow_map = None

    def _shadow_signature(self, posed_meshes):
        return tuple(
            (id(mesh), pose.translation.tobytes(), pose.rotation.tobytes())
            for mesh, pose in posed_meshes
        )

    def insert(self, frame: FrameRGBD, posed_meshes: list[tuple[Mesh, Pose3]]):
        """Returns (composited frame, per-stage wall-clock timings in ms)."""
        timings = {}
        t0 = time.perf_counter()
        key = self._shadow_signature(posed_meshes)
        if key != self._shadow_key:
            self._shadow_map = render_shadow_map(
                posed_meshes,
                self.light.sun_dir,
                resolution=self.config.shadow_map_size,
                ground_margin=self.config.ground_margin,
                ground_z=self.config.ground_z,
            )
            self._shadow_key = key
        t1 = time.perf_counter()
        buffers = rasterize(
            posed_meshes, frame.cam_pose, frame.cam, self.light, self._shadow_map, self.config
        )
        t2 = time.perf_counter()
        out = composite(frame, buffers, self.light, self.config)
        t3 = time.perf_counter()
        timings["shadow_ms"] = (t1 - t0) * 1e3
        timings["raster_ms"] = (t2 - t1) * 1e3
        timings["composite_ms"] = (t3 - t2) * 1e3
        return out, timings


def insert_render(
    frame: FrameRGBD,
    posed_meshes: list[tuple[Mesh, Pose3]],
    light: LightEnvironment,
    config: RenderConfig | None = None,
):
    """One-shot convenience wrapper around InsertionRenderer."""
    return InsertionRenderer(light, config).insert(frame, posed_meshes)
