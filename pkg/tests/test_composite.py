import math

import numpy as np
import pytest

from mixsim.frame import FrameRGBD
from mixsim.geometry import CameraModel, Pose2, Pose3
from mixsim.render.composite import InsertionRenderer, composite, insert_render
from mixsim.render.mesh import Material, make_box
from mixsim.render.raster import RenderBuffers, RenderConfig
from mixsim.render.shading import LightEnvironment

CAM = CameraModel(fx=60, fy=60, cx=31.5, cy=31.5, width=64, height=64, near=0.1, far=50.0)
LIGHT = LightEnvironment([0.2, 0.1, 1.0], [2.2, 2.1, 2.0], [0.3, 0.3, 0.35])


def gray_frame(value=128, depth=3.0):
    color = np.full((64, 64, 3), value, dtype=np.uint8)
    d = np.full((64, 64), depth, dtype=np.float64)
    return FrameRGBD(color, d, Pose3.identity(), CAM, 0.0)


def buffers_with(depth=np.inf, alpha=0.0, color=(0, 0, 0), factor=1.0):
    buf = RenderBuffers.empty(64, 64)
    buf.depth[:] = depth
    buf.alpha[:] = alpha
    buf.color[:] = color
    buf.shadow_factor[:] = factor
    return buf


# scalar reference for the sRGB pipeline, written directly from the
# piecewise transfer function definition
def srgb_decode_scalar(u8):
    c = u8 / 255.0
    return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4


def srgb_encode_scalar(lin):
    lin = min(max(lin, 0.0), 1.0)
    s = lin * 12.92 if lin <= 0.0031308 else 1.055 * lin ** (1 / 2.4) - 0.055
    # numpy rint rounds half to even
    v = s * 255.0
    f = math.floor(v)
    r = v - f
    if r > 0.5 or (r == 0.5 and f % 2 == 1):
        f += 1
    return int(f)


def test_occluded_pixels_keep_input_bytes():
    frame = gray_frame(depth=3.0)
    buf = buffers_with(depth=5.0, alpha=1.0, color=(1.0, 0.0, 0.0))
    out = composite(frame, buf, LIGHT, RenderConfig(depth_margin=0.0))
    assert np.array_equal(out.color, frame.color)
    assert np.array_equal(out.depth, frame.depth)


def test_full_alpha_replaces_with_virtual_color():
    frame = gray_frame(depth=3.0)
    buf = buffers_with(depth=2.0, alpha=1.0, color=(1.0, 0.0, 0.0))
    out = composite(frame, buf, LIGHT)
    assert np.all(out.color[..., 0] == 255)
    assert np.all(out.color[..., 1] == 0)
    assert np.all(out.depth == 2.0)


def test_half_alpha_blend_matches_scalar_srgb_oracle():
    frame = gray_frame(value=128, depth=3.0)
    buf = buffers_with(depth=2.0, alpha=0.5, color=(1.0, 1.0, 1.0))
    out = composite(frame, buf, LIGHT)
    want = srgb_encode_scalar(0.5 * 1.0 + 0.5 * srgb_decode_scalar(128))
    assert np.all(out.color == want)


def test_occlusion_respects_margin():
    frame = gray_frame(depth=3.0)
    cfg = RenderConfig(depth_margin=0.05)
    # rendered 3.04: within margin, still composited
    out = composite(frame, buffers_with(depth=3.04, alpha=1.0, color=(1, 0, 0)), LIGHT, cfg)
    assert np.all(out.color[..., 0] == 255)
    # rendered 3.06: behind margin, real pixel wins
    out = composite(frame, buffers_with(depth=3.06, alpha=1.0, color=(1, 0, 0)), LIGHT, cfg)
    assert np.array_equal(out.color, frame.color)


def test_invalid_perceived_depth_never_occludes():
    frame = gray_frame(depth=0.0)  # no depth return anywhere
    buf = buffers_with(depth=7.0, alpha=1.0, color=(0, 1, 0))
    out = composite(frame, buf, LIGHT)
    assert np.all(out.color[..., 1] == 255)
    assert np.all(out.depth == 7.0)


def test_shadow_darkening_scales_by_luminance_ratio():
    frame = gray_frame(value=200, depth=4.0)
    buf = buffers_with()
    buf.shadow_factor[10:20, 10:20] = 0.0
    buf.depth[10:20, 10:20] = 3.5  # ground depth at the shadowed patch
    out = composite(frame, buf, LIGHT)
    amb = 0.299 * 0.3 + 0.587 * 0.3 + 0.114 * 0.35
    direct = 0.299 * 2.2 + 0.587 * 2.1 + 0.114 * 2.0
    scale = amb / (amb + direct)
    want = srgb_encode_scalar(srgb_decode_scalar(200) * scale)
    assert np.all(out.color[10:20, 10:20, 0] == want)
    assert np.array_equal(out.color[0:10], frame.color[0:10])  # untouched rows


def test_shadow_not_applied_when_ground_occluded():
    frame = gray_frame(value=200, depth=2.0)  # real wall at 2 m
    buf = buffers_with()
    buf.shadow_factor[:] = 0.3
    buf.depth[:] = 6.0  # virtual ground shadow would land behind the wall
    out = composite(frame, buf, LIGHT)
    assert np.array_equal(out.color, frame.color)


def test_dimension_mismatch_raises():
    frame = gray_frame()
    small = RenderBuffers.empty(32, 32)
    with pytest.raises(ValueError):
        composite(frame, small, LIGHT)


def test_empty_render_is_byte_identical_noop():
    rng = np.random.default_rng(0)
    color = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    frame = FrameRGBD(color, np.full((64, 64), 5.0), Pose3.identity(), CAM, 0.0)
    out, timings = insert_render(frame, [], LIGHT)
    assert np.array_equal(out.color, frame.color)
    assert set(timings) == {"shadow_ms", "raster_ms", "composite_ms"}


def test_out_of_frustum_actor_is_byte_identical_noop():
    rng = np.random.default_rng(1)
    color = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    frame = FrameRGBD(color, np.full((64, 64), 5.0), Pose3.identity(), CAM, 0.0)
    # Box far behind the camera (camera looks along +z in identity pose).
    box = make_box((0.3, 0.3, 0.3), center=(0, 0, -20.0))
    cfg = RenderConfig(cast_ground_shadows=False)
    out, _ = insert_render(frame, [(box, Pose3.identity())], LIGHT, cfg)
    assert np.array_equal(out.color, frame.color)


def test_occlusion_monotonicity():
    # Decreasing perceived depth never increases virtual visibility.
    rng = np.random.default_rng(7)
    buf = buffers_with(depth=4.0, alpha=1.0, color=(1.0, 0.2, 0.1))
    base_depth = rng.uniform(2.0, 6.0, size=(64, 64))
    visible_count = []
    for shrink in (1.0, 0.8, 0.5, 0.2):
        frame = FrameRGBD(
            np.zeros((64, 64, 3), dtype=np.uint8),
            base_depth * shrink,
            Pose3.identity(),
            CAM,
            0.0,
        )
        out = composite(frame, buf, LIGHT)
        visible_count.append(int((out.color[..., 0] > 0).sum()))
    assert all(a >= b for a, b in zip(visible_count, visible_count[1:]))


def test_insertion_renderer_caches_shadow_map():
    frame = gray_frame(depth=50.0)
    box = make_box((0.3, 0.3, 0.3), center=(0.0, 0.0, 0.0))
    pose = Pose3.from_pose2(Pose2(0, 0, 0), z=0.0)
    renderer = InsertionRenderer(LIGHT)
    renderer.insert(frame, [(box, pose)])
    first_map = renderer._shadow_map
    renderer.insert(frame, [(box, pose)])
    assert renderer._shadow_map is first_map
