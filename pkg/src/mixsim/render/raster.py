"""Deterministic software rasterizer: z-buffered triangles with
perspective-correct attribute interpolation, shaded through the split-sum
model, plus a ground-shadow layer for compositing onto real footage.

Pixel centers sample at (x + 0.5, y + 0.5); boundary ties follow the
top-left rule.  Triangles are rasterized in submission order and depth ties
keep the earlier triangle, so output is bit-stable regardless of thread
count (the kernels are single-threaded numba loops).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..geometry import CameraModel, Pose3
from .mesh import Mesh
from .shading import LightEnvironment, shade
from .shadow import ShadowMap, shadow_factor


@dataclass
class RenderBuffers:
    """Per-frame layers of the virtual content before compositing."""

    color: np.ndarray          # (H, W, 3) linear RGB in [0, 1]
    depth: np.ndarray          # (H, W) meters, +inf where no geometry
    alpha: np.ndarray          # (H, W) in [0, 1]
    shadow_factor: np.ndarray  # (H, W) in [0, 1], 1 = fully lit ground

    @classmethod
    def empty(cls, width: int, height: int) -> "RenderBuffers":
        return cls(
            color=np.zeros((height, width, 3)),
            depth=np.full((height, width), np.inf),
            alpha=np.zeros((height, width)),
            shadow_factor=np.ones((height, width)),
        )


@dataclass
class RenderConfig:
    """Knobs of the insertion renderer; defaults match the test fixtures."""

    shadow_map_size: int = 512
    shadow_bias: float = 0.02
    poisson_taps: int = 16
    tap_radius_texels: float = 2.0
    ground_z: float = 0.0
    ground_margin: float = 1.0
    depth_margin: float = 0.05
    alpha_threshold: float = 0.5
    keyframe_fps: float = 8.0
    cast_ground_shadows: bool = True


@njit(cache=True)
def _raster_perspective(xs, ys, invz, far, zbuf, tid, b0, b1):
    nt = xs.shape[0]
    h, w = zbuf.shape
    for t in range(nt):
        x0, x1, x2 = xs[t, 0], xs[t, 1], xs[t, 2]
        y0, y1, y2 = ys[t, 0], ys[t, 1], ys[t, 2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area <= 0.0:
            continue
        lo_x = int(max(np.floor(min(x0, min(x1, x2)) - 0.5), 0.0))
        hi_x = int(min(np.ceil(max(x0, max(x1, x2)) + 0.5), w - 1.0))
        lo_y = int(max(np.floor(min(y0, min(y1, y2)) - 0.5), 0.0))
        hi_y = int(min(np.ceil(max(y0, max(y1, y2)) + 0.5), h - 1.0))
        iz0, iz1, iz2 = invz[t, 0], invz[t, 1], invz[t, 2]
        # Edge deltas for the top-left tie rule.
        dx0, dy0 = x2 - x1, y2 - y1
        dx1, dy1 = x0 - x2, y0 - y2
        dx2, dy2 = x1 - x0, y1 - y0
        for iy in range(lo_y, hi_y + 1):
            py = iy + 0.5
            for ix in range(lo_x, hi_x + 1):
                px = ix + 0.5
                w0 = dx0 * (py - y1) - dy0 * (px - x1)
                w1 = dx1 * (py - y2) - dy1 * (px - x2)
                w2 = dx2 * (py - y0) - dy2 * (px - x0)
                ok0 = w0 > 0.0 or (w0 == 0.0 and (dy0 < 0.0 or (dy0 == 0.0 and dx0 > 0.0)))
                ok1 = w1 > 0.0 or (w1 == 0.0 and (dy1 < 0.0 or (dy1 == 0.0 and dx1 > 0.0)))
                ok2 = w2 > 0.0 or (w2 == 0.0 and (dy2 < 0.0 or (dy2 == 0.0 and dx2 > 0.0)))
                if ok0 and ok1 and ok2:
                    l0 = w0 / area
                    l1 = w1 / area
                    l2 = 1.0 - l0 - l1
                    iz = l0 * iz0 + l1 * iz1 + l2 * iz2
                    if iz <= 0.0:
                        continue
                    z = 1.0 / iz
                    if z <= far and z < zbuf[iy, ix]:
                        zbuf[iy, ix] = z
                        tid[iy, ix] = t
                        b0[iy, ix] = l0
                        b1[iy, ix] = l1


@njit(cache=True)
def _raster_ortho_depth(xs, ys, zs, zbuf):
    nt = xs.shape[0]
    h, w = zbuf.shape
    for t in range(nt):
        x0, x1, x2 = xs[t, 0], xs[t, 1], xs[t, 2]
        y0, y1, y2 = ys[t, 0], ys[t, 1], ys[t, 2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        if area < 0.0:
            x1, x2 = x2, x1
            y1, y2 = y2, y1
            z1, z2 = zs[t, 2], zs[t, 1]
            z0 = zs[t, 0]
            area = -area
        else:
            z0, z1, z2 = zs[t, 0], zs[t, 1], zs[t, 2]
        lo_x = int(max(np.floor(min(x0, min(x1, x2)) - 0.5), 0.0))
        hi_x = int(min(np.ceil(max(x0, max(x1, x2)) + 0.5), w - 1.0))
        lo_y = int(max(np.floor(min(y0, min(y1, y2)) - 0.5), 0.0))
        hi_y = int(min(np.ceil(max(y0, max(y1, y2)) + 0.5), h - 1.0))
        dx0, dy0 = x2 - x1, y2 - y1
        dx1, dy1 = x0 - x2, y0 - y2
        dx2, dy2 = x1 - x0, y1 - y0
        for iy in range(lo_y, hi_y + 1):
            py = iy + 0.5
            for ix in range(lo_x, hi_x + 1):
                px = ix + 0.5
                w0 = dx0 * (py - y1) - dy0 * (px - x1)
                w1 = dx1 * (py - y2) - dy1 * (px - x2)
                w2 = dx2 * (py - y0) - dy2 * (px - x0)
                ok0 = w0 > 0.0 or (w0 == 0.0 and (dy0 < 0.0 or (dy0 == 0.0 and dx0 > 0.0)))
                ok1 = w1 > 0.0 or (w1 == 0.0 and (dy1 < 0.0 or (dy1 == 0.0 and dx1 > 0.0)))
                ok2 = w2 > 0.0 or (w2 == 0.0 and (dy2 < 0.0 or (dy2 == 0.0 and dx2 > 0.0)))
                if ok0 and ok1 and ok2:
                    z = (w0 * z0 + w1 * z1 + w2 * z2) / area
                    if z < zbuf[iy, ix]:
                        zbuf[iy, ix] = z


def rasterize_depth_ortho(tris_world, origin, axis_x, axis_y, axis_z, texel, resolution):
    """Depth-only orthographic pass used by the shadow mapper."""
    rel = tris_world - origin
    xs = (rel @ axis_x) / texel
    ys = (rel @ axis_y) / texel
    zs = rel @ axis_z
    zbuf = np.full((resolution, resolution), np.inf)
    _raster_ortho_depth(
        np.ascontiguousarray(xs), np.ascontiguousarray(ys), np.ascontiguousarray(zs), zbuf
    )
    return zbuf


def _clip_triangle_near(pc, attrs, near):
    """Sutherland-Hodgman clip of one camera-space triangle against z >= near.

    pc: (3, 3) camera-space positions; attrs: (3, K).  Returns lists of
    (3, 3) and (3, K) arrays (0, 1, or 2 output triangles).
    """
    poly = [(pc[i], attrs[i]) for i in range(3)]
    out = []
    for i in range(len(poly)):
        a_p, a_t = poly[i]
        b_p, b_t = poly[(i + 1) % len(poly)]
        a_in = a_p[2] >= near
        b_in = b_p[2] >= near
        if a_in:
            out.append((a_p, a_t))
        if a_in != b_in:
            s = (near - a_p[2]) / (b_p[2] - a_p[2])
            out.append((a_p + s * (b_p - a_p), a_t + s * (b_t - a_t)))
    tris = []
    for k in range(1, len(out) - 1):
        tris.append(
            (
                np.stack([out[0][0], out[k][0], out[k + 1][0]]),
                np.stack([out[0][1], out[k][1], out[k + 1][1]]),
            )
        )
    return tris


def _gather_triangles(posed_meshes, cam_pose: Pose3, cam: CameraModel):
    """Transform, near-clip, and project all meshes into flat triangle arrays.

    Returns (xs, ys, invz, normals, uvs, mat_ids, materials) or None when
    nothing is in front of the camera.
    """
    xs_parts, ys_parts, iz_parts, n_parts, uv_parts, mid_parts = [], [], [], [], [], []
    materials = []
    for mesh, pose in posed_meshes:
        mat_id = len(materials)
        materials.append(mesh.material)
        world_v = pose.transform(mesh.vertices)
        cam_v = cam_pose.inverse_transform(world_v)
        world_n = mesh.normals @ pose.rotation.T
        tri = mesh.triangles
        pc = cam_v[tri]                                     # (T, 3, 3)
        attrs = np.concatenate([world_n[tri], mesh.uvs[tri]], axis=2)  # (T, 3, 5)

        z_in = pc[..., 2] >= cam.near
        keep_whole = z_in.all(axis=1)
        crossing = z_in.any(axis=1) & ~keep_whole

        kept_p = [pc[keep_whole]]
        kept_a = [attrs[keep_whole]]
        for t_idx in np.nonzero(crossing)[0]:
            for cp, ca in _clip_triangle_near(pc[t_idx], attrs[t_idx], cam.near):
                kept_p.append(cp[None])
                kept_a.append(ca[None])
        pc_k = np.concatenate(kept_p, axis=0)
        at_k = np.concatenate(kept_a, axis=0)
        if pc_k.shape[0] == 0:
            continue
        z = pc_k[..., 2]
        u = cam.fx * pc_k[..., 0] / z + cam.cx
        v = cam.fy * pc_k[..., 1] / z + cam.cy
        # Cull triangles fully outside the viewport.
        on = ~(
            (u.max(axis=1) < 0)
            | (u.min(axis=1) >= cam.width)
            | (v.max(axis=1) < 0)
            | (v.min(axis=1) >= cam.height)
            | (z.min(axis=1) > cam.far)
        )
        if not on.any():
            continue
        xs_parts.append(u[on])
        ys_parts.append(v[on])
        iz_parts.append(1.0 / z[on])
        n_parts.append(at_k[on][..., :3])
        uv_parts.append(at_k[on][..., 3:])
        mid_parts.append(np.full(int(on.sum()), mat_id, dtype=np.int64))

    if not xs_parts:
        return None
    xs = np.concatenate(xs_parts)
    ys = np.concatenate(ys_parts)
    invz = np.concatenate(iz_parts)
    normals = np.concatenate(n_parts)
    uvs = np.concatenate(uv_parts)
    mids = np.concatenate(mid_parts)

    # Enforce positive screen-space area so the kernel's edge tests hold.
    area = (xs[:, 1] - xs[:, 0]) * (ys[:, 2] - ys[:, 0]) - (ys[:, 1] - ys[:, 0]) * (
        xs[:, 2] - xs[:, 0]
    )
    flip = area < 0
    for arr in (xs, ys, invz, normals, uvs):
        arr[flip] = arr[flip][:, [0, 2, 1]]
    return xs, ys, invz, normals, uvs, mids, materials


_RAY_CACHE: dict[tuple, np.ndarray] = {}


def _pixel_rays(cam: CameraModel):
    """Unnormalized camera-frame directions through every pixel center (z=1)."""
    key = (cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height)
    rays = _RAY_CACHE.get(key)
    if rays is None:
        u = (np.arange(cam.width) + 0.5 - cam.cx) / cam.fx
        v = (np.arange(cam.height) + 0.5 - cam.cy) / cam.fy
        gu, gv = np.meshgrid(u, v)
        rays = np.stack([gu, gv, np.ones_like(gu)], axis=-1)
        _RAY_CACHE[key] = rays
    return rays


def _shadow_footprint_window(cam_pose, cam, shadow_map, config):
    """Conservative pixel bounds of the shadow map's ground footprint.

    Returns (r0, r1, c0, c1) half-open, or None when nothing can be shadowed.
    Falls back to the full frame when a footprint corner sits behind the
    camera (projection would be unbounded).
    """
    if shadow_map.axis_z[2] >= 0:  # sun from below: no ground shadows
        return None
    if not np.isfinite(shadow_map.depth).any():
        return None
    s = shadow_map.resolution
    m = config.tap_radius_texels + 1.0
    corners_tex = [(-m, -m), (s + m, -m), (s + m, s + m), (-m, s + m)]
    us, vs = [], []
    for tx, ty in corners_tex:
        p = (
            shadow_map.origin
            + tx * shadow_map.texel_size * shadow_map.axis_x
            + ty * shadow_map.texel_size * shadow_map.axis_y
        )
        p = p + shadow_map.axis_z * ((config.ground_z - p[2]) / shadow_map.axis_z[2])
        pc = cam_pose.inverse_transform(p)
        if pc[2] <= cam.near:
            return 0, cam.height, 0, cam.width  # conservative fallback
        us.append(cam.fx * pc[0] / pc[2] + cam.cx)
        vs.append(cam.fy * pc[1] / pc[2] + cam.cy)
    c0 = max(int(np.floor(min(us))) - 1, 0)
    c1 = min(int(np.ceil(max(us))) + 1, cam.width)
    r0 = max(int(np.floor(min(vs))) - 1, 0)
    r1 = min(int(np.ceil(max(vs))) + 1, cam.height)
    if r0 >= r1 or c0 >= c1:
        return None
    return r0, r1, c0, c1


def _ground_shadow_layer(buffers, cam_pose, cam, shadow_map, config):
    """Mark shadowed real-ground pixels (alpha stays 0, depth = ground depth).

    Work is confined to the image window the shadow footprint projects to;
    everything outside is lit by construction.
    """
    window = _shadow_footprint_window(cam_pose, cam, shadow_map, config)
    if window is None:
        return
    r0, r1, c0, c1 = window
    rays_world = _pixel_rays(cam)[r0:r1, c0:c1] @ cam_pose.rotation.T
    origin = cam_pose.translation
    dz = rays_world[..., 2]
    hit = dz < -1e-12
    t = np.where(hit, (config.ground_z - origin[2]) / np.where(hit, dz, -1.0), np.inf)
    alpha_w = buffers.alpha[r0:r1, c0:c1]
    depth_w = buffers.depth[r0:r1, c0:c1]
    visible = hit & (t > cam.near) & (t <= cam.far) & (alpha_w == 0.0) & ~(depth_w < t)
    if not visible.any():
        return
    pts = origin + rays_world[visible] * t[visible][:, None]
    x_l, y_l, _ = shadow_map.to_light(pts)
    s = shadow_map.resolution
    margin = config.tap_radius_texels
    in_map = (x_l >= -margin) & (x_l < s + margin) & (y_l >= -margin) & (y_l < s + margin)
    if not in_map.any():
        return
    factors = shadow_factor(
        pts[in_map],
        shadow_map,
        poisson_samples=config.poisson_taps,
        bias=config.shadow_bias,
        tap_radius_texels=config.tap_radius_texels,
    )
    vis_idx = np.nonzero(visible)
    rows = vis_idx[0][in_map] + r0
    cols = vis_idx[1][in_map] + c0
    shadowed = factors < 1.0
    buffers.shadow_factor[rows[shadowed], cols[shadowed]] = factors[shadowed]
    buffers.depth[rows[shadowed], cols[shadowed]] = np.minimum(
        buffers.depth[rows[shadowed], cols[shadowed]], t[visible][in_map][shadowed]
    )


def rasterize(
    posed_meshes: list[tuple[Mesh, Pose3]],
    cam_pose: Pose3,
    cam: CameraModel,
    light: LightEnvironment,
    shadow_map: ShadowMap,
    config: RenderConfig | None = None,
) -> RenderBuffers:
    """Render all posed meshes into RenderBuffers from the given camera."""
    config = config or RenderConfig()
    buffers = RenderBuffers.empty(cam.width, cam.height)
    gathered = _gather_triangles(posed_meshes, cam_pose, cam)
    if gathered is not None:
        xs, ys, invz, normals, uvs, mids, materials = gathered
        zbuf = buffers.depth
        tid = np.full(zbuf.shape, -1, dtype=np.int64)
        b0 = np.zeros(zbuf.shape)
        b1 = np.zeros(zbuf.shape)
        _raster_perspective(
            np.ascontiguousarray(xs),
            np.ascontiguousarray(ys),
            np.ascontiguousarray(invz),
            cam.far,
            zbuf,
            tid,
            b0,
            b1,
        )
        covered = tid >= 0
        if covered.any():
            rows, cols = np.nonzero(covered)
            t_idx = tid[rows, cols]
            l0 = b0[rows, cols]
            l1 = b1[rows, cols]
            l2 = 1.0 - l0 - l1
            wgt = np.stack([l0, l1, l2], axis=1) * invz[t_idx]       # (K, 3)
            wsum = wgt.sum(axis=1, keepdims=True)
            wgt = wgt / wsum
            n_px = np.einsum("kj,kjc->kc", wgt, normals[t_idx])
            n_len = np.linalg.norm(n_px, axis=1, keepdims=True)
            n_px = n_px / np.maximum(n_len, 1e-12)
            uv_px = np.einsum("kj,kjc->kc", wgt, uvs[t_idx])

            z_px = zbuf[rows, cols]
            pc = np.stack(
                [
                    (cols + 0.5 - cam.cx) / cam.fx * z_px,
                    (rows + 0.5 - cam.cy) / cam.fy * z_px,
                    z_px,
                ],
                axis=1,
            )
            p_world = cam_pose.transform(pc)
            view = cam_pose.translation - p_world
            view = view / np.maximum(np.linalg.norm(view, axis=1, keepdims=True), 1e-12)
            # Two-sided shading: flip normals facing away from the camera.
            flip = np.sum(n_px * view, axis=1) < 0
            n_px[flip] = -n_px[flip]

            lit = shadow_factor(
                p_world,
                shadow_map,
                poisson_samples=config.poisson_taps,
                bias=config.shadow_bias,
                tap_radius_texels=config.tap_radius_texels,
            )
            color = np.zeros((rows.size, 3))
            mat_px = mids[t_idx]
            for m_id, material in enumerate(materials):
                sel = mat_px == m_id
                if not sel.any():
                    continue
                base, rough, metal = material.sample(uv_px[sel])
                color[sel] = shade(
                    p_world[sel],
                    n_px[sel],
                    view[sel],
                    base,
                    rough,
                    metal,
                    material.k_d,
                    material.k_s,
                    light,
                    np.asarray(lit)[sel],
                )
            buffers.color[rows, cols] = np.clip(color, 0.0, 1.0)
            buffers.alpha[rows, cols] = 1.0

    if config.cast_ground_shadows and posed_meshes:
        _ground_shadow_layer(buffers, cam_pose, cam, shadow_map, config)
    return buffers
