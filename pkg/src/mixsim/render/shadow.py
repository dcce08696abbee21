"""Two-pass shadow mapping: an orthographic depth render from the sun,
then percentage-closer lookups with a frozen Poisson-disk tap pattern.

Light frame: z along -sun_dir (into the scene), x/y spanning the map plane.
Map depths are distances from the light-side near plane; +inf marks empty
texels.  Lookups add a fixed bias against acne; points outside the fitted
map footprint are treated as fully lit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose3
from .mesh import Mesh

# Frozen progressive disk pattern (scripts/gen_poisson_pattern.py, seeded):
# any prefix is itself well spread, so `poisson_samples` just takes the
# first N rows.  Offsets are in units of the footprint radius.
POISSON_DISK_64 = np.array([
    [ 0.00000000,  0.00000000],
    [ 0.99499554,  0.09936993],
    [-0.61799980,  0.78239764],
    [-0.67755658, -0.72317674],
    [ 0.53006756, -0.81475991],
    [ 0.34466418,  0.92749894],
    [-0.90375394,  0.03328941],
    [-0.08574260, -0.95674839],
    [ 0.46202663,  0.28985334],
    [-0.11270378,  0.58208762],
    [ 0.65105482, -0.29873673],
    [ 0.08393202, -0.49957243],
    [-0.44653756, -0.27162383],
    [-0.39861960,  0.24468847],
    [ 0.75880101,  0.60655727],
    [-0.86757748,  0.48641569],
    [-0.92601964, -0.37561017],
    [-0.04090997,  0.99414999],
    [ 0.33956201, -0.05909662],
    [-0.31771861, -0.58125451],
    [ 0.22203295,  0.58026137],
    [ 0.20025181, -0.81869114],
    [ 0.39746212, -0.51817594],
    [ 0.77612653, -0.58516448],
    [ 0.12622007,  0.30475658],
    [ 0.69523593,  0.01064031],
    [-0.34582910,  0.91585667],
    [ 0.96836545, -0.22780819],
    [-0.38427995, -0.88484553],
    [ 0.79455448,  0.30872342],
    [-0.40204870,  0.57277304],
    [-0.26937619, -0.01827853],
    [-0.62571811, -0.05578146],
    [ 0.13649703, -0.21073352],
    [ 0.48984857,  0.66358256],
    [-0.16586846, -0.32764591],
    [-0.66477325,  0.25125675],
    [-0.61728625, -0.46260565],
    [-0.12785553,  0.34867686],
    [ 0.10472880,  0.81119691],
    [-0.61789497,  0.49490081],
    [-0.82552088, -0.16888184],
    [-0.08483126, -0.72670410],
    [-0.14948801,  0.80501721],
    [-0.92016963,  0.25080202],
    [ 0.19477223,  0.12740565],
    [ 0.44156458, -0.24117378],
    [ 0.83755305, -0.39785391],
    [-0.19932179,  0.16451754],
    [ 0.40927707,  0.48476890],
    [-0.50105127, -0.65313765],
    [ 0.45664302,  0.09921811],
    [ 0.62130227,  0.43552257],
    [ 0.26048751, -0.35017338],
    [ 0.36379073, -0.71411829],
    [ 0.87098916, -0.04156307],
    [-0.02659771,  0.17500787],
    [-0.81375671, -0.56503623],
    [-0.42323192,  0.06454901],
    [ 0.58103233, -0.52165212],
    [-0.64936647, -0.26878433],
    [-0.74099846,  0.65589835],
    [-0.30781058,  0.72437830],
    [-0.13590641, -0.51910671],
])


class DegenerateSunError(ValueError):
    """Sun direction too close to horizontal for a bounded shadow volume."""


@dataclass
class ShadowMap:
    depth: np.ndarray       # (S, S) meters from the light near plane, +inf empty
    origin: np.ndarray      # world point of texel (0, 0)'s corner on the near plane
    axis_x: np.ndarray      # world direction across columns (unit)
    axis_y: np.ndarray      # world direction across rows (unit)
    axis_z: np.ndarray      # world direction of increasing depth (unit, = -sun_dir)
    texel_size: float       # meters per texel

    @property
    def resolution(self) -> int:
        return self.depth.shape[0]

    def to_light(self, p_world: np.ndarray):
        """World points (..., 3) -> (x_texels, y_texels, depth_m)."""
        rel = np.asarray(p_world, dtype=np.float64) - self.origin
        x = (rel @ self.axis_x) / self.texel_size
        y = (rel @ self.axis_y) / self.texel_size
        z = rel @ self.axis_z
        return x, y, z


def _light_basis(sun_dir: np.ndarray):
    z = -np.asarray(sun_dir, dtype=np.float64)
    if abs(z[2]) < math.sin(1e-3):
        raise DegenerateSunError(
            "sun direction is horizontal within 1e-3 rad; shadow footprint unbounded"
        )
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(up, z)
    xn = np.linalg.norm(x)
    x = np.array([1.0, 0.0, 0.0]) if xn < 1e-9 else x / xn
    y = np.cross(z, x)
    return x, y / np.linalg.norm(y), z


def render_shadow_map(
    posed_meshes: list[tuple[Mesh, Pose3]],
    sun_dir,
    resolution: int = 512,
    ground_margin: float = 1.0,
    ground_z: float = 0.0,
) -> ShadowMap:
    """First shadow pass: orthographic depth of all virtual geometry from the
    sun, fitted to the actors' bounds plus their ground shadow footprint."""
    axis_x, axis_y, axis_z = _light_basis(np.asarray(sun_dir, dtype=np.float64))

    world_tris = []
    for mesh, pose in posed_meshes:
        v = pose.transform(mesh.vertices)
        world_tris.append(v[mesh.triangles])
    if not world_tris:
        return ShadowMap(
            depth=np.full((resolution, resolution), np.inf),
            origin=np.zeros(3),
            axis_x=axis_x, axis_y=axis_y, axis_z=axis_z,
            texel_size=1.0,
        )

    tris = np.concatenate(world_tris, axis=0)  # (T, 3, 3)
    pts = tris.reshape(-1, 3)
    if axis_z[2] < 0:
        # Sun above the horizon: extend bounds to where each vertex lands on
        # the ground plane along the sun ray, so cast shadows fit the map.
        t = np.maximum((ground_z - pts[:, 2]) / axis_z[2], 0.0)
        pts = np.vstack([pts, pts + t[:, None] * axis_z])

    px = pts @ axis_x
    py = pts @ axis_y
    pz = pts @ axis_z
    lo_x, hi_x = px.min() - ground_margin, px.max() + ground_margin
    lo_y, hi_y = py.min() - ground_margin, py.max() + ground_margin
    near = pz.min() - 0.1
    span = max(hi_x - lo_x, hi_y - lo_y)
    texel = span / resolution
    origin = lo_x * axis_x + lo_y * axis_y + near * axis_z

    from .raster import rasterize_depth_ortho  # local import: raster needs numba

    depth = rasterize_depth_ortho(
        tris, origin, axis_x, axis_y, axis_z, texel, resolution
    )
    return ShadowMap(depth, origin, axis_x, axis_y, axis_z, texel)


def shadow_factor(
    p_world,
    shadow_map: ShadowMap,
    poisson_samples: int = 16,
    bias: float = 0.02,
    tap_radius_texels: float = 2.0,
) -> np.ndarray:
    """Lit fraction in [0, 1] for points (..., 3); 1 = fully lit.

    Averages the first `poisson_samples` taps of the frozen pattern scaled
    by `tap_radius_texels`; a tap is lit when map depth + bias >= the
    point's light depth.  Taps (or whole points) outside the map are lit.
    """
    if poisson_samples < 1:
        raise ValueError("poisson_samples must be >= 1")
    taps = POISSON_DISK_64[: min(poisson_samples, len(POISSON_DISK_64))]
    x, y, z = shadow_map.to_light(np.atleast_2d(np.asarray(p_world, dtype=np.float64)))
    s = shadow_map.resolution

    inside = (x >= 0) & (x < s) & (y >= 0) & (y < s)
    lit_counts = np.zeros(x.shape, dtype=np.float64)
    for dx, dy in taps * tap_radius_texels:
        xi = np.floor(x + dx).astype(np.int64)
        yi = np.floor(y + dy).astype(np.int64)
        tap_in = (xi >= 0) & (xi < s) & (yi >= 0) & (yi < s)
        d = np.where(
            tap_in,
            shadow_map.depth[np.clip(yi, 0, s - 1), np.clip(xi, 0, s - 1)],
            np.inf,
        )
        lit_counts += (d + bias >= z).astype(np.float64)
    out = lit_counts / len(taps)
    out[~inside] = 1.0
    shape = np.asarray(p_world).shape[:-1]
    return out.reshape(shape) if shape else float(out[0])
