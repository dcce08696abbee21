"""Triangle meshes, PBR materials, and the on-disk asset format.

An asset is a Wavefront-style text mesh (`v`, `vn`, `vt`, `f` records,
polygons fan-triangulated) plus a JSON sidecar of the same stem:

    {"base_color": [r,g,b], "roughness": 0.7, "metallic": 0.0,
     "k_d": 1.0, "k_s": 1.0, "textures": {"base_color": "skin.png"}}

Texture values, when present, override the scalar/RGB constants per texel
(nearest-neighbor lookup, sRGB-decoded for base_color).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .color import srgb_to_linear


class AssetError(Exception):
    pass


@dataclass
class Texture:
    data: np.ndarray  # (H, W) or (H, W, 3) float in [0, 1], linear

    def sample(self, uv: np.ndarray) -> np.ndarray:
        """Nearest-texel lookup; uv wraps, v=0 is the bottom row."""
        h, w = self.data.shape[:2]
        u = np.mod(np.asarray(uv)[..., 0], 1.0)
        v = np.mod(np.asarray(uv)[..., 1], 1.0)
        xi = np.minimum((u * w).astype(np.int64), w - 1)
        yi = np.minimum(((1.0 - v) * h).astype(np.int64), h - 1)
        return self.data[yi, xi]


@dataclass
class Material:
    base_color: np.ndarray = field(default_factory=lambda: np.array([0.8, 0.8, 0.8]))
    roughness: float = 0.7
    metallic: float = 0.0
    k_d: float = 1.0
    k_s: float = 1.0
    base_color_tex: Texture | None = None
    roughness_tex: Texture | None = None
    metallic_tex: Texture | None = None

    def __post_init__(self):
        self.base_color = np.clip(np.asarray(self.base_color, dtype=float).reshape(3), 0.0, 1.0)
        self.roughness = float(min(max(self.roughness, 0.0), 1.0))
        self.metallic = float(min(max(self.metallic, 0.0), 1.0))
        for w in ("k_d", "k_s"):
            v = float(getattr(self, w))
            if not 0.0 <= v <= 1.0:
                raise AssetError(f"{w} must be in [0, 1], got {v}")
            setattr(self, w, v)

    def sample(self, uv: np.ndarray):
        """Per-sample (base_color, roughness, metallic) arrays for uv (..., 2)."""
        k = np.asarray(uv).shape[:-1]
        base = (
            self.base_color_tex.sample(uv)
            if self.base_color_tex is not None
            else np.broadcast_to(self.base_color, k + (3,))
        )
        rough = (
            self.roughness_tex.sample(uv)
            if self.roughness_tex is not None
            else np.broadcast_to(self.roughness, k)
        )
        metal = (
            self.metallic_tex.sample(uv)
            if self.metallic_tex is not None
            else np.broadcast_to(self.metallic, k)
        )
        return (
            np.clip(base, 0.0, 1.0),
            np.clip(rough, 0.0, 1.0),
            np.clip(metal, 0.0, 1.0),
        )


@dataclass
class Mesh:
    vertices: np.ndarray   # (V, 3) object frame, meters
    normals: np.ndarray    # (V, 3) unit
    triangles: np.ndarray  # (T, 3) int indices
    uvs: np.ndarray        # (V, 2)
    material: Material

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        v = self.vertices.shape[0]
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= v):
            raise AssetError("triangle index out of range")
        norms = np.linalg.norm(self.normals, axis=1)
        if norms.size and np.abs(norms - 1.0).max() > 1e-6:
            raise AssetError("normals must be unit length")

    @property
    def triangle_count(self) -> int:
        return int(self.triangles.shape[0])


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted smooth normals; used when the file carries none."""
    n = np.zeros_like(vertices)
    a = vertices[triangles[:, 0]]
    face = np.cross(vertices[triangles[:, 1]] - a, vertices[triangles[:, 2]] - a)
    for k in range(3):
        np.add.at(n, triangles[:, k], face)
    lengths = np.linalg.norm(n, axis=1, keepdims=True)
    lengths[lengths == 0] = 1.0
    return n / lengths


def parse_obj(text: str, material: Material) -> Mesh:
    """Parse the v/vt/vn/f subset of Wavefront text into a triangle mesh.

    Face corners with differing position/uv/normal index triples become
    distinct vertices; polygons are fan-triangulated.
    """
    positions, uvs, normals = [], [], []
    corner_index: dict[tuple, int] = {}
    out_pos, out_uv, out_nrm, tris = [], [], [], []
    has_normals = False

    def corner(token: str) -> int:
        nonlocal has_normals
        if token in corner_index:
            return corner_index[token]
        parts = token.split("/")
        vi = int(parts[0])
        vi = vi - 1 if vi > 0 else len(positions) + vi
        ti = ni = None
        if len(parts) > 1 and parts[1]:
            ti = int(parts[1]) - 1 if int(parts[1]) > 0 else len(uvs) + int(parts[1])
        if len(parts) > 2 and parts[2]:
            ni = int(parts[2]) - 1 if int(parts[2]) > 0 else len(normals) + int(parts[2])
            has_normals = True
        idx = len(out_pos)
        out_pos.append(positions[vi])
        out_uv.append(uvs[ti] if ti is not None else (0.0, 0.0))
        out_nrm.append(normals[ni] if ni is not None else (0.0, 0.0, 0.0))
        corner_index[token] = idx
        return idx

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        try:
            if fields[0] == "v":
                positions.append(tuple(float(x) for x in fields[1:4]))
            elif fields[0] == "vt":
                uvs.append(tuple(float(x) for x in fields[1:3]))
            elif fields[0] == "vn":
                normals.append(tuple(float(x) for x in fields[1:4]))
            elif fields[0] == "f":
                ids = [corner(tok) for tok in fields[1:]]
                for k in range(1, len(ids) - 1):
                    tris.append((ids[0], ids[k], ids[k + 1]))
        except (ValueError, IndexError) as exc:
            raise AssetError(f"bad mesh record at line {lineno}: {raw!r}") from exc

    if not tris:
        raise AssetError("mesh has no faces")
    vertices = np.asarray(out_pos, dtype=np.float64)
    triangles = np.asarray(tris, dtype=np.int64)
    if has_normals:
        nrm = np.asarray(out_nrm, dtype=np.float64)
        lengths = np.linalg.norm(nrm, axis=1, keepdims=True)
        lengths[lengths == 0] = 1.0
        nrm = nrm / lengths
    else:
        nrm = compute_vertex_normals(vertices, triangles)
    uv_arr = np.asarray(out_uv, dtype=np.float64)
    return Mesh(vertices, nrm, triangles, uv_arr, material)


def _load_texture(path: Path, srgb: bool) -> Texture:
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return Texture(srgb_to_linear(img) if srgb else img)


def load_material(path: Path) -> Material:
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise AssetError(f"malformed material file {path}: {exc}") from exc
    mat = Material(
        base_color=raw.get("base_color", [0.8, 0.8, 0.8]),
        roughness=raw.get("roughness", 0.7),
        metallic=raw.get("metallic", 0.0),
        k_d=raw.get("k_d", 1.0),
        k_s=raw.get("k_s", 1.0),
    )
    textures = raw.get("textures", {})
    for key, attr, srgb in (
        ("base_color", "base_color_tex", True),
        ("roughness", "roughness_tex", False),
        ("metallic", "metallic_tex", False),
    ):
        if key in textures:
            tex_path = path.parent / textures[key]
            if not tex_path.exists():
                raise AssetError(f"texture not found: {tex_path}")
            tex = _load_texture(tex_path, srgb)
            if key != "base_color":
                tex = Texture(tex.data[..., 0])
            setattr(mat, attr, tex)
    return mat


ASSET_PATH_ENV = "SOW_ASSET_PATH"


class AssetLibrary:
    """Resolves scenario asset keys to meshes; caches loads.

    A key `cube` maps to `<root>/cube.obj` + `<root>/cube.json`.  Animated
    assets store baked keyframes `<root>/<key>.<anim>.N.obj` (N = 0, 1, ...)
    sharing the base material.
    """

    def __init__(self, root: str | os.PathLike | None = None):
        if root is None:
            root = os.environ.get(ASSET_PATH_ENV, ".")
        self.root = Path(root)
        self._cache: dict[tuple[str, str | None], list[Mesh]] = {}

    def resolve(self, key: str, animation: str | None = None) -> list[Path]:
        base = self.root / f"{key}.obj"
        if animation is None:
            if not base.exists():
                raise AssetError(f"unresolved asset reference {key!r}: {base} not found")
            return [base]
        frames = sorted(self.root.glob(f"{key}.{animation}.*.obj"))
        if not frames:
            raise AssetError(f"unresolved animation {animation!r} for asset {key!r}")
        return frames

    def load(self, key: str, animation: str | None = None) -> list[Mesh]:
        cache_key = (key, animation)
        if cache_key not in self._cache:
            mat_path = self.root / f"{key}.json"
            material = load_material(mat_path) if mat_path.exists() else Material()
            meshes = [
                parse_obj(p.read_text(), material) for p in self.resolve(key, animation)
            ]
            self._cache[cache_key] = meshes
        return self._cache[cache_key]


def make_box(half_extents=(0.5, 0.5, 0.5), center=(0.0, 0.0, 0.0), material=None) -> Mesh:
    """Axis-aligned box with flat per-face normals; handy for tests/fixtures."""
    hx, hy, hz = half_extents
    cx, cy, cz = center
    faces = []
    for axis, sign in ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)):
        n = np.zeros(3)
        n[axis] = sign
        u = np.zeros(3)
        u[(axis + 1) % 3] = 1.0
        v = np.cross(n, u)
        h = (hx, hy, hz)
        quad = [
            n * h[axis] + du * u * h[(axis + 1) % 3] + dv * v * h[(axis + 2) % 3]
            for du, dv in ((-sign, -1), (sign, -1), (sign, 1), (-sign, 1))
        ]
        faces.append((quad, n))
    verts, norms, uvs, tris = [], [], [], []
    for quad, n in faces:
        base = len(verts)
        verts.extend(np.asarray(q) + (cx, cy, cz) for q in quad)
        norms.extend([n] * 4)
        uvs.extend([(0, 0), (1, 0), (1, 1), (0, 1)])
        tris.extend([(base, base + 1, base + 2), (base, base + 2, base + 3)])
    return Mesh(
        np.asarray(verts), np.asarray(norms, dtype=float), np.asarray(tris),
        np.asarray(uvs, dtype=float), material or Material(),
    )


def mesh_to_obj(mesh: Mesh) -> str:
    """Serialize a mesh back to the text format (fixture generation)."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for t in mesh.uvs:
        lines.append(f"vt {t[0]:.9g} {t[1]:.9g}")
    for n in mesh.normals:
        lines.append(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
    for a, b, c in mesh.triangles + 1:
        lines.append(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}")
    return "\n".join(lines) + "\n"
