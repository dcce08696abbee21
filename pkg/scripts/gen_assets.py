#!/usr/bin/env python3
"""Regenerate the bundled mesh/material assets under assets/.

Assets are simple box-compound stand-ins for scanned props: a crate, a
pedestrian (with a two-frame walk cycle), a sedan, a parked van used as an
occluder, and a traffic-light pole.
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mixsim.render.mesh import Material, Mesh, make_box, mesh_to_obj


def combine(*meshes: Mesh) -> Mesh:
    verts, norms, uvs, tris = [], [], [], []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        norms.append(m.normals)
        uvs.append(m.uvs)
        tris.append(m.triangles + offset)
        offset += m.vertices.shape[0]
    return Mesh(
        np.vstack(verts), np.vstack(norms), np.vstack(tris), np.vstack(uvs), meshes[0].material
    )


def person(head_dx=0.0, lean=0.0) -> Mesh:
    body = make_box((0.15, 0.2, 0.55), center=(lean, 0.0, 0.55))
    head = make_box((0.10, 0.10, 0.12), center=(head_dx + lean, 0.0, 1.32))
    return combine(body, head)


def sedan() -> Mesh:
    body = make_box((2.0, 0.9, 0.35), center=(0.0, 0.0, 0.65))
    cabin = make_box((0.9, 0.8, 0.30), center=(-0.2, 0.0, 1.30))
    return combine(body, cabin)


def van() -> Mesh:
    return make_box((1.2, 0.9, 1.0), center=(0.0, 0.0, 1.0))


def pole() -> Mesh:
    post = make_box((0.08, 0.08, 1.8), center=(0.0, 0.0, 1.8))
    head = make_box((0.15, 0.15, 0.45), center=(0.0, 0.0, 3.0))
    return combine(post, head)


ASSETS = {
    "cube": (make_box((0.5, 0.5, 0.5), center=(0, 0, 0.5)),
             {"base_color": [0.72, 0.25, 0.12], "roughness": 0.6, "metallic": 0.0,
              "k_d": 1.0, "k_s": 0.6}),
    "walker": (person(),
               {"base_color": [0.20, 0.28, 0.55], "roughness": 0.9, "metallic": 0.0,
                "k_d": 1.0, "k_s": 0.25}),
    "car": (sedan(),
            {"base_color": [0.65, 0.08, 0.10], "roughness": 0.35, "metallic": 0.8,
             "k_d": 0.7, "k_s": 1.0}),
    "van": (van(),
            {"base_color": [0.82, 0.82, 0.80], "roughness": 0.5, "metallic": 0.4,
             "k_d": 0.9, "k_s": 0.8}),
    "pole": (pole(),
             {"base_color": [0.15, 0.16, 0.17], "roughness": 0.7, "metallic": 0.6,
              "k_d": 1.0, "k_s": 0.5}),
}

ANIMATIONS = {
    "walker": {"walk": [person(head_dx=0.04, lean=0.03), person(head_dx=-0.04, lean=-0.03)]},
}


def main(out="assets"):
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    for name, (mesh, material) in ASSETS.items():
        (root / f"{name}.obj").write_text(mesh_to_obj(mesh))
        (root / f"{name}.json").write_text(json.dumps(material, indent=2))
    for name, anims in ANIMATIONS.items():
        for anim, frames in anims.items():
            for k, mesh in enumerate(frames):
                (root / f"{name}.{anim}.{k}.obj").write_text(mesh_to_obj(mesh))
    print(f"wrote {len(ASSETS)} assets to {root}/")


if __name__ == "__main__":
    main(*sys.argv[1:])
