"""Split-sum direct lighting: constant ambient plus one directional sun.

Outgoing radiance for a surface point:

    L = L_a * base_color + lit * L_s * f_r * max(w_s . n, 0)

with f_r = k_d * f_d + k_s * f_s, a Lambert diffuse lobe f_d = base_color / pi
and a microfacet specular lobe f_s built from the GGX normal distribution,
the Smith separable visibility term, and a Schlick Fresnel with
F0 = mix(0.04, base_color, metallic).

Term choices fixed here (and mirrored by the test oracle): alpha = roughness^2
clamped to >= ALPHA_MIN; the specular denominator is clamped to >= 1e-9.
Output is linear radiance clamped to >= 0; no tone mapping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALPHA_MIN = 1e-4
F0_DIELECTRIC = 0.04


@dataclass(frozen=True)
class LightEnvironment:
    """One sun direction (unit vector from surface toward the sun) plus
    constant ambient sky radiance, both linear RGB."""

    sun_dir: np.ndarray
    sun_radiance: np.ndarray
    ambient_radiance: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.sun_dir, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("sun_dir must be nonzero")
        if abs(n - 1.0) > 1e-12:  # keep already-unit vectors bit-stable
            d = d / n
        object.__setattr__(self, "sun_dir", d)
        for name in ("sun_radiance", "ambient_radiance"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            if (v < 0).any():
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, v)


def _normalize(v, eps=1e-12):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, eps)


def ggx_distribution(ndh, alpha):
    a2 = alpha * alpha
    denom = ndh * ndh * (a2 - 1.0) + 1.0
    return a2 / (np.pi * denom * denom)


def smith_g1(ndv, alpha):
    a2 = alpha * alpha
    return 2.0 * ndv / (ndv + np.sqrt(a2 + (1.0 - a2) * ndv * ndv))


def schlick_fresnel(f0, hdv):
    return f0 + (1.0 - f0) * (1.0 - hdv)[..., None] ** 5


def shade(x, n, omega_o, base_color, roughness, metallic, k_d, k_s, light, lit):
    """Shade surface samples; broadcasts over leading dimensions.

    x, n, omega_o: (..., 3); n and omega_o unit length. base_color (..., 3);
    roughness, metallic, lit: (...) in [0, 1]; k_d, k_s scalar blend weights.
    Returns linear RGB (..., 3), >= 0.
    """
    n = np.asarray(n, dtype=np.float64)
    omega_o = np.asarray(omega_o, dtype=np.float64)
    base_color = np.asarray(base_color, dtype=np.float64)
    roughness = np.asarray(roughness, dtype=np.float64)
    metallic = np.asarray(metallic, dtype=np.float64)
    lit = np.asarray(lit, dtype=np.float64)
    w_s = light.sun_dir

    ndl = np.maximum(np.sum(n * w_s, axis=-1), 0.0)
    ndv = np.maximum(np.sum(n * omega_o, axis=-1), 0.0)

    half = _normalize(w_s + omega_o)
    ndh = np.maximum(np.sum(n * half, axis=-1), 0.0)
    hdv = np.maximum(np.sum(half * omega_o, axis=-1), 0.0)

    alpha = np.maximum(roughness * roughness, ALPHA_MIN)
    d_term = ggx_distribution(ndh, alpha)
    g_term = smith_g1(np.maximum(ndv, 1e-9), alpha) * smith_g1(np.maximum(ndl, 1e-9), alpha)
    f0 = F0_DIELECTRIC * (1.0 - metallic)[..., None] + base_color * metallic[..., None]
    f_term = schlick_fresnel(f0, hdv)

    spec = f_term * (d_term * g_term / np.maximum(4.0 * ndl * ndv, 1e-9))[..., None]
    diff = base_color / np.pi
    f_r = k_d * diff + k_s * spec

    direct = lit[..., None] * light.sun_radiance * f_r * ndl[..., None]
    ambient = light.ambient_radiance * base_color
    return np.maximum(ambient + direct, 0.0)


def shade_point(x, n, omega_o, material, light, lit=1.0):
    """Scalar convenience wrapper for a single sample of a constant material."""
    out = shade(
        np.asarray(x, dtype=float),
        np.asarray(n, dtype=float),
        np.asarray(omega_o, dtype=float),
        np.asarray(material.base_color, dtype=float),
        np.asarray(material.roughness, dtype=float),
        np.asarray(material.metallic, dtype=float),
        material.k_d,
        material.k_s,
        light,
        np.asarray(lit, dtype=float),
    )
    return out
