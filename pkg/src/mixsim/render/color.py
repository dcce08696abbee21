"""sRGB transfer functions and luma. All blending happens in linear RGB."""

from __future__ import annotations

import numpy as np


def srgb_to_linear(c):
    """sRGB in [0, 1] -> linear. Elementwise."""
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    """Linear -> sRGB, clipped to [0, 1]. Elementwise."""
    c = np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


# Single decode table: 8-bit sRGB -> linear float, exact and fast.
SRGB_DECODE_LUT = srgb_to_linear(np.arange(256, dtype=np.float64) / 255.0)


def decode_u8(img: np.ndarray) -> np.ndarray:
    """uint8 sRGB image -> linear float64."""
    return SRGB_DECODE_LUT[img]


def encode_u8(img: np.ndarray) -> np.ndarray:
    """Linear float image -> uint8 sRGB (round-half-even, like np.rint)."""
    return np.rint(linear_to_srgb(img) * 255.0).astype(np.uint8)


def luma601(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of an (..., 3) array, same scale as the input."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
