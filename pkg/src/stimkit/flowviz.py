"""Rendering of flow fields: hue/intensity panels and arrow overlays."""

from __future__ import annotations

import numpy as np

from .errors import SizeError
from .flow import FlowField
from .raster import draw_primitives


_HUE_GRID = 2.0**43  # hue snapped to multiples of 2^-43 deg: 180 + hue is then
# exact in float64, so antipodal pairs differ by exactly 180.


def flow_hue_degrees(u, v):
    """Direction as hue in [0, 360); antipodal vectors differ by exactly 180.

    Vectors in the open lower half-plane (and the negative x axis) are
    mapped through their antipode plus 180 degrees, and hues are snapped
    to a 2^-43-degree grid, so the pair (u, v) / (-u, -v) always lands
    exactly 180 apart.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    upper = (v > 0) | ((v == 0) & (u >= 0))
    base = np.degrees(np.arctan2(np.where(upper, v, -v), np.where(upper, u, -u)))
    base = np.round(base * _HUE_GRID) / _HUE_GRID
    hue = np.where(upper, base, 180.0 + base)
    return np.where(hue >= 360.0, hue - 360.0, hue)


def _hsv_to_rgb(h_deg, s, v):
    """Vectorized HSV -> RGB, hue in degrees, s and v in [0, 1]."""
    h6 = (h_deg % 360.0) / 60.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def flow_to_hsv(flow: FlowField, max_magnitude: float | None = None) -> np.ndarray:
    """Dense flow as an RGB image: hue = direction, intensity = magnitude.

    Saturation is 1, invalid pixels are black, and when ``max_magnitude``
    is not given it autoscales to the 95th percentile of valid magnitudes.
    Returns float64 (H, W, 3) in [0, 1].
    """
    if flow.kind != "dense":
        raise SizeError("flow_to_hsv renders dense fields; use render_arrows for sparse grids")
    u, v, valid = flow.grids()
    mag = np.hypot(u, v)
    if max_magnitude is None:
        vm = mag[valid]
        max_magnitude = float(np.percentile(vm, 95)) if vm.size else 0.0
    if max_magnitude <= 0:
        return np.zeros(u.shape + (3,))
    intensity = np.clip(mag / max_magnitude, 0.0, 1.0)
    intensity = np.where(valid, intensity, 0.0)
    hue = flow_hue_degrees(u, v)
    return _hsv_to_rgb(hue, 1.0, intensity)


def render_arrows(
    flow: FlowField,
    background: np.ndarray | None = None,
    shape: tuple[int, int] | None = None,
    scale: float = 1.0,
) -> np.ndarray:
    """Sparse flow as dots plus motion segments, optionally over an image.

    Isolation mode (no background) draws on black. Returns float64
    (H, W, 3) RGB in [0, 1].
    """
    if flow.kind != "sparse_grid":
        raise SizeError("render_arrows renders sparse grids; use flow_to_hsv for dense fields")
    if background is not None:
        bg = np.asarray(background, dtype=np.float64)
        canvas = np.stack([bg, bg, bg], axis=-1)
        h, w = bg.shape
    else:
        if shape is None:
            if len(flow.points):
                w = int(np.ceil(flow.points[:, 0].max())) + 2
                h = int(np.ceil(flow.points[:, 1].max())) + 2
            else:
                h = w = 2
        else:
            h, w = shape
        canvas = np.zeros((h, w, 3))

    seg_mask = np.zeros((h, w), dtype=np.float32)
    dot_mask = np.zeros((h, w), dtype=np.float32)
    pts = flow.points[flow.valid]
    vecs = flow.vectors[flow.valid]
    if len(pts):
        segments = np.concatenate([pts, pts + scale * vecs], axis=1)
        draw_primitives(seg_mask, np.zeros((0, 2)), 1.0, segments, 0.5)
        draw_primitives(dot_mask, pts, 1.0, np.zeros((0, 4)), 0.5)
    canvas[seg_mask > 0] = (0.0, 1.0, 0.0)
    canvas[dot_mask > 0] = (1.0, 0.2, 0.2)
    return canvas
