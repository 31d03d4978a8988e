"""Training-time geometric augmentation on keypoint coordinates.

Rotation and zoom are applied to the keypoints themselves, before
rasterization, so the transforms are exact (no pixel interpolation).
Rotation follows the standard counterclockwise convention in a y-up
frame; with image coordinates (y down) the drawn result turns clockwise.

``per_clip`` mode (the default) draws one rotation/zoom pair per window
per epoch, keeping frame-to-frame motion coherent. ``per_frame`` redraws
for every frame, which scrambles the temporal signal and exists for
fidelity experiments only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .pose import KeypointSequence, effective_frame_size
from .raster import RasterClip, RasterSpec, render_frames, sequence_arrays


@dataclass(frozen=True)
class AugmentSpec:
    rotation_range: tuple[float, float] = (-45.0, 45.0)  # degrees
    zoom_range: tuple[float, float] = (1.0, 2.0)  # zoom-in factor
    mode: str = "per_clip"  # or "per_frame"

    def __post_init__(self):
        lo, hi = self.rotation_range
        if not (-180.0 <= lo <= hi <= 180.0):
            raise ValidationError(f"rotation_range must be ordered within [-180, 180], got {self.rotation_range}")
        if abs(lo + hi) > 1e-9:
            raise ValidationError(f"rotation_range must be symmetric about 0, got {self.rotation_range}")
        zlo, zhi = self.zoom_range
        if zlo < 1.0 or zhi < zlo:
            raise ValidationError(f"zoom_range must satisfy 1.0 <= lo <= hi, got {self.zoom_range}")
        if self.mode not in ("per_clip", "per_frame"):
            raise ValidationError(f"mode must be per_clip|per_frame, got {self.mode!r}")

    def to_dict(self):
        return {
            "rotation_range": list(self.rotation_range),
            "zoom_range": list(self.zoom_range),
            "mode": self.mode,
        }


def rotation_matrix(theta_degrees: float) -> np.ndarray:
    """CCW rotation in a y-up frame (clockwise as drawn with image y-down)."""
    rad = math.radians(theta_degrees)
    c, s = math.cos(rad), math.sin(rad)
    return np.array([[c, -s], [s, c]])


def _transform_about_center(seq: KeypointSequence, matrix: np.ndarray) -> KeypointSequence:
    cx, cy = (c / 2.0 for c in effective_frame_size(seq))
    center = np.array([cx, cy])
    out = seq.copy()
    for f in out.frames:
        if f.present.any():
            rel = f.coords[f.present] - center
            f.coords[f.present] = rel @ matrix.T + center
    return out


def rotate_sequence(seq: KeypointSequence, theta_degrees: float) -> KeypointSequence:
    """Rotate every present keypoint by theta about the frame center."""
    return _transform_about_center(seq, rotation_matrix(theta_degrees))


def zoom_sequence(seq: KeypointSequence, factor: float) -> KeypointSequence:
    """Scale every present keypoint about the frame center by factor >= 1."""
    if factor < 1.0:
        raise ValidationError(f"zoom factor must be >= 1.0, got {factor}")
    return _transform_about_center(seq, np.array([[factor, 0.0], [0.0, factor]]))


def draw_augmentation(spec: AugmentSpec, rng: np.random.Generator) -> tuple[float, float]:
    """Draw one (rotation degrees, zoom factor) pair from the spec's ranges."""
    theta = rng.uniform(spec.rotation_range[0], spec.rotation_range[1])
    factor = rng.uniform(spec.zoom_range[0], spec.zoom_range[1])
    return theta, factor


def augment_sequence(seq: KeypointSequence, spec: AugmentSpec, rng: np.random.Generator) -> KeypointSequence:
    """Apply one epoch's random rotation + zoom to a window."""
    if spec.mode == "per_clip":
        theta, factor = draw_augmentation(spec, rng)
        return zoom_sequence(rotate_sequence(seq, theta), factor)
    out = seq.copy()
    for t in range(len(out.frames)):
        theta, factor = draw_augmentation(spec, rng)
        single = KeypointSequence(
            clip_id=seq.clip_id,
            subject_id=seq.subject_id,
            label=seq.label,
            frames=[out.frames[t]],
            stride=seq.stride,
            origin_frame=out.frames[t].frame_index,
            frame_size=seq.frame_size,
        )
        out.frames[t] = zoom_sequence(rotate_sequence(single, theta), factor).frames[0]
    return out


def make_training_augmenter(spec: AugmentSpec):
    """Augmenter for the trainer: RasterClip -> freshly augmented RasterClip.

    Requires clips rasterized from keypoint windows (``clip.source`` set);
    the window is transformed and re-rendered with the clip's own raster
    geometry, so augmentation happens in exact coordinate space. Zoom
    commutes with rotation (isotropic), so one combined matrix applies
    rotate-then-zoom in a single pass over the stacked coordinates.
    """

    def augment(clip: RasterClip, rng: np.random.Generator) -> RasterClip:
        seq = clip.source
        if seq is None:
            raise ValidationError(
                f"clip {clip.clip_id!r}: cannot augment a raster clip without its keypoint source"
            )
        raster_spec = clip.spec if clip.spec is not None else RasterSpec()
        coords, present = sequence_arrays(seq)
        frame_size = effective_frame_size(seq)
        center = np.array([frame_size[0] / 2.0, frame_size[1] / 2.0])
        if spec.mode == "per_clip":
            theta, factor = draw_augmentation(spec, rng)
            matrix = factor * rotation_matrix(theta)
            coords = (coords - center) @ matrix.T + center
        else:
            for t in range(coords.shape[0]):
                theta, factor = draw_augmentation(spec, rng)
                matrix = factor * rotation_matrix(theta)
                coords[t] = (coords[t] - center) @ matrix.T + center
        frames = render_frames(coords, present, frame_size, raster_spec)
        return RasterClip(
            frames=frames,
            label=clip.label,
            subject_id=clip.subject_id,
            clip_id=clip.clip_id,
            origin_frame=clip.origin_frame,
            source=seq,
            spec=raster_spec,
        )

    return augment
