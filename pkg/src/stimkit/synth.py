"""Deterministic synthetic keypoint clips for end-to-end testing.

Two classes of clip share identical camera behavior and differ only in
head motion: the positive class oscillates the whole head cluster along
one axis at a fixed frequency, the negative class keeps it still. Both
get per-keypoint Gaussian jitter, an optional shared random-walk camera
drift (applied identically to every keypoint, like a handheld camera),
and independent detection dropout. Any classifier signal therefore has
to come from the oscillation, never from camera motion.

All randomness flows through per-clip generators derived from
``(seed, crc32(clip_id))``, so generation is reproducible and
order-independent.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SizeError, ValidationError
from .pose import HEAD_INDICES, N_BODY_PARTS, ClipRecord, PoseFrame

FRAME_WIDTH = 640
FRAME_HEIGHT = 480
FPS = 30.0

# Head template: offsets from the head anchor in units of inter-ear
# distance, (x right, y down). Rows follow HEAD_INDICES order:
# nose, neck, right_eye, left_eye, right_ear, left_ear.
HEAD_TEMPLATE = np.array(
    [
        [0.00, 0.00],
        [0.00, 0.90],
        [-0.16, -0.12],
        [0.16, -0.12],
        [-0.50, -0.05],
        [0.50, -0.05],
    ]
)

# Documented draw ranges for generated subjects.
BASE_X_RANGE = (200.0, 440.0)
BASE_Y_RANGE = (140.0, 300.0)
HEAD_SCALE_RANGE = (40.0, 80.0)
JITTER_SIGMA_RANGE = (0.5, 1.5)
DROPOUT_RANGE = (0.0, 0.08)

# Oscillation parameter draw ranges for generated positive clips. The
# frequency envelope allowed by MotionParams is [1, 3] Hz, but dataset
# draws stop at 2.5 Hz: with zero phase and 5-frame sampling at 30 fps,
# frequencies approaching 3 Hz land near the sampled Nyquist and their
# sampled displacement collapses toward zero.
FREQUENCY_DRAW_RANGE = (1.0, 2.5)
AMPLITUDE_DRAW_RANGE = (0.05, 0.15)
CLIP_LENGTH_CHOICES = (45, 60, 75)


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    base_position: tuple[float, float]
    head_scale: float  # inter-ear distance, pixels
    keypoint_jitter_sigma: float
    detection_dropout_prob: float

    def __post_init__(self):
        if self.head_scale <= 0:
            raise ValidationError(f"head_scale must be > 0, got {self.head_scale}")
        if not 0.0 <= self.detection_dropout_prob < 0.5:
            raise ValidationError(f"dropout must be in [0, 0.5), got {self.detection_dropout_prob}")


@dataclass(frozen=True)
class MotionParams:
    class_name: str  # "headbanging" | "stable"
    frequency: float = 2.0  # Hz, oscillation rate
    amplitude: float = 0.1  # fraction of frame height
    axis: tuple[float, float] = (0.0, 1.0)
    camera_drift_sigma: float = 0.0  # px per frame random-walk step

    def __post_init__(self):
        if self.class_name not in ("headbanging", "stable"):
            raise ValidationError(f"class_name must be headbanging|stable, got {self.class_name!r}")
        if self.class_name == "stable":
            object.__setattr__(self, "amplitude", 0.0)
        elif not 1.0 <= self.frequency <= 3.0:
            raise ValidationError(f"frequency must be in [1, 3] Hz, got {self.frequency}")
        if self.class_name == "headbanging" and not 0.05 <= self.amplitude <= 0.15:
            raise ValidationError(f"amplitude must be in [0.05, 0.15], got {self.amplitude}")
        norm = math.hypot(*self.axis)
        if abs(norm - 1.0) > 1e-6:
            raise ValidationError(f"axis must be a unit vector, got {self.axis}")
        if self.camera_drift_sigma < 0:
            raise ValidationError("camera_drift_sigma must be >= 0")

    @property
    def label(self) -> str:
        return "positive" if self.class_name == "headbanging" else "negative"


def clip_rng(seed: int, clip_id: str) -> np.random.Generator:
    """Per-clip generator derived from (seed, crc32(clip_id))."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, zlib.crc32(clip_id.encode())))))


def gen_profiles(n_subjects: int, rng: np.random.Generator) -> list[SubjectProfile]:
    """Draw n subject profiles from the documented ranges."""
    if n_subjects < 1:
        raise ValidationError(f"n_subjects must be >= 1, got {n_subjects}")
    profiles = []
    for i in range(n_subjects):
        profiles.append(
            SubjectProfile(
                subject_id=f"synth_{i:03d}",
                base_position=(
                    float(rng.uniform(*BASE_X_RANGE)),
                    float(rng.uniform(*BASE_Y_RANGE)),
                ),
                head_scale=float(rng.uniform(*HEAD_SCALE_RANGE)),
                keypoint_jitter_sigma=float(rng.uniform(*JITTER_SIGMA_RANGE)),
                detection_dropout_prob=float(rng.uniform(*DROPOUT_RANGE)),
            )
        )
    return profiles


def gen_clip(
    profile: SubjectProfile,
    params: MotionParams,
    n_frames: int,
    fps: float = FPS,
    rng: np.random.Generator | None = None,
    clip_id: str | None = None,
) -> tuple[list[PoseFrame], ClipRecord]:
    """Generate one clip's pose frames plus its manifest record.

    The head template sits at the subject's base position; positive clips
    add ``A * sin(2*pi*f*t/fps)`` along the motion axis to the whole
    cluster. The camera random walk translates every keypoint of a frame
    by the same offset. The record's keypoint_source is left empty until
    the clip is written to disk.
    """
    if n_frames < 35:
        raise SizeError(f"n_frames must be >= 35 (one full window), got {n_frames}")
    if rng is None:
        rng = np.random.default_rng(0)
    if clip_id is None:
        clip_id = f"{profile.subject_id}_clip"

    template = HEAD_TEMPLATE * profile.head_scale + np.asarray(profile.base_position)
    axis = np.asarray(params.axis)
    amplitude_px = params.amplitude * FRAME_HEIGHT

    frames = []
    camera = np.zeros(2)
    for t in range(n_frames):
        if t > 0 and params.camera_drift_sigma > 0:
            camera = camera + rng.normal(0.0, params.camera_drift_sigma, size=2)
        osc = amplitude_px * math.sin(2.0 * math.pi * params.frequency * t / fps)
        pts = template + osc * axis + camera
        if profile.keypoint_jitter_sigma > 0:
            pts = pts + rng.normal(0.0, profile.keypoint_jitter_sigma, size=(6, 2))
        dropped = rng.random(6) < profile.detection_dropout_prob
        conf = rng.uniform(0.6, 1.0, size=6)

        kps = np.zeros((N_BODY_PARTS, 3))
        for slot, idx in enumerate(HEAD_INDICES):
            if not dropped[slot]:
                kps[idx] = (pts[slot, 0], pts[slot, 1], conf[slot])
        frames.append(PoseFrame(t, kps))

    record = ClipRecord(
        clip_id=clip_id,
        subject_id=profile.subject_id,
        label=params.label,
        fps=fps,
        keypoint_source="",
        frame_range=(0, n_frames - 1),
    )
    return frames, record


def _frame_document(frame: PoseFrame) -> dict:
    flat = []
    for x, y, c in frame.keypoints:
        flat.extend((round(float(x), 3), round(float(y), 3), round(float(c), 3)))
    return {"people": [{"pose_keypoints_2d": flat}] if frame.keypoints[:, 2].any() else []}


def write_clip(frames: list[PoseFrame], path: Path) -> None:
    """Write frames as a consolidated keypoint JSON array."""
    docs = [_frame_document(f) for f in frames]
    path.write_text(json.dumps(docs, sort_keys=True, separators=(",", ":")) + "\n")


def gen_dataset(
    out_dir,
    n_subjects: int = 12,
    clips_per_subject: int = 6,
    seed: int = 0,
    camera_drift_sigma: float = 1.5,
) -> Path:
    """Generate a labeled dataset on disk; returns the manifest path.

    Per subject, the first half of the clips is positive (oscillating),
    the rest negative (stable). Frequency, amplitude, and clip length are
    drawn per clip; camera drift applies equally to both classes.
    """
    out_dir = Path(out_dir)
    kp_dir = out_dir / "keypoints"
    kp_dir.mkdir(parents=True, exist_ok=True)

    profiles = gen_profiles(n_subjects, clip_rng(seed, "profiles"))
    n_positive = clips_per_subject // 2 + clips_per_subject % 2

    manifest_clips = []
    for profile in profiles:
        for k in range(clips_per_subject):
            clip_id = f"{profile.subject_id}_c{k:02d}"
            rng = clip_rng(seed, clip_id)
            positive = k < n_positive
            params = MotionParams(
                class_name="headbanging" if positive else "stable",
                frequency=float(rng.uniform(*FREQUENCY_DRAW_RANGE)),
                amplitude=float(rng.uniform(*AMPLITUDE_DRAW_RANGE)) if positive else 0.0,
                camera_drift_sigma=camera_drift_sigma,
            )
            n_frames = int(rng.choice(CLIP_LENGTH_CHOICES))
            frames, record = gen_clip(profile, params, n_frames, FPS, rng, clip_id)
            rel_path = f"keypoints/{clip_id}.json"
            write_clip(frames, out_dir / rel_path)
            manifest_clips.append(
                {
                    "id": record.clip_id,
                    "subject": record.subject_id,
                    "label": record.label,
                    "fps": record.fps,
                    "keypoints": rel_path,
                    "start_frame": record.frame_range[0],
                    "end_frame": record.frame_range[1],
                }
            )

    manifest = {
        "version": 1,
        "frame_width": FRAME_WIDTH,
        "frame_height": FRAME_HEIGHT,
        "clips": manifest_clips,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest_path
