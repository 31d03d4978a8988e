"""Keypoint ingestion and head-region feature extraction.

The pipeline consumes 25-landmark body keypoints (the common "BODY_25"
layout emitted by pose estimators), keeps only the six head-region parts,
slices clips into fixed-length temporal windows sampled every few frames,
and optionally re-centers each window on its mean head position so that
frame-global camera translation does not move the head around the raster.

Coordinate convention throughout: x right, y down, pixels of the source
video frame.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    ConflictError,
    InvalidSequenceError,
    KeypointFormatError,
    KeypointParseError,
    SchemaError,
    ValidationError,
)

log = logging.getLogger("stimkit.pose")

N_BODY_PARTS = 25

# Head-region subset of the 25-part layout: index -> label.
HEAD_PARTS = {
    0: "nose",
    1: "neck",
    15: "right_eye",
    16: "left_eye",
    17: "right_ear",
    18: "left_ear",
}
HEAD_LABELS = ("nose", "neck", "right_eye", "left_eye", "right_ear", "left_ear")
HEAD_INDICES = (0, 1, 15, 16, 17, 18)

# Skeleton edges drawn between head parts, as label pairs.
HEAD_EDGES = (
    ("nose", "neck"),
    ("nose", "right_eye"),
    ("nose", "left_eye"),
    ("right_eye", "right_ear"),
    ("left_eye", "left_ear"),
)

DEFAULT_CONFIDENCE_THRESHOLD = 0.1

# A window is kept only if at least this fraction of its frames is valid
# (a frame is valid with >= 2 present points).
MIN_VALID_FRACTION = 0.7
MIN_POINTS_PER_FRAME = 2


@dataclass(frozen=True)
class Keypoint:
    """One detected landmark: pixel position plus confidence in [0, 1]."""

    x: float
    y: float
    confidence: float


@dataclass
class PoseFrame:
    """All 25 body keypoints of one frame; absent detections are (0,0,0)."""

    frame_index: int
    keypoints: np.ndarray  # (25, 3) float64 rows of x, y, confidence

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)
        if self.keypoints.shape != (N_BODY_PARTS, 3):
            raise KeypointFormatError(
                f"frame {self.frame_index}: expected (25, 3) keypoints, got {self.keypoints.shape}"
            )

    @staticmethod
    def empty(frame_index: int) -> "PoseFrame":
        return PoseFrame(frame_index, np.zeros((N_BODY_PARTS, 3)))


@dataclass
class HeadPose:
    """The six head keypoints of one frame, with presence flags.

    ``coords`` rows follow :data:`HEAD_LABELS` order. A part is present when
    its detection confidence met the threshold; absent rows are zeros.
    """

    frame_index: int
    coords: np.ndarray  # (6, 2) float64
    present: np.ndarray  # (6,) bool
    confidence: np.ndarray  # (6,) float64

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(6, 2)
        self.present = np.asarray(self.present, dtype=bool).reshape(6)
        self.confidence = np.asarray(self.confidence, dtype=np.float64).reshape(6)

    @property
    def valid(self) -> bool:
        return int(self.present.sum()) >= MIN_POINTS_PER_FRAME

    @property
    def points(self) -> dict[str, Optional[Keypoint]]:
        """Label -> Keypoint for present parts, None for absent ones."""
        out = {}
        for i, label in enumerate(HEAD_LABELS):
            if self.present[i]:
                out[label] = Keypoint(self.coords[i, 0], self.coords[i, 1], self.confidence[i])
            else:
                out[label] = None
        return out

    @property
    def edges(self) -> list[tuple[str, str]]:
        """Head-skeleton edges restricted to present endpoints."""
        idx = {label: i for i, label in enumerate(HEAD_LABELS)}
        return [
            (a, b)
            for a, b in HEAD_EDGES
            if self.present[idx[a]] and self.present[idx[b]]
        ]

    def copy(self) -> "HeadPose":
        return HeadPose(self.frame_index, self.coords.copy(), self.present.copy(), self.confidence.copy())


@dataclass(frozen=True)
class ClipRecord:
    """One manifest entry: where a clip's keypoints live and who is in it."""

    clip_id: str
    subject_id: str
    label: str  # "positive" | "negative"
    fps: float
    keypoint_source: str
    frame_range: tuple[int, int]  # inclusive

    def __post_init__(self):
        if self.label not in ("positive", "negative"):
            raise ValidationError(f"clip {self.clip_id!r}: label must be positive|negative, got {self.label!r}")
        if self.fps <= 0:
            raise ValidationError(f"clip {self.clip_id!r}: fps must be > 0, got {self.fps}")
        start, end = self.frame_range
        if start > end:
            raise ValidationError(f"clip {self.clip_id!r}: start_frame {start} > end_frame {end}")

    @property
    def n_frames(self) -> int:
        return self.frame_range[1] - self.frame_range[0] + 1


@dataclass(frozen=True)
class Manifest:
    """A validated dataset manifest: frame geometry plus clip records."""

    frame_width: int
    frame_height: int
    clips: tuple[ClipRecord, ...]
    base_dir: Path

    @property
    def frame_size(self) -> tuple[int, int]:
        return (self.frame_width, self.frame_height)

    def resolve_source(self, record: ClipRecord) -> Path:
        p = Path(record.keypoint_source)
        return p if p.is_absolute() else self.base_dir / p


@dataclass
class KeypointSequence:
    """T sampled head poses of one clip: the unit of classification."""

    clip_id: str
    subject_id: str
    label: str
    frames: list[HeadPose]
    stride: int
    origin_frame: int
    frame_size: Optional[tuple[int, int]] = None

    def __post_init__(self):
        for prev, cur in zip(self.frames, self.frames[1:]):
            if cur.frame_index - prev.frame_index != self.stride:
                raise ValidationError(
                    f"clip {self.clip_id!r}: window frames must be {self.stride} apart, "
                    f"got {prev.frame_index} -> {cur.frame_index}"
                )

    @property
    def T(self) -> int:
        return len(self.frames)

    def copy(self) -> "KeypointSequence":
        return replace(self, frames=[f.copy() for f in self.frames])

    def present_coords(self) -> np.ndarray:
        """Stack of (x, y) over all present points in all frames."""
        rows = [f.coords[f.present] for f in self.frames]
        rows = [r for r in rows if len(r)]
        if not rows:
            return np.zeros((0, 2))
        return np.concatenate(rows, axis=0)

    def centroid(self) -> np.ndarray:
        pts = self.present_coords()
        if len(pts) == 0:
            raise InvalidSequenceError(f"clip {self.clip_id!r}: no present keypoints in sequence")
        return pts.mean(axis=0)

    def frame_centroids(self) -> np.ndarray:
        """(T, 2) per-frame centroid over present points; NaN rows if empty."""
        out = np.full((len(self.frames), 2), np.nan)
        for i, f in enumerate(self.frames):
            if f.present.any():
                out[i] = f.coords[f.present].mean(axis=0)
        return out


def _head_confidence_sum(flat: np.ndarray) -> float:
    return float(sum(flat[3 * i + 2] for i in HEAD_INDICES))


def parse_pose_document(doc: dict, frame_index: int, source: str = "<memory>") -> PoseFrame:
    """Build a PoseFrame from one decoded per-frame JSON document."""
    if not isinstance(doc, dict) or "people" not in doc:
        raise KeypointFormatError(f"{source}: frame {frame_index}: missing 'people' array")
    people = doc["people"]
    if not isinstance(people, list):
        raise KeypointFormatError(f"{source}: frame {frame_index}: 'people' is not an array")
    if len(people) == 0:
        return PoseFrame.empty(frame_index)

    best = None
    best_score = -1.0
    for person in people:
        raw = person.get("pose_keypoints_2d")
        if raw is None:
            raise KeypointFormatError(f"{source}: frame {frame_index}: person missing 'pose_keypoints_2d'")
        flat = np.asarray(raw, dtype=np.float64)
        if flat.size % 3 != 0:
            raise KeypointFormatError(
                f"{source}: frame {frame_index}: keypoint array length {flat.size} not divisible by 3"
            )
        if flat.size != 3 * N_BODY_PARTS:
            raise KeypointFormatError(
                f"{source}: frame {frame_index}: expected {3 * N_BODY_PARTS} values "
                f"(25 keypoints), got {flat.size}"
            )
        score = _head_confidence_sum(flat)
        if score > best_score:
            best_score = score
            best = flat

    kps = best.reshape(N_BODY_PARTS, 3).copy()
    np.clip(kps[:, 2], 0.0, 1.0, out=kps[:, 2])
    return PoseFrame(frame_index, kps)


def import_openpose_frame(raw_json: bytes, frame_index: int = 0, source: str = "<memory>") -> PoseFrame:
    """Parse one per-frame keypoint JSON blob.

    When several people are present, the one with the largest summed head
    confidence wins; an empty ``people`` array yields an all-absent frame.
    """
    try:
        doc = json.loads(raw_json)
    except json.JSONDecodeError as e:
        raise KeypointParseError(source, e.pos, e.msg) from e
    return parse_pose_document(doc, frame_index, source)


def load_clip_frames(path, frame_range: Optional[tuple[int, int]] = None) -> list[PoseFrame]:
    """Load a clip's pose frames from a directory or a consolidated file.

    A directory is read as per-frame JSON files in lexicographic order;
    a single file must hold a JSON array of per-frame documents in frame
    order. ``frame_range`` (inclusive) selects a slice by frame index.
    """
    path = Path(path)
    frames: list[PoseFrame] = []
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix == ".json")
        for i, p in enumerate(files):
            frames.append(import_openpose_frame(p.read_bytes(), i, str(p)))
    else:
        try:
            docs = json.loads(path.read_bytes())
        except json.JSONDecodeError as e:
            raise KeypointParseError(str(path), e.pos, e.msg) from e
        if not isinstance(docs, list):
            raise KeypointFormatError(f"{path}: consolidated keypoint file must be a JSON array")
        for i, doc in enumerate(docs):
            frames.append(parse_pose_document(doc, i, str(path)))
    if frame_range is not None:
        start, end = frame_range
        frames = [f for f in frames if start <= f.frame_index <= end]
    return frames


_MANIFEST_CLIP_FIELDS = ("id", "subject", "label", "fps", "keypoints", "start_frame", "end_frame")


def load_manifest(path) -> Manifest:
    """Load and validate a dataset manifest (schema version 1)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_bytes())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: malformed JSON at byte {e.pos}: {e.msg}") from e
    if doc.get("version") != 1:
        raise SchemaError(f"{path}: field 'version': expected 1, got {doc.get('version')!r}")
    for dim in ("frame_width", "frame_height"):
        if not isinstance(doc.get(dim), int) or doc[dim] <= 0:
            raise SchemaError(f"{path}: field '{dim}': positive integer required")
    if "clips" not in doc or not isinstance(doc["clips"], list):
        raise SchemaError(f"{path}: field 'clips': array required")

    records = []
    seen = set()
    for n, entry in enumerate(doc["clips"]):
        for f in _MANIFEST_CLIP_FIELDS:
            if f not in entry:
                raise SchemaError(f"{path}: clip record {n}: missing field '{f}'")
        if entry["id"] in seen:
            raise ConflictError(f"{path}: duplicate clip id {entry['id']!r}")
        seen.add(entry["id"])
        records.append(
            ClipRecord(
                clip_id=str(entry["id"]),
                subject_id=str(entry["subject"]),
                label=str(entry["label"]),
                fps=float(entry["fps"]),
                keypoint_source=str(entry["keypoints"]),
                frame_range=(int(entry["start_frame"]), int(entry["end_frame"])),
            )
        )
    return Manifest(
        frame_width=doc["frame_width"],
        frame_height=doc["frame_height"],
        clips=tuple(records),
        base_dir=path.parent,
    )


def filter_head(frame: PoseFrame, confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD) -> HeadPose:
    """Reduce a full-body frame to its head-region keypoints."""
    coords = np.zeros((6, 2))
    conf = np.zeros(6)
    present = np.zeros(6, dtype=bool)
    for slot, idx in enumerate(HEAD_INDICES):
        x, y, c = frame.keypoints[idx]
        if c >= confidence_threshold and c > 0:
            coords[slot] = (x, y)
            conf[slot] = c
            present[slot] = True
    return HeadPose(frame.frame_index, coords, present, conf)


def sample_windows(
    frames: list[HeadPose],
    T: int = 7,
    stride: int = 5,
    hop: int = 15,
    clip_id: str = "",
    subject_id: str = "",
    label: str = "negative",
    frame_size: Optional[tuple[int, int]] = None,
) -> list[KeypointSequence]:
    """Slice a clip's head poses into overlapping T-frame windows.

    Window k takes list positions ``k*hop + j*stride`` for j in [0, T).
    Windows that would run past the clip are not emitted; windows with
    fewer than 70% valid frames are dropped (and logged).
    """
    span = (T - 1) * stride + 1
    n = len(frames)
    if n < span:
        log.warning("clip %s: %d frames < window span %d; no windows", clip_id or "?", n, span)
        return []
    min_valid = math.ceil(MIN_VALID_FRACTION * T)
    out = []
    dropped = 0
    k = 0
    while k * hop + span <= n:
        start = k * hop
        picks = [frames[start + j * stride] for j in range(T)]
        n_valid = sum(1 for f in picks if f.valid)
        if n_valid >= min_valid:
            out.append(
                KeypointSequence(
                    clip_id=clip_id,
                    subject_id=subject_id,
                    label=label,
                    frames=[f.copy() for f in picks],
                    stride=stride,
                    origin_frame=picks[0].frame_index,
                    frame_size=frame_size,
                )
            )
        else:
            dropped += 1
        k += 1
    if dropped:
        log.info("clip %s: dropped %d window(s) below %d valid frames", clip_id or "?", dropped, min_valid)
    return out


def effective_frame_size(seq: KeypointSequence) -> tuple[float, float]:
    """Source frame dimensions, falling back to the keypoint extent."""
    if seq.frame_size is not None:
        return (float(seq.frame_size[0]), float(seq.frame_size[1]))
    pts = seq.present_coords()
    if len(pts) == 0:
        raise InvalidSequenceError(f"clip {seq.clip_id!r}: no present keypoints and no frame size")
    w = max(float(pts[:, 0].max()), 1.0)
    h = max(float(pts[:, 1].max()), 1.0)
    return (w, h)


def center_sequence(seq: KeypointSequence) -> KeypointSequence:
    """Shift a window so its mean head centroid sits at the frame center.

    One constant translation for the whole window: frame-to-frame motion is
    preserved exactly, but the accumulated camera offset at this point of
    the clip is removed, so the head lands mid-raster regardless of drift.
    """
    centroid = seq.centroid()
    w, h = effective_frame_size(seq)
    shift = np.array([w / 2.0, h / 2.0]) - centroid
    out = seq.copy()
    # snap sub-nanopixel shifts to zero so re-centering is an exact no-op
    if np.abs(shift).max() < 1e-9:
        return out
    for f in out.frames:
        f.coords[f.present] += shift
    return out
