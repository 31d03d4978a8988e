"""Assemble training windows from a manifest plus keypoint files."""

from __future__ import annotations

from dataclasses import dataclass, field

from .pose import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    KeypointSequence,
    Manifest,
    filter_head,
    load_clip_frames,
    sample_windows,
)


@dataclass(frozen=True)
class WindowParams:
    T: int = 7
    stride: int = 5
    hop: int = 15
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD

    @property
    def span(self) -> int:
        return (self.T - 1) * self.stride + 1

    def to_dict(self):
        return {
            "T": self.T,
            "stride": self.stride,
            "hop": self.hop,
            "confidence_threshold": self.confidence_threshold,
        }


@dataclass
class WindowDataset:
    """All windows of a dataset, ready for fold splitting and rasterizing."""

    manifest: Manifest
    window_params: WindowParams
    windows: list[KeypointSequence] = field(default_factory=list)

    def subject_window_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for w in self.windows:
            counts[w.subject_id] = counts.get(w.subject_id, 0) + 1
        return counts

    def labels_by_subject(self) -> dict[str, set]:
        out: dict[str, set] = {}
        for w in self.windows:
            out.setdefault(w.subject_id, set()).add(w.label)
        return out


def clip_windows(manifest: Manifest, record, params: WindowParams) -> list[KeypointSequence]:
    """Load one clip's keypoints and slice them into windows."""
    frames = load_clip_frames(manifest.resolve_source(record), record.frame_range)
    heads = [filter_head(f, params.confidence_threshold) for f in frames]
    return sample_windows(
        heads,
        T=params.T,
        stride=params.stride,
        hop=params.hop,
        clip_id=record.clip_id,
        subject_id=record.subject_id,
        label=record.label,
        frame_size=manifest.frame_size,
    )


def build_dataset(manifest: Manifest, params: WindowParams = WindowParams()) -> WindowDataset:
    """Window every clip in the manifest, in manifest order."""
    ds = WindowDataset(manifest=manifest, window_params=params)
    for record in manifest.clips:
        ds.windows.extend(clip_windows(manifest, record, params))
    return ds
