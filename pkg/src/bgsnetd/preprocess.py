"""Sequence depth statistics, normalization, and background extraction.

Normalization maps valid depths affinely into (0, 1] while keeping 0
reserved for absent measurements: the smallest valid depth lands at
alpha / (max - min_valid + alpha), strictly above the absent value, so a
close surface can never be confused with a failed measurement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .depth_io import DEPTH_MAXVAL, VideoSequence


@dataclass
class DepthStats:
    """Depth range of a sequence: min over valid (nonzero) pixels, max over all."""

    min_valid: float
    max: float

    def __post_init__(self):
        if not 0 < self.min_valid <= self.max:
            raise ValueError(
                f"invalid depth stats: min_valid={self.min_valid}, max={self.max}"
            )


@dataclass
class NormConfig:
    """alpha is the millimeter offset separating valid pixels from the absent value."""

    alpha: float = 10.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def compute_depth_stats(
    seq: VideoSequence, stats_frames: Optional[int] = None
) -> DepthStats:
    """Scan a sequence for its valid-depth minimum and overall maximum.

    stats_frames restricts the scan to the first N frames (useful when later
    frames must not inform the normalization); default is the whole video.
    """
    frames = seq.frames if stats_frames is None else seq.frames[:stats_frames]
    valid = frames[frames != 0]
    if valid.size == 0:
        raise ValueError(f"{seq.name}: no valid depth (all pixels absent)")
    return DepthStats(min_valid=float(valid.min()), max=float(frames.max()))


def normalize_frame(
    frame: np.ndarray, stats: DepthStats, cfg: NormConfig = NormConfig()
) -> np.ndarray:
    """Normalize one depth frame to [0, 1] float64.

    Absent pixels (value 0) map to exactly 0.0. Valid pixels map to
    (x - (min_valid - alpha)) / (max - (min_valid - alpha)), clamped to
    [0, 1] in case the frame exceeds the supplied stats.
    """
    lo = stats.min_valid - cfg.alpha
    denom = stats.max - lo
    x = frame.astype(np.float64)
    out = np.clip((x - lo) / denom, 0.0, 1.0)
    out[frame == 0] = 0.0
    return out


def scale_raw_frame(frame: np.ndarray) -> np.ndarray:
    """Plain x / 65535 scaling with no absent-pixel separation.

    The untreated baseline: the smallest valid depths end up next to the
    absent value 0.
    """
    return frame.astype(np.float64) / DEPTH_MAXVAL


def extract_background(seq: VideoSequence) -> np.ndarray:
    """Per-pixel average depth over the frames in which the pixel is valid.

    Pixels that are absent in every frame stay 0 (absent). The average is
    rounded to the nearest integer millimeter so the result is a storable
    depth frame.
    """
    if len(seq) == 0:
        raise ValueError("cannot extract a background from an empty sequence")
    frames = seq.frames.astype(np.int64)
    total = frames.sum(axis=0)
    count = (frames != 0).sum(axis=0)
    bg = np.zeros(total.shape, dtype=np.uint16)
    seen = count > 0
    bg[seen] = np.rint(total[seen] / count[seen]).astype(np.uint16)
    return bg


def preprocess_sequence(
    seq: VideoSequence,
    cfg: NormConfig = NormConfig(),
    stats_frames: Optional[int] = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Extract the background on raw depth, then normalize it and every frame
    with one shared set of sequence statistics."""
    stats = compute_depth_stats(seq, stats_frames=stats_frames)
    bg = extract_background(seq)
    bg_norm = normalize_frame(bg, stats, cfg)
    frames_norm = [normalize_frame(f, stats, cfg) for f in seq.frames]
    return bg_norm, frames_norm
