"""2-channel patch extraction and training-set generation.

A sample pairs a TxT window of a normalized frame with the same window of
the normalized background, centered on the pixel being classified. Labels
come from ground truth: foreground 1, background/shadow 0; unknown-motion
and outside-ROI pixels contribute no samples at all.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .depth_io import GtLabel, VideoSequence

DATASET_MAGIC = b"BGSD"
DATASET_VERSION = 1

# GtLabel -> sample label; -1 means the pixel yields no sample.
_LABEL_LUT = np.full(len(GtLabel), -1, dtype=np.int8)
_LABEL_LUT[int(GtLabel.BACKGROUND)] = 0
_LABEL_LUT[int(GtLabel.SHADOW)] = 0  # depth sensors do not see shadows; score as background
_LABEL_LUT[int(GtLabel.FOREGROUND)] = 1


class DatasetError(ValueError):
    """Raised for unreadable dataset files or empty training sets."""


@dataclass
class SamplingConfig:
    patch_size: int = 40
    max_samples_per_frame: int = 200
    fg_bg_balance: float = 0.5  # target foreground fraction, best effort
    stride: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 4 or self.patch_size % 2:
            raise ValueError("patch_size must be even and >= 4")
        if not 0.0 <= self.fg_bg_balance <= 1.0:
            raise ValueError("fg_bg_balance must lie in [0, 1]")
        if self.stride < 1 or self.max_samples_per_frame < 1:
            raise ValueError("stride and max_samples_per_frame must be positive")


@dataclass
class PatchSample:
    data: np.ndarray  # (2, T, T): channel 0 input window, channel 1 background window
    label: int
    origin: tuple[int, int, int]  # (frame index, row, col)


class PatchDataset:
    """Array-backed sample collection; indexable as PatchSample views."""

    def __init__(self, data: np.ndarray, labels: np.ndarray, origins: np.ndarray):
        assert data.ndim == 4 and data.shape[1] == 2 and data.shape[2] == data.shape[3]
        self.data = data
        self.labels = labels
        self.origins = origins

    @property
    def patch_size(self) -> int:
        return self.data.shape[2]

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, idx: int) -> PatchSample:
        return PatchSample(self.data[idx], int(self.labels[idx]), tuple(self.origins[idx]))


def extract_patch(
    frame: np.ndarray, bg: np.ndarray, i: int, j: int, patch_size: int
) -> np.ndarray:
    """Cut the 2-channel window for pixel (i, j).

    The window spans rows i - T/2 .. i + T/2 - 1 (same for columns);
    coordinates outside the frame replicate the nearest edge pixel, never
    zero, since 0 would fabricate absent measurements.
    """
    if frame.shape != bg.shape:
        raise ValueError(f"frame {frame.shape} and background {bg.shape} differ in size")
    h, w = frame.shape
    if not (0 <= i < h and 0 <= j < w):
        raise ValueError(f"pixel ({i}, {j}) outside {h}x{w} frame")
    half = patch_size // 2
    rows = np.clip(np.arange(i - half, i + half), 0, h - 1)
    cols = np.clip(np.arange(j - half, j + half), 0, w - 1)
    return np.stack([frame[np.ix_(rows, cols)], bg[np.ix_(rows, cols)]])


def label_from_gt(gt: int) -> Optional[int]:
    """Foreground -> 1, background and shadow -> 0, unknown motion and
    outside-ROI -> None (pixel excluded from training)."""
    value = _LABEL_LUT[int(gt)]
    return None if value < 0 else int(value)


def _pad_windows(image: np.ndarray, patch_size: int) -> np.ndarray:
    """Edge-replicated sliding windows: result[i, j] is the patch at (i, j)."""
    half = patch_size // 2
    padded = np.pad(image, ((half, half - 1), (half, half - 1)), mode="edge")
    return np.lib.stride_tricks.sliding_window_view(padded, (patch_size, patch_size))


def generate_training_set(
    seq: VideoSequence,
    bg: np.ndarray,
    frames: Sequence[np.ndarray],
    cfg: SamplingConfig,
    frame_indices: Optional[Sequence[int]] = None,
) -> PatchDataset:
    """Sample labeled 2-channel patches from the given normalized frames.

    Candidate pixels sit on the stride grid and carry a usable label; each
    frame's candidates are subsampled (seeded, deterministic) toward the
    target foreground fraction, capped at max_samples_per_frame. When one
    class is scarce the other tops up the quota.
    """
    if seq.gt is None:
        raise DatasetError(f"{seq.name}: sequence has no ground truth")
    t = cfg.patch_size
    indices = list(range(len(frames))) if frame_indices is None else list(frame_indices)
    rng = np.random.default_rng(cfg.seed)
    bg_windows = _pad_windows(bg, t)

    chunks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    origins: list[np.ndarray] = []
    for k in indices:
        gt = seq.gt[k]
        grid_labels = _LABEL_LUT[gt[:: cfg.stride, :: cfg.stride]].astype(np.int16)
        if seq.roi is not None:
            grid_labels[~seq.roi[:: cfg.stride, :: cfg.stride]] = -1
        ii, jj = np.nonzero(grid_labels >= 0)
        if ii.size == 0:
            continue
        lab = grid_labels[ii, jj]
        fg_idx = np.nonzero(lab == 1)[0]
        bg_idx = np.nonzero(lab == 0)[0]

        n_target = min(cfg.max_samples_per_frame, ii.size)
        take_fg = min(int(round(n_target * cfg.fg_bg_balance)), fg_idx.size)
        take_bg = min(n_target - take_fg, bg_idx.size)
        take_fg = min(n_target - take_bg, fg_idx.size)

        chosen = np.concatenate([
            rng.choice(fg_idx, size=take_fg, replace=False) if take_fg else np.empty(0, int),
            rng.choice(bg_idx, size=take_bg, replace=False) if take_bg else np.empty(0, int),
        ]).astype(np.intp)
        chosen.sort()

        ri = ii[chosen] * cfg.stride
        rj = jj[chosen] * cfg.stride
        frame_windows = _pad_windows(frames[k], t)
        patch_pair = np.stack(
            [frame_windows[ri, rj], bg_windows[ri, rj]], axis=1
        )  # (n, 2, T, T)
        chunks.append(patch_pair.astype(np.float32))
        labels.append(lab[chosen].astype(np.uint8))
        origins.append(np.column_stack([np.full(chosen.size, k), ri, rj]).astype(np.int32))

    if not chunks:
        raise DatasetError("empty dataset: no labeled pixels in the sampled frames")
    return PatchDataset(
        np.concatenate(chunks), np.concatenate(labels), np.concatenate(origins)
    )


_HEADER = struct.Struct("<4sIII")  # magic, version, patch size, sample count


def _record_dtype(patch_size: int) -> np.dtype:
    return np.dtype(
        [("label", "u1"), ("origin", "<i4", (3,)), ("data", "<f4", (2, patch_size, patch_size))]
    )


def save_dataset(dataset: PatchDataset, path) -> None:
    """Write the binary record stream: a fixed header, then one packed
    record (label, origin, both channels) per sample."""
    t = dataset.patch_size
    rec = np.empty(len(dataset), dtype=_record_dtype(t))
    rec["label"] = dataset.labels
    rec["origin"] = dataset.origins
    rec["data"] = dataset.data
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, t, len(dataset)))
        f.write(rec.tobytes())


def load_dataset(path) -> PatchDataset:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DatasetError(f"{path}: file too short for a dataset header")
    magic, version, t, count = _HEADER.unpack_from(data)
    if magic != DATASET_MAGIC:
        raise DatasetError(f"{path}: not a patch dataset (bad magic)")
    if version != DATASET_VERSION:
        raise DatasetError(f"{path}: unsupported dataset version {version}")
    dt = _record_dtype(t)
    expected = _HEADER.size + count * dt.itemsize
    if len(data) != expected:
        raise DatasetError(f"{path}: expected {expected} bytes, found {len(data)}")
    rec = np.frombuffer(data, dtype=dt, offset=_HEADER.size)
    return PatchDataset(
        rec["data"].copy(), rec["label"].copy(), rec["origin"].copy()
    )
