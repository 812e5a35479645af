"""On-disk formats for depth videos: 16-bit PGM depth frames, 8-bit PGM
ground-truth / mask images, and the directory layout of a video sequence.

Depth pixels are millimeter distances stored as uint16; the value 0 always
means "no measurement", never a zero distance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Optional

import numpy as np

DEPTH_MAXVAL = 65535
MASK_MAXVAL = 255


class PgmError(ValueError):
    """Raised for malformed or unsupported PGM content."""


class DatasetLayoutError(ValueError):
    """Raised when a sequence directory violates the documented layout."""


class GtLabel(IntEnum):
    BACKGROUND = 0
    SHADOW = 1
    OUTSIDE_ROI = 2
    UNKNOWN = 3
    FOREGROUND = 4


# 8-bit codes used in ground-truth files (CDnet-style convention).
GT_CODE_TO_LABEL = {
    0: GtLabel.BACKGROUND,
    50: GtLabel.SHADOW,
    85: GtLabel.OUTSIDE_ROI,
    170: GtLabel.UNKNOWN,
    255: GtLabel.FOREGROUND,
}
GT_LABEL_TO_CODE = {v: k for k, v in GT_CODE_TO_LABEL.items()}


@dataclass
class VideoSequence:
    """An ordered depth video with optional ground truth and ROI mask.

    frames: (n, h, w) uint16 depth stack
    gt:     optional (n, h, w) uint8 stack of GtLabel values
    roi:    optional (h, w) bool mask, True = inside region of interest
    """

    name: str
    frames: np.ndarray
    gt: Optional[np.ndarray] = None
    roi: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


def _read_pgm(path) -> tuple[np.ndarray, int]:
    """Parse a binary (P5) PGM file. Returns (pixels, maxval).

    16-bit samples are big-endian per the PGM specification.
    """
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise PgmError(f"{path}: not a binary PGM (missing P5 magic)")

    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comment lines allowed, then a single whitespace before pixels.
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
            continue
        m = re.match(rb"\d+", data[pos : pos + 20])
        if not m:
            raise PgmError(f"{path}: malformed header")
        tokens.append(int(m.group()))
        pos += m.end()
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PgmError(f"{path}: malformed header")
    pos += 1

    width, height, maxval = tokens
    if width <= 0 or height <= 0:
        raise PgmError(f"{path}: malformed header (non-positive dimensions)")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    body = data[pos : pos + expected]
    if len(body) < expected:
        raise PgmError(
            f"{path}: truncated pixel data ({len(body)} of {expected} bytes)"
        )
    pixels = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return pixels, maxval


def _write_pgm(path, pixels: np.ndarray, maxval: int) -> None:
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(pixels.tobytes())


def load_depth_frame(path) -> np.ndarray:
    """Load a 16-bit depth frame. Requires maxval 65535."""
    pixels, maxval = _read_pgm(path)
    if maxval != DEPTH_MAXVAL:
        raise PgmError(f"{path}: unsupported maxval {maxval} (expected {DEPTH_MAXVAL})")
    return pixels.astype(np.uint16)


def save_depth_frame(frame: np.ndarray, path) -> None:
    """Write a depth frame as big-endian 16-bit binary PGM."""
    frame = np.ascontiguousarray(frame, dtype=np.uint16)
    _write_pgm(path, frame.astype(">u2"), DEPTH_MAXVAL)


def load_groundtruth(path) -> np.ndarray:
    """Load an 8-bit ground-truth image and decode it to GtLabel values.

    Every pixel must carry one of the five known codes; anything else is
    reported with its value and position.
    """
    pixels, maxval = _read_pgm(path)
    if maxval > 255:
        raise PgmError(f"{path}: ground truth must be 8-bit (maxval {maxval})")
    lut = np.full(256, -1, dtype=np.int16)
    for code, label in GT_CODE_TO_LABEL.items():
        lut[code] = int(label)
    decoded = lut[pixels]
    bad = np.argwhere(decoded < 0)
    if bad.size:
        i, j = bad[0]
        raise PgmError(
            f"{path}: unknown ground-truth code {int(pixels[i, j])} at pixel ({int(i)}, {int(j)})"
        )
    return decoded.astype(np.uint8)


def save_groundtruth(labels: np.ndarray, path) -> None:
    """Encode GtLabel values back to their 8-bit codes and write a PGM."""
    lut = np.zeros(len(GtLabel), dtype=np.uint8)
    for label, code in GT_LABEL_TO_CODE.items():
        lut[int(label)] = code
    _write_pgm(path, lut[labels.astype(np.uint8)], MASK_MAXVAL)


def load_mask(path) -> np.ndarray:
    """Load a binary mask PGM; nonzero pixels are foreground (True)."""
    pixels, maxval = _read_pgm(path)
    if maxval > 255:
        raise PgmError(f"{path}: mask must be 8-bit (maxval {maxval})")
    return pixels != 0


def save_mask(mask: np.ndarray, path) -> None:
    """Write a binary mask as 8-bit PGM, background 0 / foreground 255."""
    _write_pgm(path, np.where(mask, 255, 0).astype(np.uint8), MASK_MAXVAL)


def _frame_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix == ".pgm")


def load_sequence(directory) -> VideoSequence:
    """Load a sequence from the documented layout.

    Layout::

        <dir>/depth/NNNNNN.pgm   required, 16-bit depth frames
        <dir>/gt/NNNNNN.pgm      optional, one per depth frame
        <dir>/ROI.pgm            optional, 8-bit region-of-interest mask

    Frames are ordered by lexicographic filename sort. All frames must share
    one resolution; a present gt folder must match the frame count.
    """
    directory = Path(directory)
    depth_dir = directory / "depth"
    if not depth_dir.is_dir():
        raise DatasetLayoutError(f"{directory}: missing depth/ subdirectory")
    files = _frame_files(depth_dir)
    if not files:
        raise DatasetLayoutError(f"{depth_dir}: no depth frames found")

    frames = []
    for p in files:
        frame = load_depth_frame(p)
        if frames and frame.shape != frames[0].shape:
            raise DatasetLayoutError(
                f"{p}: frame size {frame.shape} does not match {frames[0].shape}"
            )
        frames.append(frame)

    gt = None
    gt_dir = directory / "gt"
    if gt_dir.is_dir():
        gt_files = _frame_files(gt_dir)
        if len(gt_files) != len(files):
            raise DatasetLayoutError(
                f"{gt_dir}: {len(gt_files)} ground-truth frames for {len(files)} depth frames"
            )
        gt_list = []
        for p in gt_files:
            labels = load_groundtruth(p)
            if labels.shape != frames[0].shape:
                raise DatasetLayoutError(
                    f"{p}: ground-truth size {labels.shape} does not match frames"
                )
            gt_list.append(labels)
        gt = np.stack(gt_list)

    roi = None
    roi_path = directory / "ROI.pgm"
    if roi_path.exists():
        roi = load_mask(roi_path)
        if roi.shape != frames[0].shape:
            raise DatasetLayoutError(f"{roi_path}: ROI size does not match frames")

    return VideoSequence(name=directory.name, frames=np.stack(frames), gt=gt, roi=roi)


def save_sequence(seq: VideoSequence, directory) -> None:
    """Write a sequence in the layout load_sequence expects."""
    directory = Path(directory)
    for k in range(len(seq)):
        save_depth_frame(seq.frames[k], directory / "depth" / f"{k:06d}.pgm")
        if seq.gt is not None:
            save_groundtruth(seq.gt[k], directory / "gt" / f"{k:06d}.pgm")
    if seq.roi is not None:
        save_mask(seq.roi, directory / "ROI.pgm")
