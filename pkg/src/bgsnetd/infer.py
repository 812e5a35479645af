"""Per-pixel foreground prediction over whole frames.

Every pixel is scored by running its 2-channel patch through the trained
classifier in eval mode; the probability map is thresholded into a binary
mask. No post-processing is applied to the mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Model
from .patches import _pad_windows


@dataclass
class InferConfig:
    threshold: float = 0.5
    pixel_batch: int = 256  # patches scored per forward call
    # Optional fast path: score the stride-2 grid and replicate to neighbors.
    stride2: bool = False

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")
        if self.pixel_batch < 1:
            raise ValueError("pixel_batch must be positive")


def predict_frame(
    model: Model,
    frame: np.ndarray,
    bg: np.ndarray,
    cfg: InferConfig = InferConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Score one normalized frame against its normalized background.

    Returns (probability map, mask); mask is probability >= threshold.
    Patch windows use the same center convention and edge replication as
    training, so train and inference see identical geometry.
    """
    if frame.shape != bg.shape:
        raise ValueError(f"frame {frame.shape} and background {bg.shape} differ in size")
    t = model.config.patch_size
    h, w = frame.shape
    frame_windows = _pad_windows(frame, t)
    bg_windows = _pad_windows(bg, t)

    step = 2 if cfg.stride2 else 1
    gi, gj = np.meshgrid(np.arange(0, h, step), np.arange(0, w, step), indexing="ij")
    ii = gi.ravel()
    jj = gj.ravel()
    scores = np.empty(ii.size, dtype=np.float64)
    for start in range(0, ii.size, cfg.pixel_batch):
        sel = slice(start, start + cfg.pixel_batch)
        x = np.stack([frame_windows[ii[sel], jj[sel]], bg_windows[ii[sel], jj[sel]]], axis=1)
        scores[sel] = model.forward(x, train=False)

    if cfg.stride2:
        grid = scores.reshape(gi.shape)
        prob = grid[np.arange(h) // 2][:, np.arange(w) // 2]
    else:
        prob = scores.reshape(h, w)
    return prob, prob >= cfg.threshold


def predict_baseline_avg(frame: np.ndarray, bg: np.ndarray, tau: float) -> np.ndarray:
    """Plain background-difference baseline on normalized values.

    A pixel is foreground only when both the frame and background carry a
    valid (nonzero) value and their absolute difference exceeds tau; absent
    pixels are always background.
    """
    if frame.shape != bg.shape:
        raise ValueError(f"frame {frame.shape} and background {bg.shape} differ in size")
    valid = (frame != 0) & (bg != 0)
    return valid & (np.abs(frame - bg) > tau)
