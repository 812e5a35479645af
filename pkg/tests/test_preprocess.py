import numpy as np
import pytest

from bgsnetd.depth_io import VideoSequence
from bgsnetd.preprocess import (
    DepthStats,
    NormConfig,
    compute_depth_stats,
    extract_background,
    normalize_frame,
    preprocess_sequence,
    scale_raw_frame,
)


def _seq(*frames, name="s"):
    return VideoSequence(name, np.stack([np.asarray(f, dtype=np.uint16) for f in frames]))


def reference_normalize(x, min_valid, max_, alpha):
    """Independent direct substitution of the normalization formula."""
    if x == 0:
        return 0.0
    lo = min_valid - alpha
    return min(1.0, max(0.0, (x - lo) / (max_ - lo)))


class TestDepthStats:
    def test_min_over_nonzero_max_over_all(self):
        seq = _seq([[0, 800, 1200]], [[0, 700, 1500]])
        stats = compute_depth_stats(seq)
        assert stats.min_valid == 700 and stats.max == 1500

    def test_single_pixel(self):
        stats = compute_depth_stats(_seq([[500]]))
        assert stats.min_valid == 500 and stats.max == 500

    def test_all_absent_raises(self):
        with pytest.raises(ValueError, match="no valid depth"):
            compute_depth_stats(_seq([[0, 0], [0, 0]]))

    def test_restriction_to_leading_frames(self):
        seq = _seq([[1000]], [[200]])
        assert compute_depth_stats(seq, stats_frames=1).min_valid == 1000
        assert compute_depth_stats(seq).min_valid == 200

    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            DepthStats(min_valid=0, max=100)
        with pytest.raises(ValueError):
            DepthStats(min_valid=200, max=100)


class TestNormalize:
    stats = DepthStats(500, 4000)
    cfg = NormConfig(alpha=10)

    def test_absent_maps_to_exact_zero(self):
        out = normalize_frame(np.array([[0]], dtype=np.uint16), self.stats, self.cfg)
        assert out[0, 0] == 0.0

    def test_maximum_maps_to_one(self):
        out = normalize_frame(np.array([[4000]], dtype=np.uint16), self.stats, self.cfg)
        assert out[0, 0] == 1.0

    def test_hand_computed_values(self):
        frame = np.array([[500, 2000]], dtype=np.uint16)
        out = normalize_frame(frame, self.stats, self.cfg)
        np.testing.assert_allclose(out[0, 0], 10.0 / 3510.0, rtol=1e-12)
        np.testing.assert_allclose(out[0, 1], 1510.0 / 3510.0, rtol=1e-12)
        assert abs(out[0, 0] - 0.0028490) < 5e-8
        assert abs(out[0, 1] - 0.4301994) < 5e-8

    def test_matches_direct_substitution_on_random_inputs(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            min_valid = int(rng.integers(1, 5000))
            max_ = min_valid + int(rng.integers(0, 6000))
            alpha = float(rng.uniform(0.5, 100))
            stats = DepthStats(min_valid, max_)
            xs = rng.integers(0, 65536, size=(4, 4)).astype(np.uint16)
            xs[rng.random((4, 4)) < 0.3] = 0
            out = normalize_frame(xs, stats, NormConfig(alpha))
            ref = np.array(
                [[reference_normalize(int(x), min_valid, max_, alpha) for x in row] for row in xs]
            )
            np.testing.assert_allclose(out, ref, atol=1e-12)

    def test_monotonic_on_valid_pixels(self):
        xs = np.arange(500, 4001, 50, dtype=np.uint16).reshape(1, -1)
        out = normalize_frame(xs, self.stats, self.cfg)
        assert np.all(np.diff(out[0]) > 0)

    def test_valid_pixels_separated_from_absent(self):
        floor = self.cfg.alpha / (self.stats.max - self.stats.min_valid + self.cfg.alpha)
        xs = np.array([[500, 501, 3999, 4000]], dtype=np.uint16)
        out = normalize_frame(xs, self.stats, self.cfg)
        assert np.all(out >= floor) and floor > 0

    def test_affine_shift_consistency(self):
        xs = np.array([[600, 1000, 2500, 0]], dtype=np.uint16)
        base = normalize_frame(xs, DepthStats(600, 2500), self.cfg)
        shift = 731
        shifted = normalize_frame(
            np.where(xs > 0, xs + shift, 0).astype(np.uint16),
            DepthStats(600 + shift, 2500 + shift),
            self.cfg,
        )
        assert np.array_equal(base, shifted)

    def test_raw_scaling_arm(self):
        frame = np.array([[0, 65535, 1000]], dtype=np.uint16)
        out = scale_raw_frame(frame)
        np.testing.assert_allclose(out, [[0.0, 1.0, 1000.0 / 65535.0]])


def brute_force_background(frames):
    """Per-pixel mean over nonzero observations, the slow way."""
    n, h, w = frames.shape
    out = np.zeros((h, w), dtype=np.uint16)
    for i in range(h):
        for j in range(w):
            vals = [int(frames[k, i, j]) for k in range(n) if frames[k, i, j] != 0]
            if vals:
                out[i, j] = int(np.rint(np.mean(vals)))
    return out


class TestBackground:
    def test_hand_computed_pixel_series(self):
        seq = _seq([[1000]], [[0]], [[1200]], [[0]])
        assert extract_background(seq)[0, 0] == 1100

    def test_never_valid_pixel_stays_absent(self):
        seq = _seq([[0]], [[0]], [[0]])
        assert extract_background(seq)[0, 0] == 0

    def test_constant_series_is_identity(self):
        seq = _seq([[777]], [[777]], [[777]])
        assert extract_background(seq)[0, 0] == 777

    def test_matches_brute_force_on_random_sequences(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(1, 11))
            h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            frames = rng.integers(0, 5000, size=(n, h, w)).astype(np.uint16)
            frames[rng.random((n, h, w)) < 0.35] = 0
            seq = VideoSequence("r", frames)
            assert np.array_equal(extract_background(seq), brute_force_background(frames))

    def test_empty_sequence_raises(self):
        seq = VideoSequence("e", np.zeros((0, 2, 2), dtype=np.uint16))
        with pytest.raises(ValueError, match="empty"):
            extract_background(seq)


class TestPreprocessSequence:
    def test_single_all_valid_frame_background_equals_frame(self):
        seq = _seq([[600, 900], [1200, 4000]])
        bg_norm, frames_norm = preprocess_sequence(seq)
        assert np.array_equal(bg_norm, frames_norm[0])

    def test_always_absent_pixel_is_zero_in_normalized_background(self):
        seq = _seq([[0, 800]], [[0, 1000]])
        bg_norm, _ = preprocess_sequence(seq)
        assert bg_norm[0, 0] == 0.0

    def test_shared_stats_keep_background_inside_unit_interval(self):
        rng = np.random.default_rng(3)
        frames = rng.integers(0, 8000, size=(6, 5, 5)).astype(np.uint16)
        frames[rng.random(frames.shape) < 0.2] = 0
        seq = VideoSequence("s", frames)
        bg_norm, frames_norm = preprocess_sequence(seq)
        for arr in [bg_norm, *frames_norm]:
            assert arr.min() >= 0.0 and arr.max() <= 1.0
