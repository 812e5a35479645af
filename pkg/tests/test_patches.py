import numpy as np
import pytest

from bgsnetd.depth_io import GtLabel, VideoSequence
from bgsnetd.patches import (
    DatasetError,
    SamplingConfig,
    extract_patch,
    generate_training_set,
    label_from_gt,
    load_dataset,
    save_dataset,
)


class TestExtractPatch:
    def test_interior_pixel_is_a_direct_copy(self):
        rng = np.random.default_rng(0)
        frame = rng.random((64, 64))
        bg = rng.random((64, 64))
        patch = extract_patch(frame, bg, 32, 32, 40)
        assert patch.shape == (2, 40, 40)
        assert np.array_equal(patch[0], frame[12:52, 12:52])
        assert np.array_equal(patch[1], bg[12:52, 12:52])

    def test_corner_pixel_replicates_edges(self):
        frame = np.arange(64 * 64, dtype=float).reshape(64, 64)
        patch = extract_patch(frame, frame, 0, 0, 40)
        # first 20 rows/cols all replicate row/col 0
        assert np.all(patch[0, :21, 20] == frame[0, 0])
        assert np.all(patch[0, 20, :21] == frame[0, 0])
        assert patch[0, 20, 20] == frame[0, 0]
        assert patch[0, 21, 20] == frame[1, 0]

    def test_constant_frame_padding_invariance(self):
        frame = np.full((10, 12), 0.37)
        for i, j in [(0, 0), (9, 11), (5, 6), (0, 11)]:
            patch = extract_patch(frame, frame, i, j, 8)
            assert np.all(patch == 0.37)

    def test_center_convention(self):
        # pixel (i, j) sits at window offset (T/2, T/2)
        frame = np.zeros((16, 16))
        frame[7, 9] = 1.0
        patch = extract_patch(frame, frame, 7, 9, 8)
        assert patch[0, 4, 4] == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="differ in size"):
            extract_patch(np.zeros((4, 4)), np.zeros((5, 5)), 0, 0, 4)


class TestLabelFromGt:
    def test_mapping(self):
        assert label_from_gt(GtLabel.FOREGROUND) == 1
        assert label_from_gt(GtLabel.BACKGROUND) == 0
        assert label_from_gt(GtLabel.SHADOW) == 0
        assert label_from_gt(GtLabel.UNKNOWN) is None
        assert label_from_gt(GtLabel.OUTSIDE_ROI) is None


def _labeled_sequence(h=24, w=24, n=3, fg_rect=(8, 8, 16, 16), unknown_ring=True):
    rng = np.random.default_rng(1)
    frames = rng.integers(500, 3000, size=(n, h, w)).astype(np.uint16)
    gt = np.zeros((n, h, w), dtype=np.uint8)
    top, left, bottom, right = fg_rect
    gt[:, top:bottom, left:right] = int(GtLabel.FOREGROUND)
    if unknown_ring:
        gt[:, top - 1 : bottom + 1, left - 1 : right + 1] = np.where(
            gt[0, top - 1 : bottom + 1, left - 1 : right + 1] == int(GtLabel.FOREGROUND),
            int(GtLabel.FOREGROUND),
            int(GtLabel.UNKNOWN),
        )
    return VideoSequence("lab", frames, gt)


def _normalized(seq):
    frames = [f / 65535.0 for f in seq.frames]
    bg = np.full(seq.frames[0].shape, 0.5)
    return bg, frames


class TestGenerateTrainingSet:
    def test_labels_follow_ground_truth_and_skip_exclusions(self):
        seq = _labeled_sequence()
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=500, stride=1, seed=0)
        ds = generate_training_set(seq, bg, frames, cfg)
        for idx in range(len(ds)):
            sample = ds[idx]
            k, i, j = sample.origin
            gt_value = int(seq.gt[k, i, j])
            assert label_from_gt(gt_value) == sample.label
            assert gt_value not in (int(GtLabel.UNKNOWN), int(GtLabel.OUTSIDE_ROI))

    def test_patch_channels_match_extract_patch(self):
        seq = _labeled_sequence()
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=20, seed=3)
        ds = generate_training_set(seq, bg, frames, cfg)
        sample = ds[len(ds) // 2]
        k, i, j = sample.origin
        np.testing.assert_allclose(
            sample.data,
            extract_patch(frames[k], bg, i, j, 8).astype(np.float32),
        )

    def test_background_channel_depends_only_on_position(self):
        seq = _labeled_sequence()
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=300, seed=0)
        ds = generate_training_set(seq, bg, frames, cfg)
        by_pos = {}
        for idx in range(len(ds)):
            sample = ds[idx]
            _, i, j = sample.origin
            key = (i, j)
            if key in by_pos:
                assert np.array_equal(by_pos[key], sample.data[1])
            else:
                by_pos[key] = sample.data[1]

    def test_all_unknown_frame_contributes_nothing(self):
        seq = _labeled_sequence()
        seq.gt[1][:] = int(GtLabel.UNKNOWN)
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=50, seed=0)
        ds = generate_training_set(seq, bg, frames, cfg)
        assert not np.any(ds.origins[:, 0] == 1)

    def test_single_class_balance_is_best_effort(self):
        seq = _labeled_sequence()
        seq.gt[:] = int(GtLabel.BACKGROUND)
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=30, fg_bg_balance=0.5, seed=0)
        ds = generate_training_set(seq, bg, frames, cfg)
        assert len(ds) == 90  # quota still filled, all from the background class
        assert np.all(ds.labels == 0)

    def test_balance_target_hit_when_both_classes_plentiful(self):
        seq = _labeled_sequence(fg_rect=(4, 4, 20, 20))
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=100, fg_bg_balance=0.5, seed=0)
        ds = generate_training_set(seq, bg, frames, cfg)
        per_frame = 100
        fg_per_frame = np.count_nonzero(ds.labels[:per_frame] == 1)
        assert fg_per_frame == 50

    def test_deterministic_under_seed(self):
        seq = _labeled_sequence()
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=40, seed=9)
        a = generate_training_set(seq, bg, frames, cfg)
        b = generate_training_set(seq, bg, frames, cfg)
        assert np.array_equal(a.data, b.data)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.origins, b.origins)

    def test_roi_mask_excludes_pixels(self):
        seq = _labeled_sequence()
        roi = np.ones(seq.frames[0].shape, dtype=bool)
        roi[:, :12] = False
        seq.roi = roi
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=400, seed=0)
        ds = generate_training_set(seq, bg, frames, cfg)
        assert np.all(ds.origins[:, 2] >= 12)

    def test_no_labeled_pixels_raises(self):
        seq = _labeled_sequence()
        seq.gt[:] = int(GtLabel.OUTSIDE_ROI)
        bg, frames = _normalized(seq)
        with pytest.raises(DatasetError, match="empty dataset"):
            generate_training_set(seq, bg, frames, SamplingConfig(patch_size=8))

    def test_frame_indices_select_frames(self):
        seq = _labeled_sequence(n=4)
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=10, seed=0)
        ds = generate_training_set(seq, bg, frames, cfg, frame_indices=[0, 2])
        assert set(np.unique(ds.origins[:, 0])) == {0, 2}


class TestSamplingConfigValidation:
    def test_rejects_odd_or_tiny_patch(self):
        with pytest.raises(ValueError):
            SamplingConfig(patch_size=7)
        with pytest.raises(ValueError):
            SamplingConfig(patch_size=2)

    def test_rejects_bad_balance(self):
        with pytest.raises(ValueError):
            SamplingConfig(fg_bg_balance=1.5)


class TestDatasetFile:
    def _dataset(self):
        seq = _labeled_sequence()
        bg, frames = _normalized(seq)
        cfg = SamplingConfig(patch_size=8, max_samples_per_frame=25, seed=2)
        return generate_training_set(seq, bg, frames, cfg)

    def test_roundtrip(self, tmp_path):
        ds = self._dataset()
        save_dataset(ds, tmp_path / "d.bgsd")
        back = load_dataset(tmp_path / "d.bgsd")
        assert np.array_equal(back.data, ds.data)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.origins, ds.origins)
        assert back.patch_size == 8

    def test_header_layout(self, tmp_path):
        ds = self._dataset()
        save_dataset(ds, tmp_path / "d.bgsd")
        raw = (tmp_path / "d.bgsd").read_bytes()
        assert raw[:4] == b"BGSD"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 8
        assert int.from_bytes(raw[12:16], "little") == len(ds)
        record = 1 + 12 + 2 * 8 * 8 * 4
        assert len(raw) == 16 + record * len(ds)

    def test_truncated_and_foreign_files_rejected(self, tmp_path):
        ds = self._dataset()
        save_dataset(ds, tmp_path / "d.bgsd")
        raw = (tmp_path / "d.bgsd").read_bytes()
        (tmp_path / "trunc.bgsd").write_bytes(raw[:-10])
        with pytest.raises(DatasetError, match="bytes"):
            load_dataset(tmp_path / "trunc.bgsd")
        (tmp_path / "other.bgsd").write_bytes(b"nope" + raw[4:])
        with pytest.raises(DatasetError, match="magic"):
            load_dataset(tmp_path / "other.bgsd")
        (tmp_path / "vers.bgsd").write_bytes(raw[:4] + b"\x09\x00\x00\x00" + raw[8:])
        with pytest.raises(DatasetError, match="version"):
            load_dataset(tmp_path / "vers.bgsd")
