import numpy as np
import pytest

from bgsnetd import depth_io
from bgsnetd.depth_io import (
    DatasetLayoutError,
    GtLabel,
    PgmError,
    VideoSequence,
    load_depth_frame,
    load_groundtruth,
    load_mask,
    load_sequence,
    save_depth_frame,
    save_groundtruth,
    save_mask,
    save_sequence,
)


def test_load_depth_frame_decodes_big_endian_16bit(tmp_path):
    path = tmp_path / "f.pgm"
    values = np.array([[0, 500], [1200, 65535]], dtype=">u2")
    path.write_bytes(b"P5\n2 2\n65535\n" + values.tobytes())
    frame = load_depth_frame(path)
    assert frame.dtype == np.uint16
    assert frame.tolist() == [[0, 500], [1200, 65535]]


def test_depth_frame_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    frame = rng.integers(0, 65536, size=(17, 23), dtype=np.uint16)
    save_depth_frame(frame, tmp_path / "f.pgm")
    assert np.array_equal(load_depth_frame(tmp_path / "f.pgm"), frame)


def test_all_zero_frame_roundtrip(tmp_path):
    frame = np.zeros((4, 5), dtype=np.uint16)
    save_depth_frame(frame, tmp_path / "z.pgm")
    assert np.array_equal(load_depth_frame(tmp_path / "z.pgm"), frame)


def test_minimal_1x1_frame(tmp_path):
    save_depth_frame(np.zeros((1, 1), dtype=np.uint16), tmp_path / "one.pgm")
    data = (tmp_path / "one.pgm").read_bytes()
    assert data.startswith(b"P5") and b"1 1" in data and b"65535" in data
    assert len(data) == len(b"P5\n1 1\n65535\n") + 2


def test_depth_rejects_8bit_maxval(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P5\n2 1\n255\n\x00\x01")
    with pytest.raises(PgmError, match="unsupported maxval"):
        load_depth_frame(path)


def test_malformed_header_and_truncation_are_distinct(tmp_path):
    bad_header = tmp_path / "h.pgm"
    bad_header.write_bytes(b"P5\nnot numbers\n")
    with pytest.raises(PgmError, match="malformed header"):
        load_depth_frame(bad_header)

    truncated = tmp_path / "t.pgm"
    truncated.write_bytes(b"P5\n4 4\n65535\n\x00\x01")
    with pytest.raises(PgmError, match="truncated"):
        load_depth_frame(truncated)

    not_pgm = tmp_path / "n.pgm"
    not_pgm.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(PgmError, match="P5"):
        load_depth_frame(not_pgm)


def test_header_comments_are_skipped(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 1\n# another\n65535\n" + b"\x00\x05\x00\x06")
    assert load_depth_frame(path).tolist() == [[5, 6]]


@pytest.mark.parametrize(
    "code,label",
    [(0, GtLabel.BACKGROUND), (50, GtLabel.SHADOW), (85, GtLabel.OUTSIDE_ROI),
     (170, GtLabel.UNKNOWN), (255, GtLabel.FOREGROUND)],
)
def test_groundtruth_code_table(tmp_path, code, label):
    path = tmp_path / "gt.pgm"
    path.write_bytes(b"P5\n1 1\n255\n" + bytes([code]))
    assert load_groundtruth(path)[0, 0] == int(label)


def test_groundtruth_codes_are_a_bijection(tmp_path):
    codes = np.array([[0, 50, 85], [170, 255, 0]], dtype=np.uint8)
    path = tmp_path / "gt.pgm"
    path.write_bytes(b"P5\n3 2\n255\n" + codes.tobytes())
    labels = load_groundtruth(path)
    save_groundtruth(labels, tmp_path / "back.pgm")
    again = (tmp_path / "back.pgm").read_bytes()
    assert again.endswith(codes.tobytes())


def test_groundtruth_unknown_code_reports_position(tmp_path):
    pixels = np.array([[0, 0], [0, 7]], dtype=np.uint8)
    path = tmp_path / "gt.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + pixels.tobytes())
    with pytest.raises(PgmError, match=r"code 7 at pixel \(1, 1\)"):
        load_groundtruth(path)


def test_mask_roundtrip_and_encoding(tmp_path):
    mask = np.array([[True, False], [False, True]])
    save_mask(mask, tmp_path / "m.pgm")
    raw = (tmp_path / "m.pgm").read_bytes()
    assert raw.endswith(bytes([255, 0, 0, 255]))
    assert np.array_equal(load_mask(tmp_path / "m.pgm"), mask)

    save_mask(np.zeros((2, 2), dtype=bool), tmp_path / "bg.pgm")
    assert (tmp_path / "bg.pgm").read_bytes().endswith(b"\x00" * 4)
    save_mask(np.ones((2, 2), dtype=bool), tmp_path / "fg.pgm")
    assert (tmp_path / "fg.pgm").read_bytes().endswith(b"\xff" * 4)


def _write_frames(directory, frames):
    for k, frame in enumerate(frames):
        save_depth_frame(frame, directory / "depth" / f"{k:06d}.pgm")


def test_load_sequence_orders_and_stacks(tmp_path):
    frames = [np.full((3, 4), 100 * (k + 1), dtype=np.uint16) for k in range(3)]
    _write_frames(tmp_path, frames)
    seq = load_sequence(tmp_path)
    assert len(seq) == 3
    assert seq.width == 4 and seq.height == 3
    assert seq.gt is None and seq.roi is None
    assert [int(f[0, 0]) for f in seq.frames] == [100, 200, 300]


def test_sequence_roundtrip_with_gt_and_roi(tmp_path):
    frames = np.stack([np.full((2, 2), 7, dtype=np.uint16)] * 2)
    gt = np.full((2, 2, 2), int(GtLabel.FOREGROUND), dtype=np.uint8)
    roi = np.array([[True, False], [True, True]])
    save_sequence(VideoSequence("seq", frames, gt, roi), tmp_path)
    seq = load_sequence(tmp_path)
    assert np.array_equal(seq.frames, frames)
    assert np.array_equal(seq.gt, gt)
    assert np.array_equal(seq.roi, roi)


def test_sequence_dimension_mismatch(tmp_path):
    save_depth_frame(np.zeros((2, 2), dtype=np.uint16), tmp_path / "depth" / "000000.pgm")
    save_depth_frame(np.zeros((3, 3), dtype=np.uint16), tmp_path / "depth" / "000001.pgm")
    with pytest.raises(DatasetLayoutError, match="does not match"):
        load_sequence(tmp_path)


def test_sequence_gt_count_mismatch(tmp_path):
    frames = [np.zeros((2, 2), dtype=np.uint16)] * 3
    _write_frames(tmp_path, frames)
    for k in range(2):
        save_groundtruth(np.zeros((2, 2), dtype=np.uint8), tmp_path / "gt" / f"{k:06d}.pgm")
    with pytest.raises(DatasetLayoutError, match="ground-truth frames for 3 depth frames"):
        load_sequence(tmp_path)


def test_sequence_empty_directory(tmp_path):
    (tmp_path / "depth").mkdir()
    with pytest.raises(DatasetLayoutError, match="no depth frames"):
        load_sequence(tmp_path)
    with pytest.raises(DatasetLayoutError, match="missing depth/"):
        load_sequence(tmp_path / "nowhere")
