import struct

import numpy as np
import pytest
from scipy.io import wavfile

from seldaug.annotations import CLASS_NAMES, EventAnnotationList, EventRow
from seldaug.clip import MultichannelClip
from seldaug.dataset import (SegmentDescriptor, discover, emit_metadata, extract_segments,
                             format_metadata, load_segment, parse_metadata, parse_metadata_text,
                             read_inventory, read_wav, save_item, write_inventory, write_wav)
from seldaug.exceptions import ChannelCountMismatch, MalformedRow, OutOfRangeClass, UnsupportedFormat
from synth import make_dataset


def pcm24_wav(path, samples: np.ndarray, rate=24000):
    """RIFF/WAVE, 24-bit PCM, built byte by byte; ``samples`` is (frames, channels) int."""
    n_ch = samples.shape[1]
    body = b"".join(int(v).to_bytes(3, "little", signed=True) for v in samples.ravel())
    fmt = struct.pack("<HHIIHH", 1, n_ch, rate, rate * 3 * n_ch, 3 * n_ch, 24)
    riff = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(body)) + body
    path.write_bytes(b"RIFF" + struct.pack("<I", len(riff)) + riff)


# ---------------------------------------------------------------- WAV

def test_float32_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (8, 1000)).astype(np.float32).astype(np.float64)
    write_wav(MultichannelClip(x, 24000, "BOTH"), tmp_path / "a.wav")
    back = read_wav(tmp_path / "a.wav")
    assert back.fmt == "BOTH" and back.sample_rate == 24000
    np.testing.assert_array_equal(back.data, x)


def test_int16_quantisation(tmp_path):
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.9, 0.9, (4, 500))
    write_wav(MultichannelClip(x, 24000, "MIC"), tmp_path / "a.wav", subtype="int16")
    back = read_wav(tmp_path / "a.wav", "MIC")
    steps = back.data * 2 ** 15
    np.testing.assert_array_equal(steps, np.round(steps))
    assert np.max(np.abs(back.data - x)) <= 2 ** -16 + 1e-15


def test_hand_built_24_bit_file(tmp_path):
    vals = np.array([[0, 1, -1, 2 ** 23 - 1], [-(2 ** 23), 4096, -4096, 12345]])
    pcm24_wav(tmp_path / "a.wav", vals)
    clip = read_wav(tmp_path / "a.wav", "FOA")
    np.testing.assert_array_equal(clip.data.T, vals / 2 ** 23)


def test_channel_count_and_sample_type_errors(tmp_path):
    wavfile.write(tmp_path / "three.wav", 24000, np.zeros((10, 3), np.float32))
    with pytest.raises(ChannelCountMismatch):
        read_wav(tmp_path / "three.wav")
    wavfile.write(tmp_path / "u8.wav", 24000, np.zeros((10, 4), np.uint8))
    with pytest.raises(UnsupportedFormat):
        read_wav(tmp_path / "u8.wav")
    (tmp_path / "junk.wav").write_bytes(b"not a wav file at all")
    with pytest.raises(UnsupportedFormat):
        read_wav(tmp_path / "junk.wav")
    with pytest.raises(UnsupportedFormat):
        write_wav(MultichannelClip(np.zeros((4, 4)), 24000, "MIC"), tmp_path / "x.wav", "int24")


# ---------------------------------------------------------------- metadata

def test_parse_example_row():
    ann = parse_metadata_text("10,6,0,30,-20\n")
    (r,) = ann.rows
    assert r == EventRow(10, 6, 0, 30.0, -20.0)
    assert CLASS_NAMES[r.class_id] == "Female Speech"


def test_empty_and_blank_files(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    assert len(parse_metadata(p)) == 0
    assert len(parse_metadata_text("\n\n")) == 0


def test_out_of_range_class():
    with pytest.raises(OutOfRangeClass):
        parse_metadata_text("0,14,0,0,0\n")


@pytest.mark.parametrize("text,line", [("0,1,0,0\n", 1), ("0,1,0,0,0\n1,x,0,0,0\n", 2),
                                       ("0,1,0,nan,0\n", 1), ("0,1,0,0,0,7\n", 1)])
def test_malformed_rows_report_line(text, line):
    with pytest.raises(MalformedRow) as exc:
        parse_metadata_text(text)
    assert exc.value.line == line


def test_parse_emit_round_trip(tmp_path):
    text = "0,1,0,30,-20\n0,3,1,-45.5,10\n1,1,0,31,-20\n"
    ann = parse_metadata_text(text)
    assert format_metadata(ann) == text
    emit_metadata(ann, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_bytes() == text.encode()
    assert parse_metadata(tmp_path / "m.csv") == ann


# ---------------------------------------------------------------- segments

def solo(frames, c=2, t=0, az=40.0, el=0.0):
    return [EventRow(f, c, t, az, el) for f in frames]


def test_single_static_event_is_one_eligible_segment():
    segs = extract_segments(EventAnnotationList(tuple(solo(range(3, 15)))), "f")
    assert len(segs) == 1
    s = segs[0]
    assert (s.start, s.stop, s.class_id, s.eligible) == (3, 15, 2, True)
    assert (s.azimuth, s.elevation) == (40.0, 0.0)


def test_fully_co_active_events_give_no_eligible_segment():
    ann = EventAnnotationList(tuple(solo(range(10)) + solo(range(10), c=5, az=-90.0)))
    segs = extract_segments(ann)
    assert len(segs) == 2 and not any(s.eligible for s in segs)
    assert all(s.overlapping for s in segs)


def test_sweeping_event_is_not_static():
    rows = [EventRow(f, 1, 0, 40.0 * f / 9, 0.0) for f in range(10)]
    (s,) = extract_segments(EventAnnotationList(tuple(rows)))
    assert not s.static and not s.eligible
    assert s.spread == pytest.approx(40.0)


def test_partial_overlap_splits_runs():
    ann = EventAnnotationList(tuple(solo(range(0, 20)) + solo(range(8, 14), c=7, az=0.0)))
    segs = [(s.class_id, s.start, s.stop, s.overlapping) for s in extract_segments(ann)]
    assert segs == [(2, 0, 8, False), (2, 8, 14, True), (7, 8, 14, True), (2, 14, 20, False)]
    # every frame of an eligible run has exactly one active event
    by_frame = ann.by_frame()
    for s in extract_segments(ann):
        if s.eligible:
            assert all(len(by_frame[f]) == 1 for f in range(s.start, s.stop))


def test_short_runs_dropped_and_clip_bounds_respected():
    ann = EventAnnotationList(tuple(solo(range(4)) + solo(range(10, 30), c=3)))
    assert [s.class_id for s in extract_segments(ann)] == [3]
    clip = MultichannelClip(np.zeros((8, 20 * 2400)), 24000, "BOTH")
    (s,) = extract_segments(ann, clip=clip)
    assert s.stop == 20


def test_inventory_round_trip(tmp_path):
    segs = [SegmentDescriptor("a", 0, 10, 1, 0, 12.5, -3.0, True, False),
            SegmentDescriptor("b", 5, 9, 4, 1, -170.0, 20.0, False, True, 7.25)]
    write_inventory(segs, tmp_path / "inv.jsonl")
    lines = (tmp_path / "inv.jsonl").read_text().splitlines()
    assert len(lines) == 2 and lines[0].startswith('{"azimuth": 12.5')
    assert read_inventory(tmp_path / "inv.jsonl") == segs


# ---------------------------------------------------------------- directories

def test_dataset_layout_and_segment_loading(tmp_path):
    make_dataset(tmp_path, n_items=2, n_frames=30)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["foa", "metadata", "mic"]
    items = discover(tmp_path)
    assert [i.stem for i in items] == ["item00", "item01"]
    clip, ann = items[0].load()
    assert clip.fmt == "BOTH" and clip.n_samples == 30 * 2400
    segs = extract_segments(ann, items[0].stem, clip=clip)
    assert [(s.start, s.stop) for s in segs] == [(0, 12), (15, 27)]
    seg_clip, seg_ann = load_segment(items[0], segs[1])
    assert seg_clip.n_samples == 12 * 2400 and seg_ann.n_frames == 12
    np.testing.assert_array_equal(seg_clip.data, clip.data[:, 15 * 2400:27 * 2400])


def test_save_item_variants(tmp_path):
    mic = MultichannelClip(np.zeros((4, 100)), 24000, "MIC")
    paths = save_item(tmp_path, "m", mic, None)
    assert [p.relative_to(tmp_path).as_posix() for p in paths] == ["mic/m.wav"]
    with pytest.raises(UnsupportedFormat):
        save_item(tmp_path, "r", MultichannelClip(np.zeros((2, 10))), None)
    (item,) = discover(tmp_path)
    clip, ann = item.load()
    assert clip.fmt == "MIC" and len(ann) == 0
