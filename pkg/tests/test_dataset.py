import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacsim.dataset import (FORMAT_VERSION, MAGIC, ExperimentRecord, FrameBlob, ImageBlob,
                             metrics_to_csv, parse_record, read_record, write_record)
from isacsim.errors import ChecksumMismatch, RecordIOError, VersionUnsupported
from isacsim.sensing import RadarImage


def make_record(seed=0):
    rng = np.random.default_rng(seed)
    H = (rng.standard_normal((2, 8, 4)) + 1j * rng.standard_normal((2, 8, 4))).astype(np.complex64)
    im = RadarImage(rng.exponential(size=(3, 5)), np.arange(3.0), np.linspace(-1, 1, 5),
                    "azimuth", "music")
    labels = [{"object_id": "agv", "range": 28.0, "azimuth": 0.87, "radial_speed": -1.0}]
    return ExperimentRecord({"software": "isacsim", "config": {"name": "t"}},
                            [FrameBlob("frame_0000", 0, H, labels)],
                            [ImageBlob("frame_0000_none_music", im)],
                            [{"frame": 0, "method": "none", "detected": 1, "sinr": 0.5}])


def test_round_trip(tmp_path):
    rec = make_record()
    write_record(rec, tmp_path / "r.isr")
    back = read_record(tmp_path / "r.isr")
    assert back == rec
    assert np.array_equal(back.frames[0].data, rec.frames[0].data)
    assert np.array_equal(back.images[0].image.values, rec.images[0].image.values)
    assert back.frames[0].ground_truth == rec.frames[0].ground_truth
    assert back.metrics == rec.metrics
    assert back.manifest == rec.manifest


def test_serialization_deterministic():
    assert make_record(3).to_bytes() == make_record(3).to_bytes()
    assert make_record(3).to_bytes() != make_record(4).to_bytes()


def test_header_layout():
    buf = make_record().to_bytes()
    assert buf[:8] == MAGIC
    assert struct.unpack("<I", buf[8:12])[0] == FORMAT_VERSION


@settings(max_examples=40, deadline=None)
@given(pos=st.integers(12, 10_000), flip=st.integers(1, 255))
def test_corruption_detected(pos, flip):
    buf = bytearray(make_record().to_bytes())
    pos = min(pos, len(buf) - 1)
    buf[pos] ^= flip
    with pytest.raises((ChecksumMismatch, RecordIOError)):
        parse_record(bytes(buf))


@pytest.mark.parametrize("cut", [4, 11, 20, 100, -1])
def test_truncation_detected(cut):
    buf = make_record().to_bytes()
    with pytest.raises(RecordIOError):
        parse_record(buf[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(RecordIOError):
        parse_record(make_record().to_bytes() + b"\x00")


def test_future_version_rejected():
    buf = bytearray(make_record().to_bytes())
    buf[8:12] = struct.pack("<I", FORMAT_VERSION + 1)
    with pytest.raises(VersionUnsupported):
        parse_record(bytes(buf))


def test_bad_magic_and_missing_file(tmp_path):
    with pytest.raises(RecordIOError):
        parse_record(b"NOTAREC\x00" + bytes(20))
    with pytest.raises(RecordIOError):
        read_record(tmp_path / "missing.isr")


def test_atomic_write_leaves_no_temp(tmp_path):
    write_record(make_record(), tmp_path / "a" / "r.isr")
    assert [p.name for p in (tmp_path / "a").iterdir()] == ["r.isr"]


def test_metrics_csv():
    buf = io.StringIO()
    metrics_to_csv([{"a": 1, "b": 0.1}, {"a": 2, "b": "inf"}], buf)
    assert buf.getvalue() == "a,b\n1,0.1\n2,inf\n"
