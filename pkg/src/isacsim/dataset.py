"""Self-describing experiment container.

Byte layout (all integers little-endian)::

    magic    8 bytes  b"ISACREC\\0"
    version  u32      FORMAT_VERSION
    manifest u64 length, UTF-8 canonical JSON, u32 CRC32 of the JSON
    block*   u64 length, payload, u32 CRC32 of the payload

The manifest lists every block in order with its kind, dtype, shape and
SHA-256. Frame blocks are complex64 ``[antenna, subcarrier, symbol]``;
image blocks are float64 values followed by the range and second axes;
the metrics block is canonical JSON. See ``docs/formats.md``.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChecksumMismatch, RecordIOError, VersionUnsupported
from .sensing import RadarImage

MAGIC = b"ISACREC\x00"
FORMAT_VERSION = 1


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dataclass
class FrameBlob:
    name: str
    frame_index: int
    data: np.ndarray  # complex64 [antenna, subcarrier, symbol]
    ground_truth: list = field(default_factory=list)  # list of dicts

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype="<c8")


@dataclass
class ImageBlob:
    name: str
    image: RadarImage


@dataclass
class ExperimentRecord:
    manifest: dict
    frames: list = field(default_factory=list)
    images: list = field(default_factory=list)
    metrics: list = field(default_factory=list)  # list of row dicts

    def to_bytes(self):
        return _serialize(self)

    def __eq__(self, other):
        if not isinstance(other, ExperimentRecord):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()


def _frame_payload(fb):
    return fb.data.astype("<c8").tobytes()


def _image_payload(ib):
    im = ib.image
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                    for a in (im.values, im.range_axis, im.second_axis))


def _serialize(record):
    payloads, entries = [], []
    for fb in record.frames:
        p = _frame_payload(fb)
        payloads.append(p)
        entries.append({"kind": "frame", "name": fb.name, "frame_index": int(fb.frame_index),
                        "dtype": "complex64", "shape": list(fb.data.shape),
                        "ground_truth": fb.ground_truth,
                        "sha256": hashlib.sha256(p).hexdigest()})
    for ib in record.images:
        p = _image_payload(ib)
        payloads.append(p)
        im = ib.image
        entries.append({"kind": "image", "name": ib.name, "dtype": "float64",
                        "shape": list(im.values.shape), "second_kind": im.second_kind,
                        "source": im.source, "sha256": hashlib.sha256(p).hexdigest()})
    p = canonical_json(record.metrics).encode()
    payloads.append(p)
    entries.append({"kind": "metrics", "name": "metrics", "dtype": "json",
                    "sha256": hashlib.sha256(p).hexdigest()})
    manifest = dict(record.manifest)
    manifest["blocks"] = entries
    mbytes = canonical_json(manifest).encode()
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION),
           struct.pack("<Q", len(mbytes)), mbytes, struct.pack("<I", zlib.crc32(mbytes))]
    for p in payloads:
        out += [struct.pack("<Q", len(p)), p, struct.pack("<I", zlib.crc32(p))]
    return b"".join(out)


def write_record(record, path):
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    blob = record.to_bytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as fp:
                fp.write(blob)
                fp.flush()
                os.fsync(fp.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise RecordIOError(f"cannot write {path}: {exc}") from exc


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if n < 0 or self.pos + n > len(self.buf):
            raise RecordIOError("record truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def block(self):
        (n,) = struct.unpack("<Q", self.take(8))
        payload = self.take(n)
        (crc,) = struct.unpack("<I", self.take(4))
        if zlib.crc32(payload) != crc:
            raise ChecksumMismatch("block CRC32 mismatch")
        return payload


def parse_record(buf):
    r = _Reader(buf)
    if r.take(8) != MAGIC:
        raise RecordIOError("not an isacsim record (bad magic)")
    (version,) = struct.unpack("<I", r.take(4))
    if version > FORMAT_VERSION or version < 1:
        raise VersionUnsupported(f"record version {version}, reader supports {FORMAT_VERSION}")
    try:
        manifest = json.loads(r.block().decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RecordIOError(f"bad manifest: {exc}") from exc
    frames, images, metrics = [], [], []
    for entry in manifest.get("blocks", []):
        payload = r.block()
        if hashlib.sha256(payload).hexdigest() != entry["sha256"]:
            raise ChecksumMismatch(f"sha256 mismatch in block {entry['name']}")
        kind = entry["kind"]
        if kind == "frame":
            data = np.frombuffer(payload, dtype="<c8").reshape(entry["shape"]).copy()
            frames.append(FrameBlob(entry["name"], entry["frame_index"], data,
                                    entry.get("ground_truth", [])))
        elif kind == "image":
            rows, cols = entry["shape"]
            arr = np.frombuffer(payload, dtype="<f8")
            if arr.size != rows * cols + rows + cols:
                raise RecordIOError(f"image block {entry['name']} has wrong size")
            values = arr[:rows * cols].reshape(rows, cols).copy()
            images.append(ImageBlob(entry["name"], RadarImage(
                values, arr[rows * cols:rows * cols + rows].copy(),
                arr[rows * cols + rows:].copy(), entry["second_kind"], entry["source"])))
        elif kind == "metrics":
            metrics = json.loads(payload.decode())
        else:
            raise RecordIOError(f"unknown block kind {kind!r}")
    if r.pos != len(buf):
        raise RecordIOError("trailing bytes after the last block")
    manifest.pop("blocks", None)
    return ExperimentRecord(manifest, frames, images, metrics)


def read_record(path):
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise RecordIOError(f"cannot read {path}: {exc}") from exc
    return parse_record(buf)


def metrics_to_csv(rows, fp):
    if not rows:
        return
    cols = list(rows[0].keys())
    fp.write(",".join(cols) + "\n")
    for row in rows:
        fp.write(",".join(_csv_cell(row.get(c, "")) for c in cols) + "\n")


def _csv_cell(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)
