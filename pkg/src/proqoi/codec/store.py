"""On-disk segment store.

Layout::

    <dir>/manifest.json
    <dir>/<var>/seg_<id>.bin     raw segment payloads
    <dir>/<var>/mask.bin         packed outlier bitmap (little-endian, LSB first)

The manifest records, per variable, the codec, sizes, value extremes, the
initial reconstruction, every segment's byte length, nominal bound and a
64-bit BLAKE2b checksum, and the codec metadata as base64-encoded JSON.
"""
from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
from pathlib import Path
from typing import Mapping, Sequence

from .bitpack import pack_bits, unpack_bits
from .core import OutlierMask, Segment, SegmentInfo, VariableRecord

__all__ = [
    "StoreError",
    "CorruptStoreError",
    "NotAStoreError",
    "checksum",
    "write_store",
    "read_manifest",
    "read_mask",
    "verify_store",
    "SegmentStore",
    "MemoryStore",
    "FORMAT_VERSION",
]

FORMAT = "proqoi-store"
FORMAT_VERSION = 1
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")


class StoreError(OSError):
    pass


class NotAStoreError(StoreError):
    pass


class CorruptStoreError(StoreError):
    pass


def checksum(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def _encode_meta(meta: dict) -> str:
    return base64.b64encode(json.dumps(meta, sort_keys=True).encode()).decode("ascii")


def _decode_meta(blob: str) -> dict:
    return json.loads(base64.b64decode(blob.encode("ascii")))


def _record_json(rec: VariableRecord) -> dict:
    return {
        "name": rec.name,
        "codec": rec.codec,
        "n": rec.n,
        "dims": list(rec.dims),
        "vmin": rec.vmin,
        "vmax": rec.vmax,
        "init_value": rec.init_value,
        "init_bound": rec.init_bound,
        "mask_constant": rec.mask_constant,
        "masked_count": rec.masked_count,
        "segments": [
            {"id": s.id, "bytes": s.bytes, "nominal_bound": s.nominal_bound, "checksum": s.checksum}
            for s in rec.segments
        ],
        "meta": _encode_meta(rec.meta),
    }


def _record_from_json(doc: dict) -> VariableRecord:
    segs = [SegmentInfo(int(s["id"]), int(s["bytes"]), float(s["nominal_bound"]), str(s["checksum"]))
            for s in doc["segments"]]
    return VariableRecord(
        name=doc["name"], codec=doc["codec"], n=int(doc["n"]), dims=tuple(doc["dims"]),
        vmin=doc["vmin"], vmax=doc["vmax"], init_value=float(doc["init_value"]),
        init_bound=float(doc["init_bound"]), segments=segs, meta=_decode_meta(doc["meta"]),
        mask_constant=float(doc["mask_constant"]), masked_count=int(doc["masked_count"]),
    )


def write_store(directory, records: Sequence[VariableRecord],
                segments: Mapping[str, Sequence[Segment]],
                masks: Mapping[str, OutlierMask] | None = None) -> Path:
    """Write payloads, masks and the manifest.  Segment checksums are filled
    into the records as a side effect."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    masks = masks or {}
    seen = set()
    for rec in records:
        if not _NAME.match(rec.name) or rec.name in seen:
            raise StoreError(f"bad or duplicate variable name {rec.name!r}")
        seen.add(rec.name)
        vdir = root / rec.name
        vdir.mkdir(exist_ok=True)
        segs = list(segments.get(rec.name, ()))
        if len(segs) != len(rec.segments):
            raise StoreError(f"{rec.name!r}: record lists {len(rec.segments)} segments, got {len(segs)}")
        infos = []
        for info, seg in zip(rec.segments, segs):
            (vdir / f"seg_{seg.id}.bin").write_bytes(seg.payload)
            infos.append(SegmentInfo(seg.id, len(seg.payload), seg.nominal_bound, checksum(seg.payload)))
        rec.segments = infos
        if rec.has_mask:
            mask = masks.get(rec.name)
            if mask is None or mask.count != rec.masked_count:
                raise StoreError(f"{rec.name!r} needs its {rec.masked_count}-point mask")
            (vdir / "mask.bin").write_bytes(pack_bits(mask.bits))
    doc = {"format": FORMAT, "version": FORMAT_VERSION,
           "variables": [_record_json(r) for r in records]}
    tmp = root / "manifest.json.tmp"
    tmp.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    os.replace(tmp, root / "manifest.json")
    return root


def read_manifest(directory, check_files: bool = True) -> dict[str, VariableRecord]:
    """Parse and validate the manifest.

    Checks format, strictly decreasing bounds and, with ``check_files``, that
    every payload file exists with the recorded size.
    """
    root = Path(directory)
    path = root / "manifest.json"
    if not path.is_file():
        raise NotAStoreError(f"{root} is not a store (no manifest.json)")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptStoreError(f"{path}: unreadable manifest ({exc})") from None
    if doc.get("format") != FORMAT:
        raise NotAStoreError(f"{path}: not a {FORMAT} manifest")
    if doc.get("version") != FORMAT_VERSION:
        raise CorruptStoreError(f"{path}: unsupported version {doc.get('version')!r}")
    records = {}
    try:
        for entry in doc["variables"]:
            rec = _record_from_json(entry)
            records[rec.name] = rec
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptStoreError(f"{path}: malformed record ({exc})") from None
    for rec in records.values():
        bounds = [s.nominal_bound for s in rec.segments]
        if any(b1 <= b2 for b1, b2 in zip(bounds, bounds[1:])) or any(b < 0 for b in bounds):
            raise CorruptStoreError(f"{path}: bounds of {rec.name!r} are not strictly decreasing")
        if [s.id for s in rec.segments] != list(range(len(rec.segments))):
            raise CorruptStoreError(f"{path}: segment ids of {rec.name!r} are not 0..n-1")
        if not check_files:
            continue
        for s in rec.segments:
            seg_path = root / rec.name / f"seg_{s.id}.bin"
            if not seg_path.is_file():
                raise CorruptStoreError(f"missing segment file {seg_path}")
            size = seg_path.stat().st_size
            if size != s.bytes:
                raise CorruptStoreError(f"{seg_path}: {size} bytes, manifest says {s.bytes}")
        if rec.has_mask:
            mask_path = root / rec.name / "mask.bin"
            if not mask_path.is_file() or mask_path.stat().st_size != (rec.n + 7) // 8:
                raise CorruptStoreError(f"{mask_path}: missing or wrong size")
    return records


def read_mask(directory, record: VariableRecord) -> OutlierMask | None:
    if not record.has_mask:
        return None
    path = Path(directory) / record.name / "mask.bin"
    bits = unpack_bits(path.read_bytes(), record.n)
    mask = OutlierMask(bits, record.mask_constant)
    if mask.count != record.masked_count:
        raise CorruptStoreError(f"{path}: {mask.count} bits set, manifest says {record.masked_count}")
    return mask


def verify_store(directory) -> None:
    """Re-read every payload and compare checksums."""
    root = Path(directory)
    for rec in read_manifest(root).values():
        for s in rec.segments:
            path = root / rec.name / f"seg_{s.id}.bin"
            if checksum(path.read_bytes()) != s.checksum:
                raise CorruptStoreError(f"{path}: checksum mismatch")
        read_mask(root, rec)


class SegmentStore:
    """Read-only handle with checksum verification and byte accounting."""

    def __init__(self, directory):
        self.root = Path(directory)
        self.records = read_manifest(self.root)
        self.bytes_read = 0
        self._lock = threading.Lock()

    def record(self, name: str) -> VariableRecord:
        try:
            return self.records[name]
        except KeyError:
            raise StoreError(f"store {self.root} has no variable {name!r}") from None

    def mask(self, name: str) -> OutlierMask | None:
        return read_mask(self.root, self.record(name))

    def read_segment(self, name: str, seg_id: int) -> bytes:
        rec = self.record(name)
        if not 0 <= seg_id < len(rec.segments):
            raise StoreError(f"{name!r} has no segment {seg_id}")
        info = rec.segments[seg_id]
        path = self.root / name / f"seg_{seg_id}.bin"
        data = path.read_bytes()
        if len(data) != info.bytes:
            raise CorruptStoreError(f"{path}: {len(data)} bytes, manifest says {info.bytes}")
        if checksum(data) != info.checksum:
            raise CorruptStoreError(f"{path}: checksum mismatch")
        with self._lock:
            self.bytes_read += len(data)
        return data

    @property
    def names(self) -> list[str]:
        return list(self.records)

    @property
    def original_bytes(self) -> int:
        return sum(8 * r.n for r in self.records.values())


class MemoryStore:
    """In-memory stand-in for :class:`SegmentStore` (tests and sweeps)."""

    def __init__(self, records: Sequence[VariableRecord], segments: Mapping[str, Sequence[Segment]],
                 masks: Mapping[str, OutlierMask] | None = None):
        self.records = {r.name: r for r in records}
        self._payloads = {name: [s.payload for s in segs] for name, segs in segments.items()}
        self._masks = dict(masks or {})
        self.bytes_read = 0

    def record(self, name):
        try:
            return self.records[name]
        except KeyError:
            raise StoreError(f"store has no variable {name!r}") from None

    def mask(self, name):
        return self._masks.get(name) if self.record(name).has_mask else None

    def read_segment(self, name, seg_id):
        data = self._payloads[name][seg_id]
        self.bytes_read += len(data)
        return data

    @property
    def names(self):
        return list(self.records)

    @property
    def original_bytes(self):
        return sum(8 * r.n for r in self.records.values())

