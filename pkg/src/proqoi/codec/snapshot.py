"""Snapshot ladders over a uniform scalar quantizer.

Two codecs share the ladder of absolute bounds ``eps_i = rel_i * range``:

* ``snapshot``: rung ``i`` is a standalone quantization of the data; a
  request reads exactly one rung.
* ``delta``: rung 1 quantizes the data, every later rung quantizes what the
  earlier rungs left over; a request reads a prefix.

Every rung is verified against the decoder's own arithmetic, so the stored
bound holds for the floating-point reconstruction and not only in exact
arithmetic.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .bitpack import pack_uint, packed_size, unpack_uint
from .core import CodecError, Segment, register_codec

__all__ = [
    "QuantizationError",
    "QuantizedBlock",
    "SnapshotLadder",
    "LadderExhausted",
    "quantize",
    "dequantize",
    "encode_block",
    "decode_block",
    "build_snapshots",
    "select_snapshot",
    "default_ladder",
    "parse_ladder",
    "SnapshotCodec",
    "DeltaCodec",
]

_HEADER = struct.Struct("<IdddBQ")
_MAX_WIDTH = 63
_SHRINK_TRIES = 40


class QuantizationError(CodecError):
    """The requested bound cannot be met (too fine for float64, or codes
    would need more than 63 bits)."""


@dataclass(frozen=True)
class QuantizedBlock:
    eps: float
    offset: float
    width: float
    bitwidth: int
    codes: np.ndarray

    @property
    def count(self) -> int:
        return int(self.codes.size)


def _codes(x, offset, width):
    with np.errstate(over="ignore", invalid="ignore"):
        q = np.rint((x - offset) / width)
    if not np.all(np.isfinite(q)) or (q.size and q.max() >= 2.0 ** _MAX_WIDTH):
        raise QuantizationError(f"bin width {width!r} needs codes wider than {_MAX_WIDTH} bits")
    return q.astype(np.uint64)


def dequantize(block: QuantizedBlock, base=None) -> np.ndarray:
    """``offset + code * width``, added onto ``base`` when given."""
    vals = block.offset + block.codes.astype(np.float64) * block.width
    return vals if base is None else base + vals


def quantize(values, eps: float, base=None) -> QuantizedBlock:
    """Quantize ``values - base`` so that ``dequantize(block, base)`` is within
    ``eps`` of ``values`` at every point.

    The bin width starts at ``2 * eps`` and shrinks only if float rounding
    pushes some point past ``eps``.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if not eps > 0 or not np.isfinite(eps):
        raise QuantizationError(f"quantization bound must be positive and finite, got {eps!r}")
    target = x if base is None else x - base
    offset = float(target.min()) if target.size else 0.0
    width = 2.0 * eps
    for _ in range(_SHRINK_TRIES):
        codes = _codes(target, offset, width)
        top = int(codes.max()) if codes.size else 0
        block = QuantizedBlock(float(eps), offset, width, top.bit_length(), codes)
        err = np.abs(dequantize(block, base) - x)
        if not err.size or err.max() <= eps:
            return block
        width *= 1.0 - 2.0 ** -8
    raise QuantizationError(f"cannot certify bound {eps!r}: float64 rounding of the data exceeds it")


def encode_block(block: QuantizedBlock, rung: int) -> bytes:
    header = _HEADER.pack(rung, block.eps, block.offset, block.width, block.bitwidth, block.count)
    return header + pack_uint(block.codes, block.bitwidth)


def decode_block(payload: bytes) -> tuple[int, QuantizedBlock]:
    if len(payload) < _HEADER.size:
        raise CodecError(f"snapshot segment is truncated ({len(payload)} bytes)")
    rung, eps, offset, width, bitwidth, count = _HEADER.unpack_from(payload)
    body = payload[_HEADER.size:]
    if len(body) != packed_size(count, bitwidth):
        raise CodecError(f"snapshot rung {rung}: body has {len(body)} bytes, expected "
                         f"{packed_size(count, bitwidth)}")
    codes = unpack_uint(body, count, bitwidth)
    return rung, QuantizedBlock(eps, offset, width, bitwidth, codes)


@dataclass(frozen=True)
class SnapshotLadder:
    """Relative bounds, strictly decreasing, plus the retrieval mode."""

    relative: tuple[float, ...]
    mode: str = "independent"

    def __post_init__(self):
        rel = tuple(float(r) for r in self.relative)
        object.__setattr__(self, "relative", rel)
        if not rel:
            raise CodecError("ladder needs at least one rung")
        if any(not r > 0 for r in rel) or any(a <= b for a, b in zip(rel, rel[1:])):
            raise CodecError(f"ladder must be positive and strictly decreasing, got {rel}")
        if self.mode not in ("independent", "delta"):
            raise CodecError(f"ladder mode must be 'independent' or 'delta', got {self.mode!r}")

    def absolute(self, value_range: float) -> list[float]:
        return [r * value_range for r in self.relative]


def default_ladder(mode: str = "independent", rungs: int = 10) -> SnapshotLadder:
    return SnapshotLadder(tuple(10.0 ** -i for i in range(1, rungs + 1)), mode)


def parse_ladder(text: str, mode: str) -> SnapshotLadder:
    """``"1e-1..1e-10"`` (decades) or a comma list ``"1e-1,5e-2,1e-3"``."""
    if ".." in text:
        lo, hi = (float(t) for t in text.split("..", 1))
        first, last = round(math.log10(lo)), round(math.log10(hi))
        exact = math.isclose(10.0 ** first, lo) and math.isclose(10.0 ** last, hi)
        if not exact or first <= last:
            raise CodecError(f"range ladder endpoints must be decreasing powers of ten, got {text!r}")
        return SnapshotLadder(tuple(10.0 ** i for i in range(first, last - 1, -1)), mode)
    return SnapshotLadder(tuple(float(t) for t in text.split(",")), mode)


def build_snapshots(values, ladder: SnapshotLadder, value_range: float
                    ) -> tuple[list[Segment], list[float]]:
    """Segments for every rung that can be certified.

    The ladder ends early at the first rung whose bound is too fine for the
    data's float64 resolution; the kept absolute bounds are returned.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    segments, kept = [], []
    recon = None
    for rung, eps in enumerate(ladder.absolute(value_range)):
        base = recon if ladder.mode == "delta" else None
        try:
            block = quantize(x, eps, base)
        except QuantizationError:
            break
        if ladder.mode == "delta":
            recon = dequantize(block, recon)
        segments.append(Segment(rung, encode_block(block, rung), eps))
        kept.append(eps)
    return segments, kept


class LadderExhausted(CodecError):
    """The request is tighter than the last rung."""


def select_snapshot(ladder: SnapshotLadder, target_eps: float, value_range: float = 1.0
                    ) -> list[int]:
    """Rungs to read (0-based) for ``target_eps``: the minimal ``i`` with
    ``eps_i <= target_eps``; the single rung in independent mode, the prefix
    through it in delta mode."""
    bounds = ladder.absolute(value_range)
    for i, eps in enumerate(bounds):
        if eps <= target_eps:
            return [i] if ladder.mode == "independent" else list(range(i + 1))
    raise LadderExhausted(f"target {target_eps!r} is below the last rung {bounds[-1]!r}")


class _SnapshotBase:
    prefix = True
    mode = "independent"

    def encode(self, values, center, config):
        rel = config.get("ladder")
        if rel is None:
            ladder = default_ladder(self.mode, int(config.get("rungs", 10)))
        elif isinstance(rel, str):
            ladder = parse_ladder(rel, self.mode)
        else:
            ladder = SnapshotLadder(tuple(rel), self.mode)
        x = np.asarray(values, dtype=np.float64)
        value_range = float(x.max() - x.min())
        segments, kept = build_snapshots(x, ladder, value_range)
        if not segments:
            raise QuantizationError("no ladder rung can be certified for this data")
        meta = {"mode": self.mode, "relative": list(ladder.relative[:len(kept)]),
                "value_range": value_range}
        return segments, meta

    def decoder(self, meta, n, center):
        return _SnapshotDecoder(n, self.mode)


class SnapshotCodec(_SnapshotBase):
    kind = "snapshot"
    prefix = False
    mode = "independent"


class DeltaCodec(_SnapshotBase):
    kind = "delta"
    prefix = True
    mode = "delta"


class _SnapshotDecoder:
    def __init__(self, n, mode):
        self.n = n
        self.mode = mode
        self.recon = None
        self.last = -1

    def consume(self, seg_id, payload):
        rung, block = decode_block(payload)
        if rung != seg_id or block.count != self.n:
            raise CodecError(f"snapshot segment {seg_id} holds rung {rung} with {block.count} codes, "
                             f"expected {self.n}")
        if self.mode == "delta":
            if seg_id != self.last + 1:
                raise CodecError(f"delta segments must be read in order: expected {self.last + 1}, "
                                 f"got {seg_id}")
            self.recon = dequantize(block, self.recon)
        else:
            self.recon = dequantize(block)
        self.last = seg_id

    def values(self):
        if self.recon is None:
            raise CodecError("no snapshot segment has been read")
        return self.recon


register_codec(SnapshotCodec())
register_codec(DeltaCodec())
