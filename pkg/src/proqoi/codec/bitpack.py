"""Little-endian, LSB-first bit packing."""
from __future__ import annotations

import numpy as np

__all__ = ["pack_bits", "unpack_bits", "pack_uint", "unpack_uint", "packed_size"]

_CHUNK = 1 << 16


def packed_size(count: int, width: int) -> int:
    return (count * width + 7) // 8


def pack_bits(bits) -> bytes:
    """Pack a boolean/0-1 array, first element in bit 0 of byte 0."""
    return np.packbits(np.asarray(bits, dtype=bool), bitorder="little").tobytes()


def unpack_bits(data, count: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    if raw.size * 8 < count:
        raise ValueError(f"need {packed_size(count, 1)} bytes for {count} bits, got {raw.size}")
    return np.unpackbits(raw, count=count, bitorder="little").astype(bool)


def pack_uint(codes, width: int) -> bytes:
    """Pack unsigned integers ``< 2**width`` as a contiguous bit stream.

    Code ``i`` occupies stream bits ``[i*width, (i+1)*width)``, least
    significant bit first.
    """
    if not 0 <= width <= 64:
        raise ValueError(f"bit width must be in [0, 64], got {width}")
    codes = np.asarray(codes, dtype=np.uint64).ravel()
    if width == 0 or codes.size == 0:
        return b""
    if width < 64 and np.any(codes >> np.uint64(width)):
        raise ValueError(f"code does not fit in {width} bits")
    shifts = np.arange(width, dtype=np.uint64)
    # chunks are a multiple of 8 codes, so every chunk ends on a byte boundary
    parts = []
    for start in range(0, codes.size, _CHUNK):
        block = codes[start:start + _CHUNK]
        bits = ((block[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
        parts.append(np.packbits(bits.ravel(), bitorder="little"))
    return np.concatenate(parts).tobytes()


def unpack_uint(data, count: int, width: int) -> np.ndarray:
    if not 0 <= width <= 64:
        raise ValueError(f"bit width must be in [0, 64], got {width}")
    if width == 0 or count == 0:
        return np.zeros(count, dtype=np.uint64)
    raw = np.frombuffer(data, dtype=np.uint8)
    need = packed_size(count, width)
    if raw.size < need:
        raise ValueError(f"need {need} bytes for {count} codes of {width} bits, got {raw.size}")
    weights = np.uint64(1) << np.arange(width, dtype=np.uint64)
    out = np.empty(count, dtype=np.uint64)
    for start in range(0, count, _CHUNK):
        stop = min(count, start + _CHUNK)
        lo, hi = start * width // 8, (stop * width + 7) // 8
        bits = np.unpackbits(raw[lo:hi], count=(stop - start) * width, bitorder="little")
        bits = bits.reshape(stop - start, width).astype(np.uint64)
        out[start:stop] = (bits * weights).sum(axis=1, dtype=np.uint64)
    return out
