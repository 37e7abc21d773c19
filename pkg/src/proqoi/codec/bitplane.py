"""Hierarchical-basis decomposition plus per-level bitplane coding.

The 1-D transform keeps every ``2**L``-th value as the coarsest level and, at
each finer level, stores the residual of linear interpolation between the two
enclosing coarser nodes.  Each level is then written as fixed-point
magnitudes against a common exponent ``e`` (all ``|c| < 2**e``), one bitplane
at a time, most significant first.  Segment ``k`` carries plane ``k`` of
every level; the sign plane rides with plane 0.

After ``k + 1`` planes every coefficient of level ``l`` is within
``2**(e_l - k - 1)`` of its true value, and because interpolation weights are
convex the reconstruction error is at most the sum over levels.
"""
from __future__ import annotations

import math
import struct
import zlib

import numpy as np

from .bitpack import pack_bits, unpack_bits
from .core import CodecError, Segment, register_codec

__all__ = [
    "level_count",
    "level_indices",
    "hb_forward",
    "hb_inverse",
    "encode_bitplanes",
    "decode_bitplanes",
    "plane_bound",
    "BitplaneCodec",
    "PLANES",
]

PLANES = 52
_HEADER = struct.Struct("<IIII")
_FLAG_ZLIB = 1
_U = 2.0 ** -52


def level_count(n: int) -> int:
    """Refinement levels for ``n`` points: coarsest level keeps at most ~64 nodes."""
    if n <= 2:
        return 0
    return max(0, int(math.floor(math.log2(n - 1))) - 5)


def level_indices(n: int, levels: int) -> list[np.ndarray]:
    """Index set of each level; together they partition ``range(n)``."""
    out = [np.arange(0, n, 1 << levels)]
    for lev in range(1, levels + 1):
        h = 1 << (levels - lev)
        out.append(np.arange(h, n, 2 * h))
    return out


def _prediction(v, idx, h, n):
    a = idx - h
    b = idx + h
    has_b = b < n
    right = v[np.where(has_b, b, a)]
    return np.where(has_b, 0.5 * (v[a] + right), v[a])


def hb_forward(values, levels: int | None = None) -> list[np.ndarray]:
    """Per-level coefficients; level 0 holds raw values."""
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    levels = level_count(n) if levels is None else levels
    idx = level_indices(n, levels)
    coeffs = [v[idx[0]].copy()]
    for lev in range(1, levels + 1):
        h = 1 << (levels - lev)
        coeffs.append(v[idx[lev]] - _prediction(v, idx[lev], h, n))
    return coeffs


def hb_inverse(coeffs, n: int) -> np.ndarray:
    levels = len(coeffs) - 1
    idx = level_indices(n, levels)
    v = np.empty(n, dtype=np.float64)
    v[idx[0]] = coeffs[0]
    for lev in range(1, levels + 1):
        h = 1 << (levels - lev)
        v[idx[lev]] = coeffs[lev] + _prediction(v, idx[lev], h, n)
    return v


def _exponent(c: np.ndarray) -> int | None:
    """Smallest ``e`` with every ``|c| < 2**e``; None for an all-zero level."""
    peak = float(np.max(np.abs(c))) if c.size else 0.0
    if peak == 0.0:
        return None
    return math.frexp(peak)[1]


def plane_bound(exponents, planes_read: int, slack: float = 0.0) -> float:
    """Certified coefficient-sum bound after ``planes_read`` planes."""
    total = math.fsum(math.ldexp(1.0, e - planes_read) for e in exponents if e is not None)
    return (total + slack) * (1.0 + 4 * _U) if total + slack > 0 else 0.0


def encode_bitplanes(coeffs, planes: int = PLANES, compress: bool = False
                     ) -> tuple[list[bytes], list[int | None]]:
    """Bitplane payloads (one per plane) and the per-level exponents."""
    if not 1 <= planes <= 63:
        raise CodecError(f"plane count must be in [1, 63], got {planes}")
    exps = [_exponent(c) for c in coeffs]
    mags, signs = [], []
    for c, e in zip(coeffs, exps):
        if e is None:
            mags.append(None)
            signs.append(None)
            continue
        if not np.all(np.isfinite(c)):
            raise CodecError("coefficients must be finite")
        q = np.floor(np.ldexp(np.abs(c), planes - e)).astype(np.uint64)
        mags.append(q)
        signs.append(c < 0)
    payloads = []
    for k in range(planes):
        shift = np.uint64(planes - 1 - k)
        lengths, blocks = [], []
        for q, s in zip(mags, signs):
            if q is None:
                lengths.append(0)
                continue
            bits = ((q >> shift) & np.uint64(1)).astype(bool)
            if k == 0:
                bits = np.concatenate([s, bits])
            lengths.append(bits.size)
            blocks.append(pack_bits(bits))
        body = b"".join(blocks)
        flags = 0
        if compress:
            body, flags = zlib.compress(body, 6), _FLAG_ZLIB
        table = np.asarray(lengths, dtype="<u8").tobytes()
        payloads.append(_HEADER.pack(len(coeffs), k, _HEADER.size, flags) + table + body)
    return payloads, exps


class _PlaneAccumulator:
    """Decoder-side integer magnitudes and signs, filled plane by plane."""

    def __init__(self, sizes, exps, planes):
        self.sizes = list(sizes)
        self.exps = list(exps)
        self.planes = planes
        self.mags = [np.zeros(s, dtype=np.uint64) for s in sizes]
        self.neg = [np.zeros(s, dtype=bool) for s in sizes]
        self.read = 0

    def consume(self, k: int, payload: bytes):
        if k != self.read:
            raise CodecError(f"bitplane segments must be read in order: expected {self.read}, got {k}")
        if len(payload) < _HEADER.size:
            raise CodecError(f"bitplane segment {k} is truncated ({len(payload)} bytes)")
        nlev, plane, offset, flags = _HEADER.unpack_from(payload)
        if nlev != len(self.sizes) or plane != k:
            raise CodecError(f"bitplane segment {k} header mismatch (levels {nlev}, plane {plane})")
        table_end = offset + 8 * nlev
        if len(payload) < table_end:
            raise CodecError(f"bitplane segment {k} is truncated")
        lengths = np.frombuffer(payload, dtype="<u8", count=nlev, offset=offset)
        body = payload[table_end:]
        if flags & _FLAG_ZLIB:
            body = zlib.decompress(body)
        pos = 0
        shift = np.uint64(self.planes - 1 - k)
        for lev, (size, e) in enumerate(zip(self.sizes, self.exps)):
            want = 0 if e is None else size * (2 if k == 0 else 1)
            if int(lengths[lev]) != want:
                raise CodecError(f"bitplane segment {k} level {lev}: {int(lengths[lev])} bits, "
                                 f"expected {want}")
            if want == 0:
                continue
            nbytes = (want + 7) // 8
            if pos + nbytes > len(body):
                raise CodecError(f"bitplane segment {k} body is truncated")
            bits = unpack_bits(body[pos:pos + nbytes], want)
            pos += nbytes
            if k == 0:
                self.neg[lev] = bits[:size].copy()
                bits = bits[size:]
            self.mags[lev] |= bits.astype(np.uint64) << shift
        if pos != len(body):
            raise CodecError(f"bitplane segment {k} has {len(body) - pos} trailing bytes")
        self.read += 1

    def coefficients(self) -> list[np.ndarray]:
        out = []
        for q, neg, e in zip(self.mags, self.neg, self.exps):
            if e is None:
                out.append(np.zeros(q.size))
                continue
            c = np.ldexp(q.astype(np.float64), e - self.planes)
            out.append(np.where(neg, -c, c))
        return out


def decode_bitplanes(payloads, sizes, exps, planes: int = PLANES) -> list[np.ndarray]:
    """Coefficients from a contiguous prefix of plane payloads."""
    acc = _PlaneAccumulator(sizes, exps, planes)
    for k, payload in enumerate(payloads):
        acc.consume(k, payload)
    return acc.coefficients()


class BitplaneCodec:
    kind = "bitplane"
    prefix = True

    def encode(self, values, center, config):
        planes = int(config.get("planes", PLANES))
        compress = bool(config.get("zlib", False))
        centered = np.asarray(values, dtype=np.float64) - center
        n = centered.size
        levels = int(config.get("levels", level_count(n)))
        if not 0 <= levels <= 60:
            raise CodecError(f"level count must be in [0, 60], got {levels}")
        coeffs = hb_forward(centered, levels)
        payloads, exps = encode_bitplanes(coeffs, planes, compress)
        peak = float(np.max(np.abs(centered)))
        reach = peak + sum(math.ldexp(1.0, e) for e in exps if e is not None)
        # float rounding in centering, in the inverse transform and in adding the center back
        slack = _U * (8 * (levels + 2) * reach + 4 * (abs(center) + reach))
        bounds = [plane_bound(exps, k + 1, slack) for k in range(planes)]
        keep = 1
        while keep < planes and bounds[keep] < bounds[keep - 1]:
            keep += 1
        segments = [Segment(k, payloads[k], bounds[k]) for k in range(keep)]
        meta = {
            "levels": levels,
            "planes": planes,
            "exponents": exps,
            "sizes": [int(c.size) for c in coeffs],
            "slack": slack,
            "zlib": compress,
        }
        return segments, meta

    def decoder(self, meta, n, center):
        return _BitplaneDecoder(meta, n, center)


class _BitplaneDecoder:
    def __init__(self, meta, n, center):
        self.n = n
        self.center = center
        self.acc = _PlaneAccumulator(meta["sizes"], meta["exponents"], meta["planes"])

    def consume(self, seg_id, payload):
        self.acc.consume(seg_id, payload)

    def values(self):
        return hb_inverse(self.acc.coefficients(), self.n) + self.center


register_codec(BitplaneCodec())
