"""The progressive codec contract shared by every codec.

A variable is refactored into an ordered list of segments.  Each segment
carries a nominal bound: the L-infinity error guaranteed once that segment has
been applied.  For *prefix* codecs (bitplane, delta) segment ``j`` is applied
on top of segments ``0..j-1``; for the independent snapshot codec each
segment is a standalone reconstruction and only the selected one is read.

Points covered by an :class:`OutlierMask` are removed before encoding and are
restored to the mask constant on reconstruction, so their error is always 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from ..bounds import guard_factor

__all__ = [
    "VariableData",
    "Segment",
    "SegmentInfo",
    "VariableRecord",
    "OutlierMask",
    "RetrievalState",
    "Codec",
    "Decoder",
    "CodecError",
    "register_codec",
    "get_codec",
    "codec_kinds",
    "build_mask",
    "refactor_variable",
    "plan",
    "reconstruct",
    "new_state",
]


class CodecError(ValueError):
    """Invalid codec input or configuration."""


@dataclass
class VariableData:
    """One linearized field."""

    name: str
    values: np.ndarray
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if not self.dims:
            self.dims = tuple(arr.shape) or (1,)
        arr = np.ascontiguousarray(arr.ravel())
        if arr.size < 1:
            raise CodecError(f"variable {self.name!r} is empty")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise CodecError(f"variable {self.name!r} has a non-finite value at index {bad}")
        self.values = arr

    @property
    def n(self) -> int:
        return int(self.values.size)

    def value_range(self, mask: "OutlierMask | None" = None) -> float:
        vals = self.values if mask is None else self.values[~mask.bits]
        return float(vals.max() - vals.min()) if vals.size else 0.0


@dataclass(frozen=True)
class Segment:
    id: int
    payload: bytes
    nominal_bound: float


@dataclass(frozen=True)
class SegmentInfo:
    id: int
    bytes: int
    nominal_bound: float
    checksum: str


@dataclass
class VariableRecord:
    """Manifest entry for one variable."""

    name: str
    codec: str
    n: int
    dims: tuple[int, ...]
    vmin: float | None
    vmax: float | None
    init_value: float
    init_bound: float
    segments: list[SegmentInfo]
    meta: dict
    mask_constant: float = 0.0
    masked_count: int = 0

    @property
    def has_mask(self) -> bool:
        return self.masked_count > 0

    @property
    def value_range(self) -> float:
        return 0.0 if self.vmin is None else self.vmax - self.vmin

    @property
    def floor(self) -> float:
        """Smallest bound the store can deliver (the lossless threshold)."""
        return self.segments[-1].nominal_bound if self.segments else 0.0

    @property
    def total_bytes(self) -> int:
        return sum(s.bytes for s in self.segments)


@dataclass
class OutlierMask:
    """Points stored exactly as ``constant`` and excluded from refactoring."""

    bits: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        self.bits = np.ascontiguousarray(np.asarray(self.bits, dtype=bool).ravel())

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def empty(cls, n: int, constant: float = 0.0) -> "OutlierMask":
        return cls(np.zeros(n, dtype=bool), constant)


def _all_zero(stack: np.ndarray) -> np.ndarray:
    return np.all(stack == 0, axis=0)


def build_mask(variables: Sequence[VariableData],
               predicate: Callable[[np.ndarray], np.ndarray] | None = None,
               constant: float = 0.0) -> OutlierMask:
    """Mask the points where ``predicate`` holds.

    ``predicate`` receives a ``(len(variables), n)`` array and returns a
    boolean array of length ``n``; the default marks points where every
    listed variable is exactly zero.
    """
    if not variables:
        raise CodecError("build_mask needs at least one variable")
    n = variables[0].n
    for var in variables:
        if var.n != n:
            raise CodecError(f"length mismatch: {variables[0].name!r} has {n} points, "
                             f"{var.name!r} has {var.n}")
    stack = np.stack([v.values for v in variables])
    bits = (predicate or _all_zero)(stack)
    return OutlierMask(np.asarray(bits, dtype=bool), constant)


class Decoder(Protocol):
    def consume(self, seg_id: int, payload: bytes) -> None: ...

    def values(self) -> np.ndarray: ...


class Codec(Protocol):
    kind: str
    prefix: bool

    def encode(self, values: np.ndarray, center: float, config: dict) -> tuple[list[Segment], dict]: ...

    def decoder(self, meta: dict, n: int, center: float) -> Decoder: ...


_CODECS: dict[str, Codec] = {}


def register_codec(codec: Codec) -> Codec:
    _CODECS[codec.kind] = codec
    return codec


def get_codec(kind: str) -> Codec:
    try:
        return _CODECS[kind]
    except KeyError:
        raise CodecError(f"unknown codec {kind!r} (have {sorted(_CODECS)})") from None


def codec_kinds() -> list[str]:
    return sorted(_CODECS)


def _midpoint(vmin: float, vmax: float) -> tuple[float, float]:
    mid = 0.5 * vmin + 0.5 * vmax
    spread = max(vmax - mid, mid - vmin)
    return mid, spread * guard_factor(4)


def refactor_variable(var: VariableData, codec: str, mask: OutlierMask | None = None,
                      config: dict | None = None) -> tuple[VariableRecord, list[Segment]]:
    """Split ``var`` into progressive segments with the named codec."""
    impl = get_codec(codec)
    config = dict(config or {})
    if mask is not None:
        if mask.bits.size != var.n:
            raise CodecError(f"mask has {mask.bits.size} bits but {var.name!r} has {var.n} points")
        hidden = var.values[mask.bits]
        if np.any(hidden != mask.constant):
            j = int(np.flatnonzero(mask.bits)[np.flatnonzero(hidden != mask.constant)[0]])
            raise CodecError(f"{var.name!r}[{j}] = {var.values[j]!r} is masked but differs "
                             f"from the mask constant {mask.constant!r}")
        kept = var.values[~mask.bits]
        masked, constant = mask.count, float(mask.constant)
    else:
        kept, masked, constant = var.values, 0, 0.0

    def record(vmin, vmax, init_value, init_bound, segments, meta):
        infos = [SegmentInfo(s.id, len(s.payload), float(s.nominal_bound), "") for s in segments]
        return VariableRecord(var.name, codec, var.n, tuple(var.dims), vmin, vmax, init_value,
                              init_bound, infos, meta, constant, masked)

    if kept.size == 0:
        return record(None, None, constant, 0.0, [], {}), []
    vmin, vmax = float(kept.min()), float(kept.max())
    mid, spread = _midpoint(vmin, vmax)
    if vmin == vmax:
        seg = Segment(0, b"", 0.0)
        return record(vmin, vmax, mid, 0.0, [seg], {"constant": True}), [seg]
    segments, meta = impl.encode(kept, mid, config)
    bounds = [s.nominal_bound for s in segments]
    if not segments or any(b1 <= b2 for b1, b2 in zip(bounds, bounds[1:])):
        raise CodecError(f"{codec} produced a non-decreasing bound sequence for {var.name!r}")
    return record(vmin, vmax, mid, spread, segments, meta), segments


@dataclass
class RetrievalState:
    """Progress of one variable's reconstruction."""

    record: VariableRecord
    values: np.ndarray
    achieved_bound: float
    cursor: int = 0
    consumed: list[int] = field(default_factory=list)
    bytes_read: int = 0
    at_full_fidelity: bool = False
    _decoder: object = field(default=None, repr=False)
    _mask: np.ndarray | None = field(default=None, repr=False)

    @property
    def name(self) -> str:
        return self.record.name


def new_state(record: VariableRecord, mask: OutlierMask | None = None) -> RetrievalState:
    """State before any segment is read: the midpoint everywhere."""
    values = np.full(record.n, record.init_value, dtype=np.float64)
    bits = None
    if record.has_mask:
        if mask is None or mask.count != record.masked_count:
            raise CodecError(f"{record.name!r} needs its {record.masked_count}-point mask")
        bits = mask.bits
        values[bits] = record.mask_constant
    state = RetrievalState(record, values, record.init_bound, _mask=bits)
    state.at_full_fidelity = state.achieved_bound <= record.floor
    return state


def plan(record: VariableRecord, target_eps: float, state: RetrievalState | None = None
         ) -> tuple[list[int], bool]:
    """Segment ids that :func:`reconstruct` would read, and whether the result
    is the store's full fidelity.  Pure."""
    if math.isnan(target_eps) or target_eps < 0:
        raise CodecError(f"target bound must be >= 0, got {target_eps!r}")
    cursor = state.cursor if state is not None else 0
    current = state.achieved_bound if state is not None else record.init_bound
    floor = record.floor
    if current <= target_eps:
        return [], current <= floor
    segs = record.segments
    j = next((i for i in range(cursor, len(segs)) if segs[i].nominal_bound <= target_eps), None)
    full = j is None or segs[j].nominal_bound <= floor
    if j is None:
        j = len(segs) - 1
        if j < cursor:
            return [], True
    prefix = get_codec(record.codec).prefix if not record.meta.get("constant") else True
    return (list(range(cursor, j + 1)) if prefix else [j]), full


def reconstruct(state: RetrievalState, store, target_eps: float) -> RetrievalState:
    """Read the fewest further segments that bring ``state`` within
    ``target_eps``, or everything left if that is impossible."""
    ids, full = plan(state.record, target_eps, state)
    state.at_full_fidelity = full
    if not ids:
        return state
    record = state.record
    if state._decoder is None:
        kept = record.n - record.masked_count
        if record.meta.get("constant"):
            state._decoder = _ConstantDecoder(kept, record.init_value)
        else:
            state._decoder = get_codec(record.codec).decoder(record.meta, kept, record.init_value)
    for seg_id in ids:
        payload = store.read_segment(record.name, seg_id)
        state._decoder.consume(seg_id, payload)
        state.bytes_read += len(payload)
        state.consumed.append(seg_id)
    recon = state._decoder.values()
    if state._mask is not None:
        state.values[~state._mask] = recon
    else:
        state.values = np.array(recon, dtype=np.float64, copy=True)
    state.cursor = ids[-1] + 1
    state.achieved_bound = record.segments[ids[-1]].nominal_bound
    return state


class _ConstantDecoder:
    def __init__(self, n, value):
        self._values = np.full(n, value)

    def consume(self, seg_id, payload):
        if payload:
            raise CodecError("constant-variable segment must be empty")

    def values(self):
        return self._values
