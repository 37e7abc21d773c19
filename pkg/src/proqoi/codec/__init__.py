"""Progressive codecs and the segment store."""
from .core import (
    CodecError,
    OutlierMask,
    RetrievalState,
    Segment,
    SegmentInfo,
    VariableData,
    VariableRecord,
    build_mask,
    codec_kinds,
    get_codec,
    new_state,
    plan,
    reconstruct,
    refactor_variable,
)
from . import bitplane, snapshot  # noqa: F401  (registers the codecs)
from .store import (
    CorruptStoreError,
    MemoryStore,
    NotAStoreError,
    SegmentStore,
    StoreError,
    read_manifest,
    verify_store,
    write_store,
)

__all__ = [
    "CodecError",
    "OutlierMask",
    "RetrievalState",
    "Segment",
    "SegmentInfo",
    "VariableData",
    "VariableRecord",
    "build_mask",
    "codec_kinds",
    "get_codec",
    "new_state",
    "plan",
    "reconstruct",
    "refactor_variable",
    "CorruptStoreError",
    "MemoryStore",
    "NotAStoreError",
    "SegmentStore",
    "StoreError",
    "read_manifest",
    "verify_store",
    "write_store",
]
