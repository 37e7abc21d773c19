import numpy as np

from proqoi.codec import MemoryStore, new_state, reconstruct, refactor_variable


def make_store(var, codec, mask=None, config=None):
    rec, segs = refactor_variable(var, codec, mask, config)
    return rec, MemoryStore([rec], {var.name: segs}, {var.name: mask} if mask is not None else None)


def prefix_errors(var, codec, mask=None, config=None):
    """(nominal bound, measured L-inf over unmasked points, values) after each
    segment, read the way the retriever reads them."""
    rec, store = make_store(var, codec, mask, config)
    keep = np.ones(var.n, dtype=bool) if mask is None else ~mask.bits
    out = []
    state = new_state(rec, mask) if codec != "snapshot" else None
    for info in rec.segments:
        if codec == "snapshot":
            state = new_state(rec, mask)
        reconstruct(state, store, info.nominal_bound)
        err = float(np.max(np.abs(state.values[keep] - var.values[keep]))) if keep.any() else 0.0
        out.append((info.nominal_bound, err, state.values.copy()))
    return rec, out
