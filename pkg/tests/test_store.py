import json

import numpy as np
import pytest

from proqoi.codec import (CorruptStoreError, NotAStoreError, SegmentStore, StoreError, VariableData,
                          build_mask, new_state, read_manifest, reconstruct, refactor_variable, verify_store,
                          write_store)


def _write(tmp_path, codec="bitplane", masked=False):
    n = 3000
    t = np.linspace(0, 1, n)
    vx = np.sin(8 * t) * 20
    vy = np.cos(3 * t) * 5 + 1
    if masked:
        vx[100:300] = 0.0
        vy[100:300] = 0.0
    vars_ = [VariableData("Vx", vx), VariableData("Vy", vy)]
    mask = build_mask(vars_) if masked else None
    records, segments, masks = [], {}, {}
    for v in vars_:
        rec, segs = refactor_variable(v, codec, mask)
        records.append(rec)
        segments[v.name] = segs
        if mask is not None:
            masks[v.name] = mask
    root = write_store(tmp_path / "store", records, segments, masks)
    return root, records, vars_


@pytest.mark.parametrize("codec", ["bitplane", "snapshot", "delta"])
def test_manifest_round_trip(tmp_path, codec):
    root, records, _ = _write(tmp_path, codec)
    back = read_manifest(root)
    assert list(back) == ["Vx", "Vy"]
    for rec in records:
        assert back[rec.name] == rec
    verify_store(root)


def test_layout(tmp_path):
    root, records, _ = _write(tmp_path, masked=True)
    doc = json.loads((root / "manifest.json").read_text())
    assert doc["format"] == "proqoi-store" and doc["version"] == 1
    assert (root / "Vx" / "seg_0.bin").is_file()
    assert (root / "Vx" / "mask.bin").stat().st_size == (3000 + 7) // 8
    assert all(len(s["checksum"]) == 16 for s in doc["variables"][0]["segments"])


def test_reads_through_disk_store(tmp_path):
    root, records, vars_ = _write(tmp_path, masked=True)
    store = SegmentStore(root)
    state = new_state(store.record("Vx"), store.mask("Vx"))
    reconstruct(state, store, 1e-6)
    assert np.max(np.abs(state.values - vars_[0].values)) <= state.achieved_bound <= 1e-6
    assert np.all(state.values[100:300] == 0.0)
    assert store.bytes_read == state.bytes_read
    assert store.original_bytes == 2 * 8 * 3000


def test_empty_dir_is_not_a_store(tmp_path):
    with pytest.raises(NotAStoreError):
        read_manifest(tmp_path)
    (tmp_path / "manifest.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(NotAStoreError):
        SegmentStore(tmp_path)


def test_truncated_segment_names_the_file(tmp_path):
    root, _, _ = _write(tmp_path)
    path = root / "Vy" / "seg_2.bin"
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(CorruptStoreError, match="seg_2.bin"):
        read_manifest(root)


def test_flipped_byte_fails_checksum(tmp_path):
    root, _, _ = _write(tmp_path)
    path = root / "Vx" / "seg_1.bin"
    data = bytearray(path.read_bytes())
    data[-1] ^= 0xFF
    path.write_bytes(bytes(data))
    store = SegmentStore(root)  # sizes still match
    with pytest.raises(CorruptStoreError, match="checksum"):
        store.read_segment("Vx", 1)
    with pytest.raises(CorruptStoreError):
        verify_store(root)


def test_manifest_bound_monotonicity_checked(tmp_path):
    root, _, _ = _write(tmp_path)
    doc = json.loads((root / "manifest.json").read_text())
    segs = doc["variables"][0]["segments"]
    segs[1]["nominal_bound"] = segs[0]["nominal_bound"] * 2
    (root / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(CorruptStoreError, match="decreasing"):
        read_manifest(root)


def test_missing_file_and_bad_json(tmp_path):
    root, _, _ = _write(tmp_path)
    (root / "Vy" / "seg_0.bin").unlink()
    with pytest.raises(CorruptStoreError, match="missing"):
        read_manifest(root)
    (root / "manifest.json").write_text("{not json")
    with pytest.raises(CorruptStoreError):
        read_manifest(root)


def test_mask_popcount_checked(tmp_path):
    root, _, _ = _write(tmp_path, masked=True)
    path = root / "Vx" / "mask.bin"
    data = bytearray(path.read_bytes())
    data[0] ^= 0x01
    path.write_bytes(bytes(data))
    with pytest.raises(CorruptStoreError, match="bits set"):
        SegmentStore(root).mask("Vx")


def test_unknown_variable_and_segment(tmp_path):
    root, _, _ = _write(tmp_path)
    store = SegmentStore(root)
    with pytest.raises(StoreError):
        store.record("P")
    with pytest.raises(StoreError):
        store.read_segment("Vx", 10_000)


def test_write_rejects_bad_names(tmp_path):
    rec, segs = refactor_variable(VariableData("../x", [1.0, 2.0]), "bitplane")
    with pytest.raises(StoreError):
        write_store(tmp_path, [rec], {"../x": segs})
