import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from codec_helpers import make_store, prefix_errors
from proqoi.codec import CodecError, VariableData, new_state, reconstruct
from proqoi.codec.snapshot import (LadderExhausted, QuantizationError, SnapshotLadder, build_snapshots,
                                   decode_block, default_ladder, dequantize, encode_block, parse_ladder,
                                   quantize, select_snapshot)


def test_quantize_hand_example():
    block = quantize(np.array([0.0, 0.30]), 0.05)
    assert block.offset == 0.0 and block.width == pytest.approx(0.1)
    assert int(block.codes[1]) == 3
    assert dequantize(block)[1] == pytest.approx(0.30, abs=1e-15)


def test_loose_bound_gives_equal_codes():
    x = np.array([1.0, 1.2, 1.4])
    block = quantize(x, 10.0)
    assert np.all(block.codes == block.codes[0])
    assert np.max(np.abs(dequantize(block) - x)) <= 10.0


def test_round_trip_on_a_million_values():
    x = np.random.default_rng(0).uniform(-1e4, 1e4, 1_000_000)
    for eps in (1.0, 1e-3, 1e-7):
        block = quantize(x, eps)
        assert np.max(np.abs(dequantize(block) - x)) <= eps
        assert block.bitwidth == int(block.codes.max()).bit_length()


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e8, 1e8)),
       st.floats(1e-6, 1e3))
def test_quantize_bound_property(x, eps):
    try:
        block = quantize(x, eps)
    except QuantizationError:
        return
    assert np.max(np.abs(dequantize(block) - x)) <= eps
    _, again = decode_block(encode_block(block, 0))
    np.testing.assert_array_equal(dequantize(again), dequantize(block))


def test_quantize_rejects_degenerate_bounds():
    with pytest.raises(QuantizationError):
        quantize(np.array([0.0, 1e10]), 1e-12)  # codes would need more than 63 bits
    with pytest.raises(QuantizationError):
        quantize(np.array([1.0]), 0.0)
    with pytest.raises(QuantizationError, match="certify"):
        quantize(np.random.default_rng(0).uniform(0, 1, 100), 1e-16)  # below float64 resolution


def test_select_snapshot_examples():
    ladder = parse_ladder("1e-1..1e-10", "independent")
    assert select_snapshot(ladder, 3e-4) == [3]  # fourth rung
    assert select_snapshot(ladder, 1e-1) == [0]
    with pytest.raises(LadderExhausted):
        select_snapshot(ladder, 1e-12)
    delta = parse_ladder("1e-1..1e-10", "delta")
    assert select_snapshot(delta, 3e-4) == [0, 1, 2, 3]
    assert select_snapshot(ladder, 3e-4, value_range=10.0) == [4]


def test_stair_case_bytes():
    t = np.linspace(0, 1, 2000)
    var = VariableData("s", np.sin(7 * t))
    rec, store = make_store(var, "snapshot")
    span = var.value_range()
    sizes = set()
    for target in np.linspace(1.01e-4, 9.9e-4, 7) * span:
        state = reconstruct(new_state(rec), store, target)
        sizes.add(state.bytes_read)
    assert len(sizes) == 1


def test_ladder_parsing_and_validation():
    assert parse_ladder("1e-2..1e-4", "delta").relative == (1e-2, 1e-3, 1e-4)
    assert parse_ladder("0.5,0.1,0.02", "independent").relative == (0.5, 0.1, 0.02)
    assert default_ladder().relative[-1] == 1e-10 and len(default_ladder().relative) == 10
    with pytest.raises(CodecError):
        parse_ladder("1e-4..1e-2", "delta")
    with pytest.raises(CodecError):
        parse_ladder("3e-2..1e-4", "delta")
    with pytest.raises(CodecError):
        SnapshotLadder((0.1, 0.1))
    with pytest.raises(CodecError):
        SnapshotLadder((0.1,), mode="sideways")


@pytest.mark.parametrize("mode", ["independent", "delta"])
def test_every_rung_meets_its_bound(mode):
    rng = np.random.default_rng(4)
    x = np.cumsum(rng.normal(0, 1, 10_000))
    span = float(np.ptp(x))
    ladder = default_ladder(mode)
    segments, kept = build_snapshots(x, ladder, span)
    assert len(kept) == 10
    recon = None
    for seg, eps in zip(segments, kept):
        rung, block = decode_block(seg.payload)
        recon = dequantize(block, recon if mode == "delta" else None)
        assert np.max(np.abs(recon - x)) <= eps


def test_ladder_stops_where_float64_cannot_certify():
    x = np.random.default_rng(5).uniform(0, 1, 1000)
    ladder = SnapshotLadder(tuple(10.0 ** -i for i in range(1, 19)))
    segments, kept = build_snapshots(x, ladder, float(np.ptp(x)))
    assert 12 <= len(kept) < 18
    assert kept == sorted(kept, reverse=True)


@pytest.mark.parametrize("codec", ["snapshot", "delta"])
def test_constant_input(codec):
    rec, _ = make_store(VariableData("c", [2.0] * 8), codec)
    assert len(rec.segments) == 1 and rec.segments[0].nominal_bound == 0.0


def test_constant_block_codes_are_zero():
    block = quantize(np.full(6, 3.5), 0.01)
    assert np.all(block.codes == 0) and block.bitwidth == 0


@pytest.mark.parametrize("codec", ["snapshot", "delta"])
def test_definition_one_through_store(codec):
    x = np.sin(np.linspace(0, 9, 7000)) * 40 + 5
    _, rows = prefix_errors(VariableData("s", x), codec)
    for bound, err, _ in rows:
        assert err <= bound


def test_delta_rungs_must_be_read_in_order():
    rec, store = make_store(VariableData("s", np.linspace(0, 1, 100)), "delta")
    from proqoi.codec import get_codec
    dec = get_codec("delta").decoder(rec.meta, 100, rec.init_value)
    with pytest.raises(CodecError):
        dec.consume(1, store.read_segment("s", 1))


def test_truncated_snapshot_payload():
    rec, store = make_store(VariableData("s", np.linspace(0, 1, 100)), "snapshot")
    store._payloads["s"][0] = store._payloads["s"][0][:-1]
    with pytest.raises(CodecError):
        reconstruct(new_state(rec), store, rec.segments[0].nominal_bound)
