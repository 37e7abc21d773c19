import numpy as np
import pytest
from hypothesis import given, strategies as st

from proqoi.codec.bitpack import pack_bits, pack_uint, packed_size, unpack_bits, unpack_uint


def test_bit_order_is_lsb_first():
    assert pack_bits([1, 0, 0, 0, 0, 0, 0, 0, 1]) == b"\x01\x01"
    assert pack_uint([1, 2], 2) == bytes([0b1001])
    assert pack_uint([5], 3) == b"\x05"


@given(st.integers(0, 64).flatmap(lambda w: st.tuples(
    st.just(w), st.lists(st.integers(0, (1 << w) - 1 if w else 0), max_size=300))))
def test_uint_round_trip(case):
    width, codes = case
    arr = np.array(codes, dtype=np.uint64)
    data = pack_uint(arr, width)
    assert len(data) == (packed_size(arr.size, width) if width else 0)
    np.testing.assert_array_equal(unpack_uint(data, arr.size, width), arr)


def test_round_trip_across_chunk_boundary():
    rng = np.random.default_rng(1)
    codes = rng.integers(0, 2**13, 200_003, dtype=np.uint64)
    np.testing.assert_array_equal(unpack_uint(pack_uint(codes, 13), codes.size, 13), codes)
    top = np.array([2**64 - 1, 0, 2**63], dtype=np.uint64)
    np.testing.assert_array_equal(unpack_uint(pack_uint(top, 64), 3, 64), top)


@given(st.lists(st.booleans(), max_size=200))
def test_bits_round_trip(bits):
    np.testing.assert_array_equal(unpack_bits(pack_bits(bits), len(bits)), np.array(bits, dtype=bool))


def test_errors():
    with pytest.raises(ValueError):
        pack_uint([4], 2)
    with pytest.raises(ValueError):
        pack_uint([1], 65)
    with pytest.raises(ValueError):
        unpack_uint(b"\x00", 3, 4)
    with pytest.raises(ValueError):
        unpack_bits(b"", 1)
