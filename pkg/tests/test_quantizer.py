import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inrcompress.errors import BitsOutOfRange, CorruptCodes, CorruptPackage
from inrcompress.quantizer import (
    HEADER_SIZE,
    QuantizedBlob,
    dequantize,
    pack_codes,
    packed_size,
    quantize,
    unpack_codes,
)


def test_pack_lsb_first():
    # codes 1, 2, 3 at 2 bits -> bits 10 01 11 -> byte 0b00111001
    assert pack_codes([1, 2, 3], 2) == bytes([0b00111001])
    assert unpack_codes(bytes([0b00111001]), 2, 3).tolist() == [1, 2, 3]


@given(st.integers(2, 16), st.lists(st.integers(0, 2**16 - 1), min_size=1, max_size=60))
def test_pack_round_trip(bits, raw):
    codes = np.array(raw) % (1 << bits)
    buf = pack_codes(codes, bits)
    assert len(buf) == (len(raw) * bits + 7) // 8
    assert np.array_equal(unpack_codes(buf, bits, len(raw)), codes)


@pytest.mark.parametrize("bits", [2, 6, 8, 16])
def test_error_within_half_step(bits, rng):
    v = rng.normal(size=1000)
    blob = quantize(v, bits)
    err = np.abs(dequantize(blob) - v)
    assert err.max() <= blob.scale / 2 + 1e-7
    assert blob.codes.max() < (1 << bits)


def test_blob_bytes_round_trip(rng):
    blob = quantize(rng.normal(size=37), 6)
    buf = blob.to_bytes()
    assert len(buf) == packed_size(37, 6) == HEADER_SIZE + 28
    back, end = QuantizedBlob.from_bytes(buf)
    assert end == len(buf)
    assert np.array_equal(back.codes, blob.codes)
    assert back.scale == blob.scale and back.zero_point == blob.zero_point
    with pytest.raises(CorruptPackage):
        QuantizedBlob.from_bytes(buf[:-1])


def test_constant_and_bad_input():
    blob = quantize(np.full(5, 0.25), 8)
    assert blob.scale == 0.0 and np.all(dequantize(blob) == 0.25)
    with pytest.raises(BitsOutOfRange):
        quantize(np.ones(3), 1)
    with pytest.raises(BitsOutOfRange):
        quantize(np.ones(3), 17)
    bad = QuantizedBlob(2, 1.0, 0.0, np.array([0, 4]), 2)
    with pytest.raises(CorruptCodes):
        dequantize(bad)
